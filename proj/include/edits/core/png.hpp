#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <zlib.h>

#include "edits/core/hash.hpp"

namespace edits {

namespace detail {

inline void put_be32(Bytes& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_chunk(Bytes& out, std::string_view type, std::span<const std::uint8_t> data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type.begin(), type.end());
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// 8-bit grayscale PNG. An optional tEXt chunk carries provenance metadata.
inline Bytes encode_png_gray(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels,
                             std::string_view text_key = {}, std::string_view text_value = {}) {
    if (pixels.size() != width * height) throw Error(ErrorCode::shape_mismatch, "pixel count does not match size");
    Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    Bytes ihdr;
    detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
    detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // depth 8, grayscale, deflate, no filter, no interlace
    detail::put_chunk(out, "IHDR", ihdr);
    if (!text_key.empty()) {
        Bytes text(text_key.begin(), text_key.end());
        text.push_back(0);
        text.insert(text.end(), text_value.begin(), text_value.end());
        detail::put_chunk(out, "tEXt", text);
    }
    Bytes raw;
    raw.reserve(height * (width + 1));
    for (std::size_t y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * width),
                   pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * width));
    }
    uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
    Bytes packed(packed_len);
    if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw Error(ErrorCode::io, "zlib compression failed");
    packed.resize(packed_len);
    detail::put_chunk(out, "IDAT", packed);
    detail::put_chunk(out, "IEND", {});
    return out;
}

}  // namespace edits
