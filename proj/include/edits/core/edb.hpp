#pragma once

// Embedding block format (.edb), little-endian:
//   offset 0  char[4] magic "EDB1"
//   offset 4  u32     N (rows)
//   offset 8  u32     d (columns)
//   offset 12 u32     dtype tag (1 = IEEE-754 binary32)
//   offset 16 N*d binary32 values, row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>

#include "edits/core/fileio.hpp"
#include "edits/core/types.hpp"

namespace edits {

inline constexpr std::uint32_t kEdbDtypeFloat32 = 1;
inline constexpr std::size_t kEdbHeaderSize = 16;

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | in[offset + static_cast<std::size_t>(i)];
    return v;
}

}  // namespace detail

/// Serialize to the .edb byte layout. Values are narrowed to binary32; a value
/// that is non-finite before or after narrowing is rejected.
template <typename T>
Bytes encode_embedding_block(const Matrix<T>& m) {
    if (m.rows() == 0 || m.cols() == 0)
        throw Error(ErrorCode::invalid_argument, "embedding block needs N, d > 0");
    if (m.rows() > std::numeric_limits<std::uint32_t>::max() || m.cols() > std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorCode::invalid_argument, "embedding block dimensions exceed u32");
    const auto values = m.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(static_cast<float>(values[i])))
            throw Error(ErrorCode::non_finite, "entry " + std::to_string(i) + " is not finite as binary32");
    }
    Bytes out;
    out.reserve(kEdbHeaderSize + 4 * values.size());
    for (const char c : {'E', 'D', 'B', '1'}) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    detail::put_u32(out, kEdbDtypeFloat32);
    for (const auto v : values) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

inline MatrixF decode_embedding_block(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "EDB1", 4) != 0) {
        if (bytes.size() < 4) throw Error(ErrorCode::truncated_payload, "file shorter than the magic");
        throw Error(ErrorCode::bad_magic, "expected EDB1");
    }
    if (bytes.size() < kEdbHeaderSize) throw Error(ErrorCode::truncated_payload, "header incomplete");
    const std::uint32_t rows = detail::get_u32(bytes, 4);
    const std::uint32_t cols = detail::get_u32(bytes, 8);
    const std::uint32_t dtype = detail::get_u32(bytes, 12);
    if (dtype != kEdbDtypeFloat32)
        throw Error(ErrorCode::dtype_mismatch, "dtype tag " + std::to_string(dtype) + " is not binary32");
    if (rows == 0 || cols == 0) throw Error(ErrorCode::size_mismatch, "header declares an empty block");
    const std::uint64_t expected = kEdbHeaderSize + std::uint64_t{4} * rows * cols;
    if (bytes.size() < expected)
        throw Error(ErrorCode::truncated_payload, "have " + std::to_string(bytes.size()) + " bytes, header implies " +
                                                      std::to_string(expected));
    if (bytes.size() > expected)
        throw Error(ErrorCode::size_mismatch, "have " + std::to_string(bytes.size()) + " bytes, header implies " +
                                                  std::to_string(expected));
    MatrixF m(rows, cols);
    auto dst = m.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = std::bit_cast<float>(detail::get_u32(bytes, kEdbHeaderSize + 4 * i));
    return m;
}

/// Returns the number of bytes written (16 + 4*N*d).
template <typename T>
std::size_t write_embedding_block(const Matrix<T>& m, const fs::path& path) {
    const Bytes bytes = encode_embedding_block(m);
    write_file_atomic(path, bytes);
    return bytes.size();
}

inline MatrixF read_embedding_block(const fs::path& path) { return decode_embedding_block(read_file(path)); }

}  // namespace edits
