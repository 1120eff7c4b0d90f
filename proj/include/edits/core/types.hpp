#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edits/core/error.hpp"

namespace edits {

using SampleId = std::uint64_t;
using ClassId = std::int32_t;

/// Dense row-major matrix. Storage precision is the template parameter;
/// reductions that feed results back into a Matrix accumulate in double.
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<T>>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_)
                throw Error(ErrorCode::shape_mismatch, "ragged rows in Matrix::from_rows");
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows_, cols_);
        auto dst = out.values();
        for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixD = Matrix<double>;
using MatrixF = Matrix<float>;

struct LatentShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t numel() const noexcept { return channels * height * width; }
    bool operator==(const LatentShape&) const = default;
};

inline std::string to_string(const LatentShape& s) {
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// channels x height x width tensor, row-major.
template <typename T>
struct Tensor {
    LatentShape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(LatentShape s, T fill = T{}) : shape(s), data(s.numel(), fill) {}
    Tensor(LatentShape s, std::vector<T> values) : shape(s), data(std::move(values)) {
        if (data.size() != shape.numel())
            throw Error(ErrorCode::shape_mismatch, "tensor data does not match shape " + to_string(shape));
    }

    bool operator==(const Tensor&) const = default;
};

using Latent = Tensor<float>;

/// One corpus item. Embedding vectors are empty until the stage that fills them.
struct SampleRecord {
    SampleId sample_id = 0;
    ClassId class_id = 0;
    std::string image_ref;
    std::optional<std::string> caption;
    std::optional<std::uint32_t> embedding_row;
    std::vector<double> f_v;
    std::vector<double> f_tau;
    std::vector<double> h;

    bool operator==(const SampleRecord&) const = default;
};

using Corpus = std::vector<SampleRecord>;

template <typename Range>
bool all_finite(const Range& values) {
    for (const auto v : values)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace edits
