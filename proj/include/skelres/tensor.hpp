#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "skelres/errors.hpp"

namespace skelres {

using Index = Eigen::Index;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using MatXRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Dense n-dimensional array with row-major flat storage.
///
/// Scalar is double while gradients are being checked and float while
/// training; everything downstream (layers, networks, the SGD loop) is
/// templated on it. The flat storage is an Eigen array so callers can do
/// elementwise math with expressions, and GEMM-shaped views are exposed
/// through Eigen maps.
template <typename Scalar>
class Tensor {
public:
    using Array = ArrX<Scalar>;

    Tensor() = default;

    explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
        data_ = Array::Zero(count(shape_));
    }

    Tensor(std::initializer_list<Index> shape) : Tensor(std::vector<Index>(shape)) {}

    static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<Index> shape, Scalar value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
    Index size() const { return data_.size(); }
    const std::vector<Index>& shape() const { return shape_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Array& flat() { return data_; }
    const Array& flat() const { return data_; }

    Scalar& operator()(Index i) { return data_[i]; }
    Scalar operator()(Index i) const { return data_[i]; }

    Scalar& operator()(Index i, Index j) { return data_[i * dim(1) + j]; }
    Scalar operator()(Index i, Index j) const { return data_[i * dim(1) + j]; }

    Scalar& operator()(Index n, Index c, Index h, Index w) {
        return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }
    Scalar operator()(Index n, Index c, Index h, Index w) const {
        return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }

    void reshape(std::vector<Index> shape) {
        if (count(shape) != size())
            throw ShapeError("reshape: element count mismatch (" + shape_string(shape_) +
                             " -> " + shape_string(shape) + ")");
        shape_ = std::move(shape);
    }

    /// Row-major matrix view over the flat data.
    Eigen::Map<MatXRM<Scalar>> as_matrix(Index rows, Index cols) {
        check_view(rows, cols);
        return Eigen::Map<MatXRM<Scalar>>(data(), rows, cols);
    }
    Eigen::Map<const MatXRM<Scalar>> as_matrix(Index rows, Index cols) const {
        check_view(rows, cols);
        return Eigen::Map<const MatXRM<Scalar>>(data(), rows, cols);
    }

    Eigen::Map<VecX<Scalar>> as_vector() { return Eigen::Map<VecX<Scalar>>(data(), size()); }
    Eigen::Map<const VecX<Scalar>> as_vector() const {
        return Eigen::Map<const VecX<Scalar>>(data(), size());
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        out.flat() = data_.template cast<Other>();
        return out;
    }

    bool all_finite() const { return data_.isFinite().all(); }

    static Index count(const std::vector<Index>& shape) {
        return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<Index>());
    }

    static std::string shape_string(const std::vector<Index>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }

private:
    void check_view(Index rows, Index cols) const {
        if (rows * cols != size())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " over " + std::to_string(size()) + " elements");
    }

    std::vector<Index> shape_;
    Array data_;
};

template <typename Scalar>
Tensor<Scalar> zeros_like(const Tensor<Scalar>& t) {
    return Tensor<Scalar>(t.shape());
}

}  // namespace skelres
