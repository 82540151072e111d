#pragma once

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <vector>

#include "postrain/common.hpp"

namespace postrain {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatD>;
using MapConstMat = Eigen::Map<const MatD>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using MapConstVec = Eigen::Map<const Eigen::VectorXd>;

// Row-major dense double tensor, the working type of the nn layers.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
        v_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
    }

    static long numel_of(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) n *= d;
        return n;
    }

    const std::vector<long>& shape() const { return shape_; }
    long dim(size_t i) const { return shape_[i]; }
    long numel() const { return static_cast<long>(v_.size()); }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& v() { return v_; }
    const std::vector<double>& v() const { return v_; }

    // Flat Eigen view over the whole tensor.
    MapVec vec() { return MapVec(v_.data(), numel()); }
    MapConstVec vec() const { return MapConstVec(v_.data(), numel()); }

    double& operator[](size_t i) { return v_[i]; }
    const double& operator[](size_t i) const { return v_[i]; }

    void zero() { std::fill(v_.begin(), v_.end(), 0.0); }
    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    // 2-D views (rows x cols must cover numel exactly).
    MapMat mat(long rows, long cols) { return MapMat(v_.data(), rows, cols); }
    MapConstMat mat(long rows, long cols) const { return MapConstMat(v_.data(), rows, cols); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void add(const Tensor& o) {
        for (size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    }

private:
    std::vector<long> shape_;
    std::vector<double> v_;
};

// A named trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, std::vector<long> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

using ParamRefs = std::vector<Param*>;

}  // namespace postrain
