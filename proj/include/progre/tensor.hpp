// Copyright 2026 The progre Authors
// Dense double-precision tensor used throughout the model and pipelines.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/rng.hpp"

namespace progre {

// Row-major dense tensor. Rank 1 and 2 cover almost everything; conv weights
// use rank 3 {out_channels, in_channels, kernel}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)),
          data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                                std::multiplies<>()),
                0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        std::size_t n = std::accumulate(shape_.begin(), shape_.end(),
                                        std::size_t{1}, std::multiplies<>());
        if (n != data_.size()) throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = stddev * rng.gaussian();
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : shape_[0]); }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // Rank-3 access, {d0, d1, d2}.
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "{";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << "}";
        return os.str();
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return HUGE_VAL;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace progre
