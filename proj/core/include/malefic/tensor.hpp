#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malefic/common.hpp"

namespace malefic::diff {

// Dense row-major tensor of doubles. Rank 0 (scalar) through rank 3
// (conv weights) is all the models need; there is no general broadcasting.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor from_vector(std::vector<double> v);
    static Tensor from_matrix(int64_t rows, int64_t cols, std::vector<double> v);

    bool empty() const { return shape_.empty() && data_.empty(); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t rows() const;
    int64_t cols() const;

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols_ + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols_ + c)]; }
    // rank-3 access with shape {d0, d1, d2}
    double& at3(int64_t i, int64_t j, int64_t k);
    double at3(int64_t i, int64_t j, int64_t k) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;
    void fill(double v);
    bool all_finite() const;

private:
    std::vector<int64_t> shape_;
    int64_t cols_ = 0;  // stride of the second-to-last axis for rank >= 2
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace malefic::diff
