#include "malefic/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace malefic::diff {

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int64_t d : shape_) {
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str());
        n *= d;
    }
    cols_ = shape_.empty() ? 0 : shape_.back();
    data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(std::vector<int64_t>{});
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    Tensor t;
    t.shape_ = {static_cast<int64_t>(v.size())};
    t.cols_ = t.shape_[0];
    t.data_ = std::move(v);
    if (t.data_.empty()) throw ShapeError("from_vector: empty vector");
    return t;
}

Tensor Tensor::from_matrix(int64_t rows, int64_t cols, std::vector<double> v) {
    if (static_cast<int64_t>(v.size()) != rows * cols)
        throw ShapeError("from_matrix: data size does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    Tensor t;
    t.shape_ = {rows, cols};
    t.cols_ = cols;
    t.data_ = std::move(v);
    return t;
}

int64_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor is not rank 2, shape " + shape_str());
    return shape_[0];
}

int64_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor is not rank 2, shape " + shape_str());
    return shape_[1];
}

double& Tensor::at3(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double Tensor::at3(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << "x";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace malefic::diff
