#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace laser {

// Dense row-major tensor of doubles. 1-D and 2-D shapes are what the project
// uses; a scalar is shape {1}. Immutable-by-convention once handed to a tape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor row_major(std::size_t rows, std::size_t cols, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// --- kernels ---------------------------------------------------------------
// Shared by the value path and the tape ops so both produce identical bits.
// All reductions run left to right in index order.

// out[i,j] = sum_l x[i,l] * w[l,j] + b[j]
Tensor matmul_add(const Tensor& x, const Tensor& w, const Tensor& b);

// gradients of matmul_add given upstream g (same shape as output)
Tensor matmul_backward_x(const Tensor& g, const Tensor& w);
Tensor matmul_backward_w(const Tensor& x, const Tensor& g);
Tensor matmul_backward_b(const Tensor& g);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& g);  // derivative at 0 is 0

// elementwise mean of same-shaped tensors, left-to-right accumulation
Tensor mean_of(const std::vector<const Tensor*>& xs);

struct SoftmaxCrossEntropy {
    double loss = 0.0;
    Tensor softmax;  // cached for the backward pass
};

// mean over the batch of -log softmax(logits)[label], max-stabilized
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_cross_entropy_backward(const SoftmaxCrossEntropy& fwd, const std::vector<int>& labels,
                                      double upstream);

void add_inplace(Tensor& acc, const Tensor& x);
void axpy_inplace(Tensor& acc, double a, const Tensor& x);
Tensor scaled(const Tensor& x, double a);
double squared_norm(const Tensor& x);

}  // namespace laser
