#include "laser/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "laser/errors.hpp"

namespace laser {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + laser::shape_str(shape));
        n *= d;
    }
    return shape.empty() ? 0 : n;
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != data.size())
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             laser::shape_str(shape_));
    data_ = std::move(data);
}

Tensor Tensor::row_major(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw DimensionError("expected a 2-D tensor, got " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw DimensionError("expected a 2-D tensor, got " + shape_str());
    return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const { return laser::shape_str(shape_); }

Tensor matmul_add(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t rows = x.rows(), inner = x.cols();
    const std::size_t out_cols = w.cols();
    if (w.rows() != inner)
        throw DimensionError("matmul inner dimensions differ: " + x.shape_str() + " vs " + w.shape_str());
    if (b.numel() != out_cols)
        throw DimensionError("bias " + b.shape_str() + " does not match output width " + std::to_string(out_cols));
    Tensor out({rows, out_cols});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < out_cols; ++j) {
            double acc = b[j];
            for (std::size_t l = 0; l < inner; ++l) acc += x.at(i, l) * w.at(l, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor matmul_backward_x(const Tensor& g, const Tensor& w) {
    const std::size_t rows = g.rows(), out_cols = g.cols(), inner = w.rows();
    Tensor gx({rows, inner});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t l = 0; l < inner; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < out_cols; ++j) acc += g.at(i, j) * w.at(l, j);
            gx.at(i, l) = acc;
        }
    return gx;
}

Tensor matmul_backward_w(const Tensor& x, const Tensor& g) {
    const std::size_t rows = x.rows(), inner = x.cols(), out_cols = g.cols();
    Tensor gw({inner, out_cols});
    for (std::size_t l = 0; l < inner; ++l)
        for (std::size_t j = 0; j < out_cols; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i) acc += x.at(i, l) * g.at(i, j);
            gw.at(l, j) = acc;
        }
    return gw;
}

Tensor matmul_backward_b(const Tensor& g) {
    const std::size_t rows = g.rows(), out_cols = g.cols();
    Tensor gb({out_cols});
    for (std::size_t j = 0; j < out_cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += g.at(i, j);
        gb[j] = acc;
    }
    return gb;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& g) {
    if (!x.same_shape(g))
        throw DimensionError("relu_backward shapes differ: " + x.shape_str() + " vs " + g.shape_str());
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
    return out;
}

Tensor mean_of(const std::vector<const Tensor*>& xs) {
    if (xs.empty()) throw ContractError("mean_of: need at least one tensor");
    Tensor out(xs[0]->shape());
    for (const Tensor* x : xs) {
        if (!x->same_shape(out))
            throw DimensionError("mean_of shapes differ: " + out.shape_str() + " vs " + x->shape_str());
        add_inplace(out, *x);
    }
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return out;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t rows = logits.rows(), classes = logits.cols();
    if (labels.size() != rows)
        throw DimensionError("labels length " + std::to_string(labels.size()) + " does not match batch " +
                             std::to_string(rows));
    if (rows == 0) throw InputError("softmax_cross_entropy: empty batch");
    SoftmaxCrossEntropy out;
    out.softmax = Tensor({rows, classes});
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw InputError("label " + std::to_string(y) + " out of range [0," + std::to_string(classes) + ")");
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(logits.at(i, j) - mx);
        for (std::size_t j = 0; j < classes; ++j) out.softmax.at(i, j) = std::exp(logits.at(i, j) - mx) / denom;
        total += std::log(denom) - (logits.at(i, static_cast<std::size_t>(y)) - mx);
    }
    out.loss = total / static_cast<double>(rows);
    return out;
}

Tensor softmax_cross_entropy_backward(const SoftmaxCrossEntropy& fwd, const std::vector<int>& labels,
                                      double upstream) {
    const std::size_t rows = fwd.softmax.rows(), classes = fwd.softmax.cols();
    Tensor g({rows, classes});
    const double scale = upstream / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < classes; ++j) {
            const double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
            g.at(i, j) = scale * (fwd.softmax.at(i, j) - onehot);
        }
    return g;
}

void add_inplace(Tensor& acc, const Tensor& x) {
    if (!acc.same_shape(x))
        throw DimensionError("add shapes differ: " + acc.shape_str() + " vs " + x.shape_str());
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += x[i];
}

void axpy_inplace(Tensor& acc, double a, const Tensor& x) {
    if (!acc.same_shape(x))
        throw DimensionError("axpy shapes differ: " + acc.shape_str() + " vs " + x.shape_str());
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += a * x[i];
}

Tensor scaled(const Tensor& x, double a) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = a * x[i];
    return out;
}

double squared_norm(const Tensor& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i] * x[i];
    return acc;
}

}  // namespace laser
