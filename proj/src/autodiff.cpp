#include "laser/autodiff.hpp"

#include <utility>

#include "laser/errors.hpp"

namespace laser {

NodeId Tape::push(Tensor value, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> backprop) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) { return push(std::move(value), {}, {}); }

NodeId Tape::zeros_like(std::size_t rows, std::size_t cols) { return leaf(Tensor::zeros(rows, cols)); }

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
    Tensor out = matmul_add(value(x), value(w), value(b));
    return push(std::move(out), {x, w, b}, [x, w, b](Tape& t, NodeId self) {
        const Tensor g = t.adjoint(self);
        t.accumulate_adjoint(x, matmul_backward_x(g, t.value(w)));
        t.accumulate_adjoint(w, matmul_backward_w(t.value(x), g));
        t.accumulate_adjoint(b, matmul_backward_b(g));
    });
}

NodeId Tape::relu(NodeId x) {
    Tensor out = laser::relu(value(x));
    return push(std::move(out), {x}, [x](Tape& t, NodeId self) {
        t.accumulate_adjoint(x, relu_backward(t.value(x), t.adjoint(self)));
    });
}

NodeId Tape::mean(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("mean: need at least one input node");
    std::vector<const Tensor*> vals;
    vals.reserve(xs.size());
    for (NodeId id : xs) vals.push_back(&value(id));
    Tensor out = mean_of(vals);
    const double inv = 1.0 / static_cast<double>(xs.size());
    return push(std::move(out), xs, [xs, inv](Tape& t, NodeId self) {
        const Tensor g = t.adjoint(self);
        for (NodeId id : xs) t.accumulate_adjoint_scaled(id, inv, g);
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    Tensor out = value(a);
    add_inplace(out, value(b));
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor g = t.adjoint(self);
        t.accumulate_adjoint(a, g);
        t.accumulate_adjoint(b, g);
    });
}

NodeId Tape::scale(NodeId x, double c) {
    return push(scaled(value(x), c), {x}, [x, c](Tape& t, NodeId self) {
        t.accumulate_adjoint_scaled(x, c, t.adjoint(self));
    });
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    SoftmaxCrossEntropy fwd = laser::softmax_cross_entropy(value(logits), labels);
    Tensor out = Tensor::scalar(fwd.loss);
    Tensor cached = std::move(fwd.softmax);
    return push(std::move(out), {logits},
                [logits, cached = std::move(cached), labels = std::move(labels)](Tape& t, NodeId self) {
                    SoftmaxCrossEntropy f;
                    f.softmax = cached;
                    const double upstream = t.adjoint(self)[0];
                    t.accumulate_adjoint(logits, softmax_cross_entropy_backward(f, labels, upstream));
                });
}

void Tape::accumulate_adjoint(NodeId id, const Tensor& g) {
    Node& n = nodes_[id];
    if (n.adjoint.empty()) n.adjoint = Tensor(n.value.shape());
    add_inplace(n.adjoint, g);
    n.reached = true;
}

void Tape::accumulate_adjoint_scaled(NodeId id, double a, const Tensor& g) {
    Node& n = nodes_[id];
    if (n.adjoint.empty()) n.adjoint = Tensor(n.value.shape());
    axpy_inplace(n.adjoint, a, g);
    n.reached = true;
}

void Tape::reset_adjoints() {
    for (Node& n : nodes_) {
        n.adjoint = Tensor();
        n.reached = false;
    }
}

void Tape::run_backward(NodeId seed) {
    // reverse recording order; nodes are topologically ordered by construction
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const NodeId id = static_cast<NodeId>(i);
        if (id > seed) continue;
        Node& n = nodes_[id];
        if (!n.reached || !n.backprop) continue;
        n.backprop(*this, id);
    }
}

void Tape::backward(NodeId loss) {
    if (value(loss).numel() != 1)
        throw ContractError("backward: loss node must be scalar, got " + value(loss).shape_str());
    reset_adjoints();
    Tensor seed(value(loss).shape());
    seed[0] = 1.0;
    accumulate_adjoint(loss, seed);
    run_backward(loss);
}

void Tape::backward_from(NodeId node, const Tensor& adjoint_seed) {
    if (!value(node).same_shape(adjoint_seed))
        throw DimensionError("backward_from: adjoint " + adjoint_seed.shape_str() + " does not match node " +
                             value(node).shape_str());
    reset_adjoints();
    accumulate_adjoint(node, adjoint_seed);
    run_backward(node);
}

Tensor Tape::adjoint(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.adjoint.empty()) return Tensor(n.value.shape());
    return n.adjoint;
}

}  // namespace laser
