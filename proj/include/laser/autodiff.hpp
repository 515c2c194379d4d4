#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "laser/tensor.hpp"

namespace laser {

using NodeId = std::uint32_t;

// Single-threaded reverse-mode tape. Nodes are recorded in topological order;
// backward() walks them in reverse and fills adjoints for exactly the nodes
// reachable from the seed node. Backward closures receive the tape by
// reference so Tape stays movable.
class Tape {
public:
    NodeId leaf(Tensor value);
    NodeId linear(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId mean(const std::vector<NodeId>& xs);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId zeros_like(std::size_t rows, std::size_t cols);  // constant leaf of zeros
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    // loss must be scalar; throws ContractError otherwise
    void backward(NodeId loss);
    // seed an arbitrary node with an externally supplied adjoint (split protocol)
    void backward_from(NodeId node, const Tensor& adjoint_seed);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    // adjoint of a node; zeros if the node was not reached by the last backward
    Tensor adjoint(NodeId id) const;
    bool reached(NodeId id) const { return nodes_[id].reached; }
    std::size_t size() const { return nodes_.size(); }

    void accumulate_adjoint(NodeId id, const Tensor& g);
    void accumulate_adjoint_scaled(NodeId id, double a, const Tensor& g);

private:
    struct Node {
        Tensor value;
        Tensor adjoint;  // empty until touched
        bool reached = false;
        std::vector<NodeId> inputs;
        std::function<void(Tape&, NodeId)> backprop;  // empty for leaves
    };

    NodeId push(Tensor value, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> backprop);
    void run_backward(NodeId seed);
    void reset_adjoints();

    std::vector<Node> nodes_;
};

}  // namespace laser
