#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hardnet/tensor.hpp"

namespace hardnet::ad {

using NodeId = std::size_t;

enum class OpKind {
    leaf,
    constant,
    matmul,
    add,
    sub,
    mul,  // elementwise
    scale,
    relu,
    sin,
    cos,
    square,
    sum,
    concat,  // vertical stacking
    slice,   // contiguous row range
    custom,
};

const char* op_name(OpKind kind);

/// Maps the upstream gradient of a custom node to one gradient per input.
/// An empty matrix in the result means "no contribution".
using VjpFn = std::function<std::vector<Matrix>(const Matrix& upstream)>;

class Gradients {
public:
    Gradients(std::vector<Matrix> grads, std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes)
        : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

    /// Gradient with respect to a node; zeros when the node was not reached.
    Matrix wrt(NodeId id) const;
    bool reached(NodeId id) const { return grads_.at(id).size() > 0; }

private:
    std::vector<Matrix> grads_;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so every
/// input id is strictly smaller than the id of the node consuming it.
/// Not thread-safe; use one tape per thread.
class Tape {
public:
    NodeId leaf(Tensor value);
    /// Like leaf, but the backward pass never propagates into it.
    NodeId constant(Tensor value);

    /// Generic entry point for the parameterless op kinds.
    NodeId record(OpKind kind, std::span<const NodeId> inputs);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId relu(NodeId a);
    NodeId sin(NodeId a);
    NodeId cos(NodeId a);
    NodeId square(NodeId a);
    NodeId sum(NodeId a);
    NodeId concat(std::span<const NodeId> parts);
    NodeId concat(std::initializer_list<NodeId> parts) {
        return concat(std::span<const NodeId>(parts.begin(), parts.size()));
    }
    NodeId slice(NodeId a, Eigen::Index begin, Eigen::Index count);

    /// Node whose value is computed by the caller; vjp supplies the backward rule.
    NodeId custom(std::string name, std::vector<NodeId> inputs, Tensor value, VjpFn vjp);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
    std::size_t size() const { return nodes_.size(); }

    Gradients backward(NodeId output, const Tensor& seed) const;
    /// Seeds a 1x1 output with 1.
    Gradients backward(NodeId scalar_output) const;

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        bool needs_grad = false;
        double factor = 0.0;
        Eigen::Index begin = 0;
        std::string name;
        VjpFn vjp;
    };

    NodeId push(Node node);
    const Node& input(NodeId id) const;

    std::vector<Node> nodes_;
};

/// Central-difference Jacobian of a map between flattened (row-major) tensors.
/// Row i is output entry i, column j is input entry j.
Tensor finite_diff_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace hardnet::ad
