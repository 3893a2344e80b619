#include "hardnet/autodiff.hpp"

#include <cmath>

#include "hardnet/errors.hpp"

namespace hardnet::ad {

namespace {

std::string shape_of(const Tensor& t) { return shape_string(t.rows(), t.cols()); }

[[noreturn]] void shape_mismatch(OpKind kind, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

void accumulate(Matrix& into, const Matrix& contribution) {
    if (into.size() == 0) {
        into = contribution;
    } else {
        into += contribution;
    }
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::constant: return "constant";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::relu: return "relu";
        case OpKind::sin: return "sin";
        case OpKind::cos: return "cos";
        case OpKind::square: return "square";
        case OpKind::sum: return "sum";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::custom: return "custom";
    }
    return "unknown";
}

Matrix Gradients::wrt(NodeId id) const {
    const Matrix& g = grads_.at(id);
    if (g.size() == 0) {
        return Matrix::Zero(shapes_[id].first, shapes_[id].second);
    }
    return g;
}

NodeId Tape::push(Node node) {
    for (NodeId in : node.inputs) {
        if (in >= nodes_.size()) {
            throw std::out_of_range(std::string(op_name(node.kind)) + ": input node " + std::to_string(in) +
                                    " does not exist yet");
        }
        node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
    }
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

const Tape::Node& Tape::input(NodeId id) const {
    if (id >= nodes_.size()) {
        throw std::out_of_range("node " + std::to_string(id) + " does not exist");
    }
    return nodes_[id];
}

NodeId Tape::leaf(Tensor value) {
    return push(Node{OpKind::leaf, {}, std::move(value), true});
}

NodeId Tape::constant(Tensor value) {
    return push(Node{OpKind::constant, {}, std::move(value), false});
}

NodeId Tape::record(OpKind kind, std::span<const NodeId> inputs) {
    auto arity = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                                        " inputs, got " + std::to_string(inputs.size()));
        }
    };
    switch (kind) {
        case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
        case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
        case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
        case OpKind::mul: arity(2); return mul(inputs[0], inputs[1]);
        case OpKind::relu: arity(1); return relu(inputs[0]);
        case OpKind::sin: arity(1); return sin(inputs[0]);
        case OpKind::cos: arity(1); return cos(inputs[0]);
        case OpKind::square: arity(1); return square(inputs[0]);
        case OpKind::sum: arity(1); return sum(inputs[0]);
        case OpKind::concat: return concat(inputs);
        default:
            throw std::invalid_argument(std::string("record: op ") + op_name(kind) +
                                        " needs parameters; use its dedicated method");
    }
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = input(a).value;
    const Tensor& vb = input(b).value;
    if (va.cols() != vb.rows()) shape_mismatch(OpKind::matmul, va, vb);
    return push(Node{OpKind::matmul, {a, b}, Tensor(Matrix(va.matrix() * vb.matrix()))});
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = input(a).value;
    const Tensor& vb = input(b).value;
    if (!va.same_shape(vb)) shape_mismatch(OpKind::add, va, vb);
    return push(Node{OpKind::add, {a, b}, Tensor(Matrix(va.matrix() + vb.matrix()))});
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = input(a).value;
    const Tensor& vb = input(b).value;
    if (!va.same_shape(vb)) shape_mismatch(OpKind::sub, va, vb);
    return push(Node{OpKind::sub, {a, b}, Tensor(Matrix(va.matrix() - vb.matrix()))});
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = input(a).value;
    const Tensor& vb = input(b).value;
    if (!va.same_shape(vb)) shape_mismatch(OpKind::mul, va, vb);
    return push(Node{OpKind::mul, {a, b}, Tensor(Matrix(va.matrix().cwiseProduct(vb.matrix())))});
}

NodeId Tape::scale(NodeId a, double factor) {
    Node n{OpKind::scale, {a}, Tensor(Matrix(input(a).value.matrix() * factor))};
    n.factor = factor;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    return push(Node{OpKind::relu, {a}, Tensor(Matrix(input(a).value.matrix().cwiseMax(0.0)))});
}

NodeId Tape::sin(NodeId a) {
    return push(Node{OpKind::sin, {a}, Tensor(Matrix(input(a).value.matrix().array().sin().matrix()))});
}

NodeId Tape::cos(NodeId a) {
    return push(Node{OpKind::cos, {a}, Tensor(Matrix(input(a).value.matrix().array().cos().matrix()))});
}

NodeId Tape::square(NodeId a) {
    return push(Node{OpKind::square, {a}, Tensor(Matrix(input(a).value.matrix().array().square().matrix()))});
}

NodeId Tape::sum(NodeId a) {
    return push(Node{OpKind::sum, {a}, Tensor::scalar(input(a).value.matrix().sum())});
}

NodeId Tape::concat(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Eigen::Index cols = input(parts[0]).value.cols();
    Eigen::Index rows = 0;
    for (NodeId p : parts) {
        const Tensor& v = input(p).value;
        if (v.cols() != cols) shape_mismatch(OpKind::concat, input(parts[0]).value, v);
        rows += v.rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (NodeId p : parts) {
        const Matrix& m = nodes_[p].value.matrix();
        out.middleRows(r, m.rows()) = m;
        r += m.rows();
    }
    return push(Node{OpKind::concat, {parts.begin(), parts.end()}, Tensor(std::move(out))});
}

NodeId Tape::slice(NodeId a, Eigen::Index begin, Eigen::Index count) {
    const Tensor& va = input(a).value;
    if (begin < 0 || count < 0 || begin + count > va.rows()) {
        throw ShapeError("slice: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for shape " + shape_of(va));
    }
    Node n{OpKind::slice, {a}, Tensor(Matrix(va.matrix().middleRows(begin, count)))};
    n.begin = begin;
    return push(std::move(n));
}

NodeId Tape::custom(std::string name, std::vector<NodeId> inputs, Tensor value, VjpFn vjp) {
    Node n{OpKind::custom, std::move(inputs), std::move(value)};
    n.name = std::move(name);
    n.vjp = std::move(vjp);
    return push(std::move(n));
}

Gradients Tape::backward(NodeId output) const {
    return backward(output, Tensor::scalar(1.0));
}

Gradients Tape::backward(NodeId output, const Tensor& seed) const {
    const Node& out = input(output);
    if (!seed.same_shape(out.value)) {
        throw ShapeError("backward: seed shape " + shape_of(seed) + " does not match output shape " +
                         shape_of(out.value));
    }
    std::vector<Matrix> grads(output + 1);
    grads[output] = seed.matrix();

    for (NodeId i = output + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.needs_grad || grads[i].size() == 0 || n.inputs.empty()) continue;
        const Matrix& g = grads[i];
        auto send = [&](std::size_t which, const Matrix& contribution) {
            NodeId target = n.inputs[which];
            if (nodes_[target].needs_grad) accumulate(grads[target], contribution);
        };
        switch (n.kind) {
            case OpKind::leaf:
            case OpKind::constant:
                break;
            case OpKind::matmul: {
                const Matrix& a = nodes_[n.inputs[0]].value.matrix();
                const Matrix& b = nodes_[n.inputs[1]].value.matrix();
                if (nodes_[n.inputs[0]].needs_grad) send(0, g * b.transpose());
                if (nodes_[n.inputs[1]].needs_grad) send(1, a.transpose() * g);
                break;
            }
            case OpKind::add:
                send(0, g);
                send(1, g);
                break;
            case OpKind::sub:
                send(0, g);
                send(1, -g);
                break;
            case OpKind::mul:
                send(0, g.cwiseProduct(nodes_[n.inputs[1]].value.matrix()));
                send(1, g.cwiseProduct(nodes_[n.inputs[0]].value.matrix()));
                break;
            case OpKind::scale:
                send(0, g * n.factor);
                break;
            case OpKind::relu: {
                // Subgradient 0 at the kink.
                const Matrix& x = nodes_[n.inputs[0]].value.matrix();
                send(0, (x.array() > 0.0).select(g.array(), 0.0).matrix());
                break;
            }
            case OpKind::sin:
                send(0, g.cwiseProduct(Matrix(nodes_[n.inputs[0]].value.matrix().array().cos().matrix())));
                break;
            case OpKind::cos:
                send(0, -g.cwiseProduct(Matrix(nodes_[n.inputs[0]].value.matrix().array().sin().matrix())));
                break;
            case OpKind::square:
                send(0, 2.0 * g.cwiseProduct(nodes_[n.inputs[0]].value.matrix()));
                break;
            case OpKind::sum: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                send(0, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                break;
            }
            case OpKind::concat: {
                Eigen::Index r = 0;
                for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                    const Eigen::Index rows = nodes_[n.inputs[k]].value.rows();
                    send(k, g.middleRows(r, rows));
                    r += rows;
                }
                break;
            }
            case OpKind::slice: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                Matrix full = Matrix::Zero(x.rows(), x.cols());
                full.middleRows(n.begin, g.rows()) = g;
                send(0, full);
                break;
            }
            case OpKind::custom: {
                std::vector<Matrix> parts = n.vjp(g);
                if (parts.size() != n.inputs.size()) {
                    throw std::logic_error("custom op '" + n.name + "' returned " + std::to_string(parts.size()) +
                                           " gradients for " + std::to_string(n.inputs.size()) + " inputs");
                }
                for (std::size_t k = 0; k < parts.size(); ++k) {
                    if (parts[k].size() == 0) continue;
                    const Tensor& x = nodes_[n.inputs[k]].value;
                    if (parts[k].rows() != x.rows() || parts[k].cols() != x.cols()) {
                        throw ShapeError("custom op '" + n.name + "': gradient shape " +
                                         shape_string(parts[k].rows(), parts[k].cols()) + " for input of shape " +
                                         shape_of(x));
                    }
                    send(k, parts[k]);
                }
                break;
            }
        }
    }

    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    shapes.reserve(nodes_.size());
    for (const Node& n : nodes_) shapes.emplace_back(n.value.rows(), n.value.cols());
    grads.resize(nodes_.size());
    return Gradients(std::move(grads), std::move(shapes));
}

Tensor finite_diff_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_jacobian: step must be positive");
    // Row-major flattening on both sides.
    auto flatten = [](const Tensor& t) {
        Vector v(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) v(i) = t[i];
        return v;
    };
    const Vector x0 = flatten(x);
    const Eigen::Index n = x0.size();
    Matrix jac;
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector xp = x0, xm = x0;
        xp(j) += h;
        xm(j) -= h;
        const Vector fp = flatten(f(Tensor::from_rows(x.rows(), x.cols(), {xp.data(), static_cast<std::size_t>(n)})));
        const Vector fm = flatten(f(Tensor::from_rows(x.rows(), x.cols(), {xm.data(), static_cast<std::size_t>(n)})));
        if (j == 0) jac.resize(fp.size(), n);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return Tensor(std::move(jac));
}

}  // namespace hardnet::ad
