#include "hardnet/mlp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>

#include "hardnet/errors.hpp"

namespace hardnet::nn {

namespace {

constexpr const char* kMagic = "HARDNET-MLP";
constexpr int kVersion = 1;

void expect_token(std::istream& in, const std::string& want) {
    std::string got;
    if (!(in >> got) || got != want) {
        throw std::runtime_error("checkpoint: expected '" + want + "', got '" + got + "'");
    }
}

}  // namespace

std::size_t Mlp::num_parameters() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
    }
    return n;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
    MlpGrads g;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        g.weights.push_back(Matrix::Zero(net.weights[k].rows(), net.weights[k].cols()));
        g.biases.push_back(Vector::Zero(net.biases[k].size()));
    }
    return g;
}

void MlpGrads::add(const ad::Gradients& grads, const MlpBinding& binding) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (grads.reached(binding.weights[k])) weights[k] += grads.wrt(binding.weights[k]);
        if (grads.reached(binding.biases[k])) biases[k] += grads.wrt(binding.biases[k]);
    }
}

Mlp mlp_new(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("mlp_new: need at least input and output sizes");
    }
    for (int w : layer_sizes) {
        if (w < 1) throw std::invalid_argument("mlp_new: layer widths must be >= 1");
    }
    Mlp net;
    net.layer_sizes = layer_sizes;
    net.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const int fan_in = layer_sizes[k];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        Matrix w(layer_sizes[k + 1], fan_in);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vector::Zero(layer_sizes[k + 1]));
    }
    return net;
}

MlpBinding bind(const Mlp& net, ad::Tape& tape) {
    MlpBinding b;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        b.weights.push_back(tape.leaf(Tensor(net.weights[k])));
        b.biases.push_back(tape.leaf(Tensor(Matrix(net.biases[k]))));
    }
    return b;
}

ad::NodeId mlp_forward(const Mlp& net, const MlpBinding& binding, ad::NodeId input, ad::Tape& tape) {
    const Tensor& x = tape.value(input);
    if (!x.is_vector() || x.rows() != net.input_size()) {
        throw ShapeError("mlp_forward: input of shape " + shape_string(x.rows(), x.cols()) +
                         " for network with input width " + std::to_string(net.input_size()));
    }
    ad::NodeId h = input;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        h = tape.add(tape.matmul(binding.weights[k], h), binding.biases[k]);
        if (k + 1 < net.num_layers()) h = tape.relu(h);
    }
    return h;
}

Vector mlp_eval(const Mlp& net, const Vector& input) {
    if (input.size() != net.input_size()) {
        throw ShapeError("mlp_eval: input length " + std::to_string(input.size()) + " for input width " +
                         std::to_string(net.input_size()));
    }
    Vector h = input;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        h = net.weights[k] * h + net.biases[k];
        if (k + 1 < net.num_layers()) h = h.cwiseMax(0.0);
    }
    return h;
}

void save_checkpoint(const Mlp& net, std::ostream& out) {
    out << kMagic << ' ' << kVersion << '\n';
    out << "seed " << net.seed << '\n';
    out << "layers " << net.layer_sizes.size();
    for (int w : net.layer_sizes) out << ' ' << w;
    out << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        const Matrix& w = net.weights[k];
        out << "W " << w.rows() << ' ' << w.cols() << '\n';
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << w(r, c);
            out << '\n';
        }
        const Vector& b = net.biases[k];
        out << "b " << b.size() << '\n';
        for (Eigen::Index i = 0; i < b.size(); ++i) out << (i ? " " : "") << b(i);
        out << '\n';
    }
}

Mlp load_checkpoint(std::istream& in) {
    expect_token(in, kMagic);
    int version = 0;
    if (!(in >> version) || version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    Mlp net;
    expect_token(in, "seed");
    in >> net.seed;
    expect_token(in, "layers");
    std::size_t count = 0;
    in >> count;
    net.layer_sizes.resize(count);
    for (int& w : net.layer_sizes) in >> w;
    if (!in || count < 2) throw std::runtime_error("checkpoint: malformed layer header");
    for (std::size_t k = 0; k + 1 < count; ++k) {
        Eigen::Index rows = 0, cols = 0;
        expect_token(in, "W");
        in >> rows >> cols;
        if (rows != net.layer_sizes[k + 1] || cols != net.layer_sizes[k]) {
            throw std::runtime_error("checkpoint: layer " + std::to_string(k) + " has shape " +
                                     shape_string(rows, cols) + ", header implies " +
                                     shape_string(net.layer_sizes[k + 1], net.layer_sizes[k]));
        }
        Matrix w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) in >> w(r, c);
        }
        expect_token(in, "b");
        Eigen::Index n = 0;
        in >> n;
        if (n != rows) throw std::runtime_error("checkpoint: bias length mismatch in layer " + std::to_string(k));
        Vector b(n);
        for (Eigen::Index i = 0; i < n; ++i) in >> b(i);
        if (!in) throw std::runtime_error("checkpoint: truncated data in layer " + std::to_string(k));
        if (!w.allFinite() || !b.allFinite()) {
            throw std::runtime_error("checkpoint: non-finite parameter in layer " + std::to_string(k));
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

void save_checkpoint(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    save_checkpoint(net, out);
}

Mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    return load_checkpoint(in);
}

}  // namespace hardnet::nn
