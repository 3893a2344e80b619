#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hardnet/autodiff.hpp"

namespace hardnet::nn {

/// Fully connected ReLU network: affine layers with ReLU between them and a
/// linear output layer.
struct Mlp {
    std::vector<int> layer_sizes;
    std::vector<Matrix> weights;  // weights[k] is sizes[k+1] x sizes[k]
    std::vector<Vector> biases;
    std::uint64_t seed = 0;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return weights.size(); }
    std::size_t num_parameters() const;
};

/// Tape leaf ids for one binding of an Mlp's parameters.
struct MlpBinding {
    std::vector<ad::NodeId> weights;
    std::vector<ad::NodeId> biases;
};

/// Same layout as Mlp::weights / Mlp::biases.
struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static MlpGrads zeros_like(const Mlp& net);
    void add(const ad::Gradients& grads, const MlpBinding& binding);
};

/// He-initialized weights (normal, std sqrt(2 / fan_in)), zero biases.
Mlp mlp_new(const std::vector<int>& layer_sizes, std::uint64_t seed);

/// Registers the parameters as tape leaves. Bind once per tape and reuse the
/// binding for every sample evaluated on that tape.
MlpBinding bind(const Mlp& net, ad::Tape& tape);

ad::NodeId mlp_forward(const Mlp& net, const MlpBinding& binding, ad::NodeId input, ad::Tape& tape);

/// Tape-free forward pass for inference.
Vector mlp_eval(const Mlp& net, const Vector& input);

// Checkpoint text format, version 1:
//   HARDNET-MLP 1
//   seed <u64>
//   layers <L> <n0> <n1> ... <nL>
//   then for each layer k: "W <rows> <cols>" followed by rows lines of
//   whitespace-separated values (row-major), then "b <rows>" and one line.
// Values are written with 17 significant digits so a round trip is exact.
void save_checkpoint(const Mlp& net, std::ostream& out);
Mlp load_checkpoint(std::istream& in);
void save_checkpoint(const Mlp& net, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace hardnet::nn
