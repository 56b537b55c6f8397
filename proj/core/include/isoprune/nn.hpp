#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "isoprune/data.hpp"
#include "isoprune/tensor.hpp"

namespace isoprune {

enum class LayerKind { dense, conv2d, relu, avgpool2x2, flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    // dense
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    // conv2d, stride 1, no padding
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 5;
    std::size_t kernel_w = 5;

    bool parameterized() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
};

enum class ArchId { MLP7_LINEAR, MLP7_RELU, LENET5_LINEAR, LENET5_RELU };

std::string to_string(ArchId arch);
ArchId parse_arch(const std::string& name);

struct Network {
    ArchId arch_id = ArchId::MLP7_LINEAR;
    std::vector<LayerSpec> layers;
    // Parallel to layers: weight tensor for dense/conv2d layers (dense is
    // out x in, conv is out x in x kh x kw), empty otherwise. No biases.
    std::vector<Tensor> params;

    std::vector<std::size_t> parameterized_indices() const;
    std::size_t parameter_count() const;
};

struct ForwardTrace {
    // layer_inputs[i] is the activation entering layer i (dense inputs are
    // already flattened to rank 2); size equals the layer count.
    std::vector<Tensor> layer_inputs;
    // The batch flattened to B x D_in.
    Tensor input;
};

struct Gradients {
    std::vector<Tensor> params;  // parallel to layers, empty for non-parameterized
    Tensor input;                // B x D_in
};

// MLP-7: dense 784->100, five dense 100->100, dense 100->10.
// LeNet-5: conv 1->6 (5x5), pool, conv 6->16 (5x5), pool, flatten (256),
// dense 256->120, dense 120->84, dense 84->10.
// _RELU variants insert relu after every parameterized layer except the last.
// Weights are zero until init_orthogonal runs.
Network build_network(ArchId arch);

// Replaces each weight matrix (conv reshaped to out x in*kh*kw) with an
// orthonormal-row matrix when rows <= cols, else orthonormal-column: sample
// i.i.d. standard Gaussians, QR-factorize along the smaller dimension, and
// fix signs by the diagonal of R. Layers feeding a relu are scaled by
// sqrt(2) so the end-to-end Jacobian stays near 1 despite rectification.
// Deterministic given the seed.
void init_orthogonal(Network& net, std::uint64_t seed);

// Accepts B x C x H x W batches, or B x D for networks that start with a
// dense layer.
std::pair<Tensor, ForwardTrace> forward(const Network& net, const Tensor& batch);

// Exact reverse-mode gradients for the trace's batch. grad_logits is B x C.
Gradients backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_logits);

// Mean cross-entropy over the batch with max-subtraction stabilization;
// gradient is (softmax - onehot)/B.
std::pair<double, Tensor> softmax_xent(const Tensor& logits, const std::vector<int>& labels);

// w <- w - lr*g, plain SGD.
void sgd_step(Network& net, const std::vector<Tensor>& grads, double lr);

// Argmax accuracy over the dataset; ties go to the lowest class index.
double evaluate(const Network& net, const Dataset& dataset);

}  // namespace isoprune
