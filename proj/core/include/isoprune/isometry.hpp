#pragma once

#include <string>
#include <utility>
#include <vector>

#include "isoprune/nn.hpp"

namespace isoprune {

// Statistics of the pooled Jacobian singular values: K = min(C, D_in) values
// per sample, pooled over sample_count samples.
struct JsvReport {
    double mean = 0.0;
    double std_dev = 0.0;
    double max = 0.0;
    double min = 0.0;
    std::size_t k = 0;
    std::size_t sample_count = 0;

    std::size_t pooled_count() const { return k * sample_count; }
};

std::string jsv_csv_header();
std::string jsv_csv_row(const JsvReport& report);

// True when the network contains no nonlinearity layers.
bool is_linear(const Network& net);

// Jacobian of the logits with respect to the flattened input, C x D_in,
// assembled from C backward passes with one-hot seeds. Input is one sample
// (1 x C x H x W, C x H x W, 1 x D, or D).
Tensor jacobian(const Network& net, const Tensor& input);

// Pools svd_values(jacobian) over the sample set (S x 1 x 28 x 28 or S x D).
// Linear networks use a single sample after asserting input-independence.
JsvReport mean_jsv(const Network& net, const Tensor& inputs);

// Weight orthogonalization of every parameterized layer (conv reshaped to
// out x in*kh*kw): thin QR with the diagonal-sign fix; wide matrices go
// through the transpose so the rows come out orthonormal. Magnitudes are
// discarded. Returns a new network.
Network orthp(const Network& net);

// make_plan + apply_plan + mean_jsv per ratio; ratio 0 reports the unpruned
// network. Ratios use the architecture's default prune targets.
std::vector<std::pair<double, JsvReport>> jsv_sweep(const Network& pretrained,
                                                    const std::vector<double>& ratios,
                                                    const Tensor& inputs);

}  // namespace isoprune
