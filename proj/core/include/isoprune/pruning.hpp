#pragma once

#include <string>
#include <utility>
#include <vector>

#include "isoprune/nn.hpp"

namespace isoprune {

// Pruning ratios keyed by parameterized-layer ordinal (0 = first
// weight-carrying layer). The final classifier layer may not be targeted.
struct PruneSpec {
    std::vector<std::pair<std::size_t, double>> layer_ratios;

    // One ratio applied to the architecture's default targets: the first six
    // dense layers for MLP-7; conv1, conv2 and the first dense layer for
    // LeNet-5.
    static PruneSpec uniform(ArchId arch, double ratio);
    static PruneSpec on_layers(const std::vector<std::size_t>& ordinals, double ratio);
};

std::vector<std::size_t> default_prune_targets(ArchId arch);

// Kept output-unit indices (ascending) per targeted parameterized-layer
// ordinal; layers without an entry keep all units.
struct PrunePlan {
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> kept;
    bool empty() const { return kept.empty(); }
};

// L1 norm of each output unit's fan-in (conv: over in_channels*kh*kw).
std::vector<double> score_l1(const Tensor& weight);

// Drops the floor(r*n) lowest-score units per target layer; ties drop the
// higher index.
PrunePlan make_plan(const Network& net, const PruneSpec& spec);

// Removes the dropped output rows/filters and the matching input
// columns/channels of the next parameterized layer; across a conv->flatten->
// dense boundary a dropped channel removes its whole spatial block of dense
// columns. Returns a standalone smaller network.
Network apply_plan(const Network& net, const PrunePlan& plan);

// Plain-text plan format: one "layer_index: i1,i2,..." line per entry.
std::string plan_to_text(const PrunePlan& plan);
PrunePlan plan_from_text(const std::string& text);
void save_plan(const std::string& path, const PrunePlan& plan);
PrunePlan load_plan(const std::string& path);

}  // namespace isoprune
