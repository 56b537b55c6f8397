#include "isoprune/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace isoprune {

std::vector<std::size_t> default_prune_targets(ArchId arch) {
    switch (arch) {
        case ArchId::MLP7_LINEAR:
        case ArchId::MLP7_RELU:
            return {0, 1, 2, 3, 4, 5};
        case ArchId::LENET5_LINEAR:
        case ArchId::LENET5_RELU:
            return {0, 1, 2};
    }
    throw std::invalid_argument("default_prune_targets: unknown arch id");
}

PruneSpec PruneSpec::uniform(ArchId arch, double ratio) {
    return on_layers(default_prune_targets(arch), ratio);
}

PruneSpec PruneSpec::on_layers(const std::vector<std::size_t>& ordinals, double ratio) {
    PruneSpec spec;
    for (std::size_t o : ordinals) spec.layer_ratios.emplace_back(o, ratio);
    return spec;
}

std::vector<double> score_l1(const Tensor& weight) {
    if (weight.empty()) {
        throw std::invalid_argument("score_l1: layer carries no weight tensor");
    }
    const std::size_t units = weight.dim(0);
    const std::size_t fan_in = weight.size() / units;
    std::vector<double> scores(units, 0.0);
    const double* data = weight.data();
    for (std::size_t u = 0; u < units; ++u) {
        double sum = 0.0;
        for (std::size_t k = 0; k < fan_in; ++k) sum += std::abs(data[u * fan_in + k]);
        scores[u] = sum;
    }
    return scores;
}

PrunePlan make_plan(const Network& net, const PruneSpec& spec) {
    const std::vector<std::size_t> param_idx = net.parameterized_indices();
    PrunePlan plan;

    std::vector<std::pair<std::size_t, double>> targets = spec.layer_ratios;
    std::sort(targets.begin(), targets.end());
    for (std::size_t k = 1; k < targets.size(); ++k) {
        if (targets[k].first == targets[k - 1].first) {
            throw std::invalid_argument("make_plan: duplicate target layer " +
                                        std::to_string(targets[k].first));
        }
    }

    for (const auto& [ordinal, ratio] : targets) {
        if (ordinal >= param_idx.size()) {
            throw std::invalid_argument("make_plan: layer " + std::to_string(ordinal) +
                                        " does not exist (network has " +
                                        std::to_string(param_idx.size()) +
                                        " parameterized layers)");
        }
        if (ordinal + 1 == param_idx.size()) {
            throw std::invalid_argument("make_plan: pruning the final classifier layer "
                                        "is forbidden");
        }
        if (!(ratio >= 0.0 && ratio < 1.0)) {
            throw std::invalid_argument("make_plan: ratio " + std::to_string(ratio) +
                                        " outside [0, 1)");
        }

        const std::vector<double> scores = score_l1(net.params[param_idx[ordinal]]);
        const std::size_t units = scores.size();
        const std::size_t drop_count =
            static_cast<std::size_t>(std::floor(ratio * static_cast<double>(units)));

        // Sort by score ascending; ties drop the higher index first.
        std::vector<std::size_t> order(units);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] < scores[b];
            return a > b;
        });

        std::vector<bool> dropped(units, false);
        for (std::size_t k = 0; k < drop_count; ++k) dropped[order[k]] = true;

        std::vector<std::size_t> kept;
        kept.reserve(units - drop_count);
        for (std::size_t u = 0; u < units; ++u) {
            if (!dropped[u]) kept.push_back(u);
        }
        plan.kept.emplace_back(ordinal, std::move(kept));
    }
    return plan;
}

namespace {

// Keeps rows of a (units x fan_in)-flattened weight.
Tensor keep_rows(const Tensor& w, const std::vector<std::size_t>& kept) {
    const std::size_t fan_in = w.size() / w.dim(0);
    Shape new_shape = w.shape();
    new_shape[0] = kept.size();
    Tensor out(new_shape);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        std::copy(w.data() + kept[k] * fan_in, w.data() + (kept[k] + 1) * fan_in,
                  out.data() + k * fan_in);
    }
    return out;
}

// Keeps blocks of `block` consecutive columns per kept unit. block == 1 for
// dense->dense; block == H*W for conv->flatten->dense; for conv->conv the
// weight is viewed as out x (in * kh*kw) with block == kh*kw.
Tensor keep_column_blocks(const Tensor& w, const std::vector<std::size_t>& kept,
                          std::size_t unit_count, std::size_t block) {
    const std::size_t rows = w.dim(0);
    const std::size_t cols = w.size() / rows;
    if (unit_count * block != cols) {
        throw std::invalid_argument("apply_plan: next layer fan-in " + std::to_string(cols) +
                                    " is not " + std::to_string(unit_count) + " units of " +
                                    std::to_string(block) + " inputs");
    }
    Shape new_shape = w.shape();
    new_shape[1] = w.dim(1) / unit_count * kept.size();
    Tensor out(new_shape);
    const std::size_t new_cols = kept.size() * block;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < kept.size(); ++k) {
            std::copy(w.data() + r * cols + kept[k] * block,
                      w.data() + r * cols + (kept[k] + 1) * block,
                      out.data() + r * new_cols + k * block);
        }
    }
    return out;
}

void validate_kept(const std::vector<std::size_t>& kept, std::size_t units,
                   std::size_t ordinal) {
    if (kept.empty()) {
        throw std::invalid_argument("apply_plan: layer " + std::to_string(ordinal) +
                                    " would keep no units");
    }
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (kept[k] >= units || (k > 0 && kept[k] <= kept[k - 1])) {
            throw std::invalid_argument("apply_plan: kept indices for layer " +
                                        std::to_string(ordinal) +
                                        " are not strictly ascending within range");
        }
    }
}

}  // namespace

Network apply_plan(const Network& net, const PrunePlan& plan) {
    Network out = net;
    const std::vector<std::size_t> param_idx = out.parameterized_indices();

    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> entries = plan.kept;
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [ordinal, kept] : entries) {
        if (ordinal >= param_idx.size()) {
            throw std::invalid_argument("apply_plan: plan targets layer " +
                                        std::to_string(ordinal) + " but the network has " +
                                        std::to_string(param_idx.size()) +
                                        " parameterized layers");
        }
        if (ordinal + 1 == param_idx.size()) {
            throw std::invalid_argument("apply_plan: pruning the final classifier layer "
                                        "is forbidden");
        }
        const std::size_t layer = param_idx[ordinal];
        const std::size_t next_layer = param_idx[ordinal + 1];
        LayerSpec& spec = out.layers[layer];
        LayerSpec& next_spec = out.layers[next_layer];
        const std::size_t units =
            spec.kind == LayerKind::dense ? spec.out_features : spec.out_channels;
        validate_kept(kept, units, ordinal);

        out.params[layer] = keep_rows(out.params[layer], kept);
        if (spec.kind == LayerKind::dense) {
            spec.out_features = kept.size();
        } else {
            spec.out_channels = kept.size();
        }

        Tensor& next_w = out.params[next_layer];
        if (next_spec.kind == LayerKind::dense) {
            // block > 1 when a conv feeds the dense layer through flatten
            const std::size_t block = next_spec.in_features / units;
            next_w = keep_column_blocks(next_w, kept, units, block);
            next_spec.in_features = kept.size() * block;
        } else {
            next_w = keep_column_blocks(next_w, kept, units,
                                        next_spec.kernel_h * next_spec.kernel_w);
            next_spec.in_channels = kept.size();
        }
    }
    return out;
}

std::string plan_to_text(const PrunePlan& plan) {
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> entries = plan.kept;
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [ordinal, kept] : entries) {
        out += std::to_string(ordinal) + ":";
        for (std::size_t k = 0; k < kept.size(); ++k) {
            out += (k == 0 ? " " : ",");
            out += std::to_string(kept[k]);
        }
        out += "\n";
    }
    return out;
}

PrunePlan plan_from_text(const std::string& text) {
    PrunePlan plan;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument("plan_from_text: missing ':' in line \"" + line + "\"");
        }
        std::size_t ordinal = 0;
        try {
            ordinal = std::stoul(line.substr(0, colon));
        } catch (const std::exception&) {
            throw std::invalid_argument("plan_from_text: bad layer index in \"" + line + "\"");
        }
        std::vector<std::size_t> kept;
        std::string rest = line.substr(colon + 1);
        std::istringstream items(rest);
        std::string item;
        while (std::getline(items, item, ',')) {
            const std::size_t first = item.find_first_not_of(' ');
            if (first == std::string::npos) {
                throw std::invalid_argument("plan_from_text: empty index in \"" + line + "\"");
            }
            try {
                kept.push_back(std::stoul(item.substr(first)));
            } catch (const std::exception&) {
                throw std::invalid_argument("plan_from_text: bad index \"" + item + "\"");
            }
        }
        if (kept.empty()) {
            throw std::invalid_argument("plan_from_text: no kept indices in \"" + line + "\"");
        }
        plan.kept.emplace_back(ordinal, std::move(kept));
    }
    return plan;
}

void save_plan(const std::string& path, const PrunePlan& plan) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_plan: cannot open \"" + path + "\"");
    out << plan_to_text(plan);
}

PrunePlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_plan: cannot open \"" + path + "\"");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return plan_from_text(buffer.str());
}

}  // namespace isoprune
