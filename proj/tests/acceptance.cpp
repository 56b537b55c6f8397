// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one pass/fail line each. Uses real IDX data when ISOPRUNE_DATA_DIR points
// at the four standard files, the deterministic synthetic fallback otherwise.
//
// Usage: acceptance [criterion-ids...]   (default: all)

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isoprune/checkpoint.hpp"
#include "isoprune/experiment.hpp"
#include "isoprune/linalg.hpp"
#include "isoprune/rng.hpp"

using namespace isoprune;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw Failure(message);
}

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

// Shared expensive artifacts, built once in criterion order.
struct Context {
    ExperimentConfig config;
    std::optional<std::pair<Dataset, Dataset>> data;
    std::optional<Network> pretrained;
    std::optional<Network> pruned80;   // PR 0.8 from the pretrained net
    std::optional<Network> orthp80;
    std::map<std::string, std::vector<RunResult>> grid;  // "plain"/"orthp" x lr key

    const std::pair<Dataset, Dataset>& datasets() {
        if (!data) {
            std::cout << "  [setup] loading "
                      << (config.data_dir.empty() ? "synthetic fallback dataset"
                                                  : "IDX data from " + config.data_dir)
                      << "..." << std::endl;
            data = load_data(config);
            std::cout << "  [setup] train=" << data->first.size()
                      << " test=" << data->second.size() << std::endl;
        }
        return *data;
    }

    const Network& pretrain() {
        if (!pretrained) {
            const auto& [train, test] = datasets();
            Network net = build_network(ArchId::MLP7_LINEAR);
            init_orthogonal(net, config.seed);
            TrainOptions options;
            options.schedule = parse_schedule(config.pretrain_schedule);
            options.seed = config.seed;
            options.batch_size = config.batch_size;
            std::cout << "  [setup] pretraining MLP7_LINEAR ("
                      << options.schedule.total_epochs << " epochs)..." << std::endl;
            RunResult result = train_network(std::move(net), train, test, options);
            std::cout << "  [setup] pretrained test accuracy " << fmt(result.final_acc)
                      << std::endl;
            pretrained = std::move(result.net);
        }
        return *pretrained;
    }

    const Network& pruned() {
        if (!pruned80) {
            const PrunePlan plan =
                make_plan(pretrain(), PruneSpec::uniform(ArchId::MLP7_LINEAR, 0.8));
            pruned80 = apply_plan(pretrain(), plan);
        }
        return *pruned80;
    }

    const Network& recovered() {
        if (!orthp80) orthp80 = orthp(pruned());
        return *orthp80;
    }

    // Finetuning runs at PR 0.8 for criteria 5-7: key = {plain|orthp}_{lr}.
    const std::vector<RunResult>& runs(bool with_orthp, bool big_lr) {
        const std::string key =
            std::string(with_orthp ? "orthp" : "plain") + (big_lr ? "_lr0.01" : "_lr0.001");
        auto it = grid.find(key);
        if (it != grid.end()) return it->second;

        const auto& [train, test] = datasets();
        const Network& start = with_orthp ? recovered() : pruned();
        const LrSchedule schedule = parse_schedule(
            big_lr ? "90 epochs, 0:0.01,30:0.001,60:0.0001" : "90 epochs, 0:0.001,45:0.001");

        std::vector<RunResult> results;
        for (int run = 0; run < 3; ++run) {
            TrainOptions options;
            options.schedule = schedule;
            options.seed = config.seed + static_cast<std::uint64_t>(run);
            options.batch_size = config.batch_size;
            std::cout << "  [setup] finetune " << key << " seed " << options.seed << "..."
                      << std::flush;
            results.push_back(train_network(start, train, test, options));
            std::cout << " acc " << fmt(results.back().final_acc) << std::endl;
        }
        return grid.emplace(key, std::move(results)).first->second;
    }
};

double mean_percent(const std::vector<RunResult>& results) {
    double sum = 0.0;
    for (const RunResult& r : results) sum += r.final_acc * 100.0;
    return sum / static_cast<double>(results.size());
}

// ---- criteria ----

void criterion1(Context& ctx) {
    const auto& [train, test] = ctx.datasets();
    Network net = build_network(ArchId::MLP7_LINEAR);
    init_orthogonal(net, ctx.config.seed);
    const JsvReport report = mean_jsv(net, jsv_probe_inputs(test));
    require(std::abs(report.mean - 1.0) <= 1e-6, "mean " + fmt(report.mean) + " not 1 +- 1e-6");
    require(std::abs(report.max - 1.0) <= 1e-6, "max " + fmt(report.max) + " not 1 +- 1e-6");
    require(std::abs(report.min - 1.0) <= 1e-6, "min " + fmt(report.min) + " not 1 +- 1e-6");
    require(report.std_dev <= 1e-6, "std " + fmt(report.std_dev) + " above 1e-6");
}

void criterion2(Context& ctx) {
    const auto& [train, test] = ctx.datasets();
    const Tensor probes = jsv_probe_inputs(test);

    std::vector<std::string> problems;
    for (ArchId arch : {ArchId::MLP7_RELU, ArchId::LENET5_RELU}) {
        Network net = build_network(arch);
        init_orthogonal(net, ctx.config.seed);
        const JsvReport report = mean_jsv(net, probes);
        std::cout << "  " << to_string(arch) << ": mean " << fmt(report.mean) << ", std "
                  << fmt(report.std_dev) << ", max " << fmt(report.max) << std::endl;
        if (!(report.std_dev > 0.1)) {
            problems.push_back(to_string(arch) + " JSV std " + fmt(report.std_dev) +
                               " not > 0.1");
        }
        if (!(report.max > 1.1)) {
            problems.push_back(to_string(arch) + " JSV max " + fmt(report.max) + " not > 1.1");
        }
    }
    Network lenet = build_network(ArchId::LENET5_LINEAR);
    init_orthogonal(lenet, ctx.config.seed);
    const JsvReport report = mean_jsv(lenet, probes);
    std::cout << "  LENET5_LINEAR: mean " << fmt(report.mean) << ", std " << fmt(report.std_dev)
              << ", max " << fmt(report.max) << std::endl;
    if (!(report.std_dev < 0.2)) {
        problems.push_back("LENET5_LINEAR JSV std " + fmt(report.std_dev) + " not < 0.2");
    }
    if (!problems.empty()) {
        std::string joined;
        for (const std::string& p : problems) joined += (joined.empty() ? "" : "; ") + p;
        throw Failure(joined);
    }
}

void criterion3(Context& ctx) {
    const auto& [train, test] = ctx.datasets();
    const auto rows =
        jsv_sweep(ctx.pretrain(), {0.0, 0.3, 0.5, 0.7, 0.9}, jsv_probe_inputs(test));
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        require(rows[i + 1].second.mean <= rows[i].second.mean + 1e-12,
                "mean JSV increased from ratio " + fmt(rows[i].first) + " (" +
                    fmt(rows[i].second.mean) + ") to ratio " + fmt(rows[i + 1].first) + " (" +
                    fmt(rows[i + 1].second.mean) + ")");
    }
    const double unpruned = rows.front().second.mean;
    const double at90 = rows.back().second.mean;
    require(at90 < 0.7 * unpruned, "JSV(0.9) = " + fmt(at90) + " not below 0.7 * JSV(0) = " +
                                       fmt(0.7 * unpruned));
    std::cout << "  JSV by ratio:";
    for (const auto& [ratio, report] : rows) std::cout << " " << ratio << ":" << fmt(report.mean);
    std::cout << std::endl;
}

void criterion4(Context& ctx) {
    const auto& [train, test] = ctx.datasets();
    const Tensor probes = jsv_probe_inputs(test);
    for (double ratio : {0.5, 0.8, 0.9}) {
        const PrunePlan plan =
            make_plan(ctx.pretrain(), PruneSpec::uniform(ArchId::MLP7_LINEAR, ratio));
        const Network recovered = orthp(apply_plan(ctx.pretrain(), plan));
        const JsvReport report = mean_jsv(recovered, probes);
        require(std::abs(report.mean - 1.0) <= 1e-8,
                "ratio " + fmt(ratio) + ": post-orthp mean JSV " + fmt(report.mean) +
                    " not 1 +- 1e-8");
    }
}

void criterion5(Context& ctx) {
    const double big = mean_percent(ctx.runs(false, true));
    const double small = mean_percent(ctx.runs(false, false));
    std::cout << "  LR 0.01 mean " << fmt(big) << "%, LR 0.001 mean " << fmt(small)
              << "%, gain " << fmt(big - small) << std::endl;
    require(big - small >= 0.3, "LR 0.01 beats LR 0.001 by " + fmt(big - small) +
                                    " points, below the required 0.3");
}

void criterion6(Context& ctx) {
    const double big = mean_percent(ctx.runs(true, true));
    const double small = mean_percent(ctx.runs(true, false));
    const double plain_big = mean_percent(ctx.runs(false, true));
    std::cout << "  OrthP: LR 0.01 mean " << fmt(big) << "%, LR 0.001 mean " << fmt(small)
              << "%, |gap| " << fmt(std::abs(big - small)) << ", no-OrthP LR 0.01 "
              << fmt(plain_big) << std::endl;
    require(std::abs(big - small) <= 0.3,
            "OrthP LR gap " + fmt(std::abs(big - small)) + " exceeds 0.3 points");
    require(big > plain_big, "OrthP LR 0.01 " + fmt(big) + " does not exceed no-OrthP " +
                                 fmt(plain_big));
    require(small > plain_big, "OrthP LR 0.001 " + fmt(small) + " does not exceed no-OrthP " +
                                   fmt(plain_big));
}

void criterion7(Context& ctx) {
    // Self-recovery without OrthP, observed on the LR 0.01 seed-0 run.
    const RunResult& plain = ctx.runs(false, true).front();
    const double jsv0 = plain.initial_jsv.mean;
    const double jsv30 = plain.log.at(29).jsv.mean;  // state after 30 epochs
    const double gap = 1.0 - jsv0;
    std::cout << "  no-OrthP: JSV epoch 0 = " << fmt(jsv0) << ", epoch 30 = " << fmt(jsv30)
              << ", recovered " << fmt(jsv30 - jsv0) << " of gap " << fmt(gap) << std::endl;
    require(jsv30 - jsv0 >= 0.1 * gap,
            "JSV recovery " + fmt(jsv30 - jsv0) + " below 10% of the gap " + fmt(gap));

    const RunResult& fixed = ctx.runs(true, true).front();
    require(std::abs(fixed.initial_jsv.mean - 1.0) <= 1e-8,
            "with OrthP, epoch-0 mean JSV " + fmt(fixed.initial_jsv.mean) + " not 1 +- 1e-8");
}

void criterion8(Context& ctx) {
    Rng rng(33);

    // gradients vs central finite differences on every layer kind
    Network net = build_network(ArchId::LENET5_RELU);
    init_orthogonal(net, 17);
    Tensor x({1, 1, 28, 28});
    for (std::size_t i = 0; i < x.size(); ++i) x(i) = rng.next_gaussian();
    const std::vector<int> labels{3};

    auto loss_of = [&](const Network& n, const Tensor& input) {
        auto [logits, trace] = forward(n, input);
        return softmax_xent(logits, labels).first;
    };
    auto [logits, trace] = forward(net, x);
    auto [loss, grad_logits] = softmax_xent(logits, labels);
    const Gradients grads = backward(net, trace, grad_logits);
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t layer = 0; layer < net.layers.size(); ++layer) {
        if (!net.layers[layer].parameterized()) continue;
        Tensor& w = net.params[layer];
        // probe a spread of entries per layer to keep the runtime bounded
        for (std::size_t k = 0; k < w.size(); k += std::max<std::size_t>(1, w.size() / 40)) {
            const double saved = w(k);
            w(k) = saved + h;
            const double up = loss_of(net, x);
            w(k) = saved - h;
            const double down = loss_of(net, x);
            w(k) = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads.params[layer](k);
            if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
            worst = std::max(worst,
                             std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        }
    }
    require(worst < 1e-4, "gradient rel. err " + fmt(worst) + " not below 1e-4");

    // QR residuals
    Tensor a({12, 7});
    for (std::size_t i = 0; i < a.size(); ++i) a(i) = rng.next_gaussian();
    const auto [q, r] = qr_decompose(a);
    const Tensor qr = matmul(q, r);
    const Tensor qtq = matmul(q.transposed(), q);
    double rec = 0.0, orth = 0.0, a_inf = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        rec = std::max(rec, std::abs(qr(i) - a(i)));
        a_inf = std::max(a_inf, std::abs(a(i)));
    }
    for (std::size_t i = 0; i < qtq.rows(); ++i) {
        for (std::size_t j = 0; j < qtq.cols(); ++j) {
            orth = std::max(orth, std::abs(qtq(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    require(rec < 1e-10 * std::max(1.0, a_inf), "QR reconstruction residual " + fmt(rec));
    require(orth < 1e-10, "QR orthogonality residual " + fmt(orth));

    // SVD vs the 2x2 characteristic-polynomial oracle
    for (int trial = 0; trial < 20; ++trial) {
        Tensor m({2, 2});
        for (std::size_t i = 0; i < 4; ++i) m(i) = rng.next_gaussian();
        const Tensor mtm = matmul(m.transposed(), m);
        const double tr = mtm(0, 0) + mtm(1, 1);
        const double det = mtm(0, 0) * mtm(1, 1) - mtm(0, 1) * mtm(1, 0);
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double s1 = std::sqrt(std::max(0.0, tr / 2.0 + disc));
        const double s2 = std::sqrt(std::max(0.0, tr / 2.0 - disc));
        const auto values = svd_values(m);
        require(std::abs(values[0] - s1) < 1e-10 && std::abs(values[1] - s2) < 1e-10,
                "SVD mismatch vs 2x2 oracle: got {" + fmt(values[0]) + ", " + fmt(values[1]) +
                    "}, want {" + fmt(s1) + ", " + fmt(s2) + "}");
    }

    // prune mask-equivalence on a relu net
    Network mlp = build_network(ArchId::MLP7_RELU);
    init_orthogonal(mlp, 19);
    const PrunePlan plan = make_plan(mlp, PruneSpec::uniform(ArchId::MLP7_RELU, 0.6));
    Network masked = mlp;
    {
        const auto pidx = masked.parameterized_indices();
        for (const auto& [ordinal, kept] : plan.kept) {
            const std::size_t units = masked.params[pidx[ordinal]].dim(0);
            std::vector<bool> keep(units, false);
            for (std::size_t u : kept) keep[u] = true;
            Tensor& w = masked.params[pidx[ordinal + 1]];
            const std::size_t cols = w.size() / w.dim(0);
            const std::size_t block = cols / units;
            for (std::size_t u = 0; u < units; ++u) {
                if (keep[u]) continue;
                for (std::size_t row = 0; row < w.dim(0); ++row) {
                    for (std::size_t b = 0; b < block; ++b) {
                        w.data()[row * cols + u * block + b] = 0.0;
                    }
                }
            }
        }
    }
    const Network pruned = apply_plan(mlp, plan);
    Tensor probe({2, 1, 28, 28});
    for (std::size_t i = 0; i < probe.size(); ++i) probe(i) = rng.next_gaussian();
    const Tensor lhs = forward(pruned, probe).first;
    const Tensor rhs = forward(masked, probe).first;
    double mask_diff = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        mask_diff = std::max(mask_diff, std::abs(lhs(i) - rhs(i)));
    }
    require(mask_diff < 1e-12, "mask-equivalence residual " + fmt(mask_diff));
}

void criterion9(Context& ctx) {
    // the eight grid strings parse
    const char* settings[] = {
        "90 epochs, 0:0.01,30:0.001,60:0.0001",
        "90 epochs, 0:0.001,45:0.001",
        "900 epochs, 0:0.01,300:0.001,600:0.0001",
        "900 epochs, 0:0.001,450:0.001",
        "OrthP, 90 epochs, 0:0.01,30:0.001,60:0.0001",
        "OrthP, 90 epochs, 0:0.001,45:0.001",
        "OrthP, 900 epochs, 0:0.01,300:0.001,600:0.0001",
        "OrthP, 900 epochs, 0:0.001,450:0.001",
    };
    for (const char* text : settings) {
        const FinetuneSetting setting = parse_finetune_setting(text);
        require(setting.schedule.total_epochs > 0, "schedule failed to parse");
    }
    // the three documented malformed cases are rejected
    const char* malformed[] = {
        "90 epochs, 30:0.01",                  // first breakpoint not at 0
        "90 epochs, 0:0.01,60:0.001,30:0.01",  // epochs not ascending
        "90 epochs, 0:0.01,90:0.001",          // breakpoint at the total
    };
    for (const char* text : malformed) {
        bool rejected = false;
        try {
            parse_schedule(text);
        } catch (const std::invalid_argument&) {
            rejected = true;
        }
        require(rejected, std::string("malformed schedule accepted: ") + text);
    }

    // checkpoint round-trip is byte-identical
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("isoprune_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup {
        fs::path p;
        ~Cleanup() { fs::remove_all(p); }
    } cleanup{dir};

    Network net = build_network(ArchId::LENET5_LINEAR);
    init_orthogonal(net, 23);
    const std::string first = (dir / "a.ckpt").string();
    const std::string second = (dir / "b.ckpt").string();
    save_checkpoint(net, first);
    save_checkpoint(load_checkpoint(first), second);
    auto read_bytes = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    require(read_bytes(first) == read_bytes(second), "checkpoint round trip not byte-identical");

    // IDX loader accepts standard headers, rejects wrong magics
    RawImages raw;
    raw.count = 2;
    raw.rows = 28;
    raw.cols = 28;
    raw.pixels.assign(2 * 28 * 28, 128);
    const std::string images = (dir / "images-idx3-ubyte").string();
    save_idx_images(images, raw);
    require(load_idx_images(images).count == 2, "standard image header rejected");

    const std::string labels = (dir / "labels-idx1-ubyte").string();
    save_idx_labels(labels, {0, 1});
    require(load_idx_labels(labels).size() == 2, "standard label header rejected");

    bool rejected = false;
    try {
        load_idx_images(labels);  // label magic in an image slot
    } catch (const std::runtime_error&) {
        rejected = true;
    }
    require(rejected, "image loader accepted a label magic");
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    ctx.config.seed = 1;
    ctx.config.synthetic = 20000;
    if (const char* dir = std::getenv("ISOPRUNE_DATA_DIR")) ctx.config.data_dir = dir;

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    struct Entry {
        int id;
        const char* name;
        std::function<void(Context&)> run;
    };
    const std::vector<Entry> criteria = {
        {1, "exact DI of orthogonal init (MLP7_LINEAR all JSVs = 1)", criterion1},
        {2, "inexact DI for relu/conv architectures", criterion2},
        {3, "mean JSV non-increasing in pruning ratio, 30%+ drop at 0.9", criterion3},
        {4, "OrthP exact recovery at ratios 0.5/0.8/0.9", criterion4},
        {5, "90-epoch finetune: LR 0.01 beats LR 0.001 by >= 0.3 points", criterion5},
        {6, "OrthP collapses the LR gap to <= 0.3 and lifts both runs", criterion6},
        {7, "JSV self-recovery during finetuning; OrthP starts at 1", criterion7},
        {8, "numerical kernel suite (FD gradients, QR, SVD, mask-equivalence)", criterion8},
        {9, "format suite (schedule grammar, checkpoint, IDX)", criterion9},
    };

    int failures = 0;
    for (const Entry& entry : criteria) {
        if (!selected.empty() && !selected.count(entry.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        try {
            entry.run(ctx);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << "[PASS] criterion " << entry.id << ": " << entry.name << " ("
                      << fmt(secs) << " s)" << std::endl;
        } catch (const std::exception& e) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << "[FAIL] criterion " << entry.id << ": " << entry.name << " ("
                      << fmt(secs) << " s): " << e.what() << std::endl;
            ++failures;
        }
    }
    if (failures == 0) {
        std::cout << "all criteria passed" << std::endl;
    } else {
        std::cout << failures << " criterion(s) failed" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
