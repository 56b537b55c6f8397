#include "isoprune/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "isoprune/checkpoint.hpp"

namespace fs = std::filesystem;

namespace isoprune {

namespace {

// Fixed dataset seed: training seeds must never change the data itself,
// otherwise repeat runs would average over different tasks.
constexpr std::uint64_t kSyntheticDataSeed = 7;
constexpr std::size_t kDefaultSyntheticTrain = 20000;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc()) {
        throw std::invalid_argument("bad number \"" + text + "\" in CSV");
    }
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(line);
    while (std::getline(in, item, sep)) parts.push_back(item);
    return parts;
}

std::string output_path(const ExperimentConfig& config, const std::string& name) {
    fs::create_directories(config.out_dir);
    return (fs::path(config.out_dir) / name).string();
}

std::string checkpoint_stem(const std::string& checkpoint_path) {
    return fs::path(checkpoint_path).stem().string();
}

void write_jsv_stages(const std::string& path, const JsvReport& pre, const JsvReport& post) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
    out << "stage," << jsv_csv_header() << "\n";
    out << "pre," << jsv_csv_row(pre) << "\n";
    out << "post," << jsv_csv_row(post) << "\n";
}

}  // namespace

void ExperimentConfig::validate() const {
    parse_schedule(pretrain_schedule);
    parse_schedule(finetune_schedule);
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("config: ratio " + format_double(ratio) + " outside [0, 1)");
    }
    if (repeat < 1) {
        throw std::invalid_argument("config: repeat count must be >= 1, got " +
                                    std::to_string(repeat));
    }
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config_file: cannot open \"" + path + "\"");

    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    auto parse_bool = [&](const std::string& v, const std::string& key) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw std::invalid_argument("load_config_file: bad boolean \"" + v + "\" for " + key);
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("load_config_file: missing '=' on line " +
                                        std::to_string(line_no));
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));

        if (key == "arch") {
            base.arch = parse_arch(value);
        } else if (key == "seed") {
            base.seed = std::stoull(value);
        } else if (key == "pretrain_schedule") {
            base.pretrain_schedule = value;
        } else if (key == "finetune_schedule") {
            base.finetune_schedule = value;
        } else if (key == "ratio") {
            base.ratio = std::stod(value);
        } else if (key == "layers") {
            base.layers.clear();
            for (const std::string& item : split(value, ',')) {
                base.layers.push_back(std::stoul(trim(item)));
            }
        } else if (key == "orthp") {
            base.orthp = parse_bool(value, key);
        } else if (key == "repeat") {
            base.repeat = std::stoi(value);
        } else if (key == "data_dir") {
            base.data_dir = value;
        } else if (key == "synthetic") {
            base.synthetic = std::stoul(value);
        } else if (key == "out") {
            base.out_dir = value;
        } else if (key == "long") {
            base.long_grid = parse_bool(value, key);
        } else if (key == "batch_size") {
            base.batch_size = std::stoul(value);
        } else {
            throw std::invalid_argument("load_config_file: unknown key \"" + key + "\" on line " +
                                        std::to_string(line_no));
        }
    }
    return base;
}

std::pair<Dataset, Dataset> load_data(const ExperimentConfig& config) {
    if (!config.data_dir.empty()) return load_mnist(config.data_dir);
    const std::size_t train_n = config.synthetic > 0 ? config.synthetic : kDefaultSyntheticTrain;
    const std::size_t test_n = std::max<std::size_t>(10, train_n / 5);
    return synthetic_dataset(train_n, test_n, kSyntheticDataSeed);
}

Tensor jsv_probe_inputs(const Dataset& test, std::size_t count) {
    const std::size_t n = std::min(count, test.size());
    if (n == 0) throw std::invalid_argument("jsv_probe_inputs: empty dataset");
    std::vector<std::size_t> indices(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
    return gather_batch(test, indices).first;
}

RunResult train_network(Network net, const Dataset& train, const Dataset& test,
                        const TrainOptions& options) {
    const Tensor probes = jsv_probe_inputs(test);

    RunResult result;
    result.initial_jsv = mean_jsv(net, probes);
    result.initial_acc = evaluate(net, test);

    for (int epoch = 0; epoch < options.schedule.total_epochs; ++epoch) {
        const double lr = lr_at(options.schedule, epoch);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& batch_indices : batches(train, options.batch_size, options.seed, epoch)) {
            auto [images, labels] = gather_batch(train, batch_indices);
            auto [logits, trace] = forward(net, images);
            auto [loss, grad_logits] = softmax_xent(logits, labels);
            const Gradients grads = backward(net, trace, grad_logits);
            sgd_step(net, grads.params, lr);
            loss_sum += loss * static_cast<double>(batch_indices.size());
            seen += batch_indices.size();
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.test_acc = evaluate(net, test);
        row.jsv = mean_jsv(net, probes);
        result.log.push_back(row);
    }

    result.final_acc = result.log.empty() ? result.initial_acc : result.log.back().test_acc;
    result.net = std::move(net);
    return result;
}

std::string runlog_header() {
    return "epoch,lr,train_loss,test_acc,jsv_mean,jsv_std,jsv_max,jsv_min";
}

void write_runlog(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_runlog: cannot open \"" + path + "\"");
    out << runlog_header() << "\n";
    for (const EpochRow& row : rows) {
        out << row.epoch << "," << format_double(row.lr) << ","
            << format_double(row.train_loss) << "," << format_double(row.test_acc) << ","
            << format_double(row.jsv.mean) << "," << format_double(row.jsv.std_dev) << ","
            << format_double(row.jsv.max) << "," << format_double(row.jsv.min) << "\n";
    }
}

std::vector<EpochRow> read_runlog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_runlog: cannot open \"" + path + "\"");
    std::string line;
    if (!std::getline(in, line) || line != runlog_header()) {
        throw std::runtime_error("read_runlog: bad header in \"" + path + "\"");
    }
    std::vector<EpochRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto parts = split(line, ',');
        if (parts.size() != 8) {
            throw std::runtime_error("read_runlog: bad row in \"" + path + "\": " + line);
        }
        EpochRow row;
        row.epoch = std::stoi(parts[0]);
        row.lr = parse_double(parts[1]);
        row.train_loss = parse_double(parts[2]);
        row.test_acc = parse_double(parts[3]);
        row.jsv.mean = parse_double(parts[4]);
        row.jsv.std_dev = parse_double(parts[5]);
        row.jsv.max = parse_double(parts[6]);
        row.jsv.min = parse_double(parts[7]);
        rows.push_back(row);
    }
    return rows;
}

void write_initial_state(const std::string& path, const RunResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_initial_state: cannot open \"" + path + "\"");
    out << "test_acc," << jsv_csv_header() << "\n";
    out << format_double(result.initial_acc) << "," << jsv_csv_row(result.initial_jsv) << "\n";
}

TrainOutputs cmd_train(const ExperimentConfig& config) {
    config.validate();
    auto [train, test] = load_data(config);

    Network net = build_network(config.arch);
    init_orthogonal(net, config.seed);

    TrainOptions options;
    options.schedule = parse_schedule(config.pretrain_schedule);
    options.seed = config.seed;
    options.batch_size = config.batch_size;

    TrainOutputs outputs;
    outputs.result = train_network(std::move(net), train, test, options);

    const std::string base = to_string(config.arch);
    outputs.checkpoint = output_path(config, base + "_pretrained.ckpt");
    outputs.runlog = output_path(config, base + "_train.csv");
    outputs.initial_state = output_path(config, base + "_train_init.csv");
    save_checkpoint(outputs.result.net, outputs.checkpoint);
    write_runlog(outputs.runlog, outputs.result.log);
    write_initial_state(outputs.initial_state, outputs.result);
    return outputs;
}

namespace {

PruneSpec spec_from_config(const ExperimentConfig& config, ArchId arch) {
    return config.layers.empty() ? PruneSpec::uniform(arch, config.ratio)
                                 : PruneSpec::on_layers(config.layers, config.ratio);
}

}  // namespace

PruneOutputs cmd_prune(const ExperimentConfig& config, const std::string& checkpoint_path,
                       std::optional<PrunePlan> plan) {
    config.validate();
    const Network net = load_checkpoint(checkpoint_path);
    auto [train, test] = load_data(config);
    const Tensor probes = jsv_probe_inputs(test);

    PruneOutputs outputs;
    outputs.pre = mean_jsv(net, probes);
    const PrunePlan applied = plan ? *plan : make_plan(net, spec_from_config(config, net.arch_id));
    const Network pruned = apply_plan(net, applied);
    outputs.post = mean_jsv(pruned, probes);

    const std::string stem = checkpoint_stem(checkpoint_path);
    outputs.checkpoint = output_path(config, stem + "_pruned.ckpt");
    outputs.plan_file = output_path(config, stem + "_plan.txt");
    outputs.jsv_report = output_path(config, stem + "_prune_jsv.csv");
    save_checkpoint(pruned, outputs.checkpoint);
    save_plan(outputs.plan_file, applied);
    write_jsv_stages(outputs.jsv_report, outputs.pre, outputs.post);
    return outputs;
}

OrthpOutputs cmd_orthp(const ExperimentConfig& config, const std::string& checkpoint_path) {
    config.validate();
    const Network net = load_checkpoint(checkpoint_path);
    auto [train, test] = load_data(config);
    const Tensor probes = jsv_probe_inputs(test);

    OrthpOutputs outputs;
    outputs.pre = mean_jsv(net, probes);
    const Network fixed = orthp(net);
    outputs.post = mean_jsv(fixed, probes);

    const std::string stem = checkpoint_stem(checkpoint_path);
    outputs.checkpoint = output_path(config, stem + "_orthp.ckpt");
    outputs.jsv_report = output_path(config, stem + "_orthp_jsv.csv");
    save_checkpoint(fixed, outputs.checkpoint);
    write_jsv_stages(outputs.jsv_report, outputs.pre, outputs.post);
    return outputs;
}

JsvReport cmd_jsv(const ExperimentConfig& config, const std::string& checkpoint_path,
                  const std::string& out_csv) {
    config.validate();
    const Network net = load_checkpoint(checkpoint_path);
    auto [train, test] = load_data(config);
    const JsvReport report = mean_jsv(net, jsv_probe_inputs(test));

    const std::string path =
        out_csv.empty() ? output_path(config, checkpoint_stem(checkpoint_path) + "_jsv.csv")
                        : out_csv;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cmd_jsv: cannot open \"" + path + "\"");
    out << jsv_csv_header() << "\n" << jsv_csv_row(report) << "\n";
    return report;
}

FinetuneOutputs cmd_finetune(const ExperimentConfig& config, const std::string& checkpoint_path,
                             std::optional<PrunePlan> plan) {
    config.validate();
    Network net = load_checkpoint(checkpoint_path);
    if (plan) net = apply_plan(net, *plan);
    if (config.orthp) net = orthp(net);

    auto [train, test] = load_data(config);
    TrainOptions options;
    options.schedule = parse_schedule(config.finetune_schedule);
    options.seed = config.seed;
    options.batch_size = config.batch_size;

    FinetuneOutputs outputs;
    outputs.result = train_network(std::move(net), train, test, options);

    const std::string stem = checkpoint_stem(checkpoint_path);
    outputs.checkpoint = output_path(config, stem + "_finetuned.ckpt");
    outputs.runlog = output_path(config, stem + "_finetune.csv");
    outputs.initial_state = output_path(config, stem + "_finetune_init.csv");
    save_checkpoint(outputs.result.net, outputs.checkpoint);
    write_runlog(outputs.runlog, outputs.result.log);
    write_initial_state(outputs.initial_state, outputs.result);
    return outputs;
}

namespace {

struct GridSetting {
    std::string name;       // e.g. "OrthP, 90 epochs"
    bool orthp = false;
    std::string small_lr;   // initial LR 0.001 schedule
    std::string big_lr;     // initial LR 0.01 schedule
};

std::vector<GridSetting> grid_settings(bool long_grid) {
    const std::string small90 = "90 epochs, 0:0.001,45:0.001";
    const std::string big90 = "90 epochs, 0:0.01,30:0.001,60:0.0001";
    const std::string small900 = "900 epochs, 0:0.001,450:0.001";
    const std::string big900 = "900 epochs, 0:0.01,300:0.001,600:0.0001";

    std::vector<GridSetting> settings;
    settings.push_back({"90 epochs", false, small90, big90});
    if (long_grid) settings.push_back({"900 epochs", false, small900, big900});
    settings.push_back({"OrthP, 90 epochs", true, small90, big90});
    if (long_grid) settings.push_back({"OrthP, 900 epochs", true, small900, big900});
    return settings;
}

std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (c == ' ') {
            out += '_';
        } else if (c != ',') {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

struct CellStats {
    double mean = 0.0;
    double std_dev = 0.0;
};

CellStats stats_percent(const std::vector<double>& accs) {
    double sum = 0.0, sum_sq = 0.0;
    for (double a : accs) {
        const double pct = a * 100.0;
        sum += pct;
        sum_sq += pct * pct;
    }
    const double n = static_cast<double>(accs.size());
    CellStats stats;
    stats.mean = sum / n;
    stats.std_dev = std::sqrt(std::max(0.0, sum_sq / n - stats.mean * stats.mean));
    return stats;
}

// Printed means re-parsed, so the gain column is exactly the difference of
// the mean columns as they appear in the file.
double printed(double v) { return parse_double(format_double(v)); }

}  // namespace

HypothesesOutputs cmd_hypotheses(const ExperimentConfig& config) {
    config.validate();
    auto [train, test] = load_data(config);
    fs::create_directories(fs::path(config.out_dir) / "runs");

    // Pretrain the unpruned model once.
    Network fresh = build_network(config.arch);
    init_orthogonal(fresh, config.seed);
    TrainOptions pretrain_options;
    pretrain_options.schedule = parse_schedule(config.pretrain_schedule);
    pretrain_options.seed = config.seed;
    pretrain_options.batch_size = config.batch_size;
    RunResult pretrain = train_network(std::move(fresh), train, test, pretrain_options);

    const std::string base = to_string(config.arch);
    HypothesesOutputs outputs;
    outputs.pretrain_checkpoint = output_path(config, base + "_pretrained.ckpt");
    save_checkpoint(pretrain.net, outputs.pretrain_checkpoint);
    write_runlog(output_path(config, base + "_pretrain.csv"), pretrain.log);

    // One plan from the pretrained weights; all cells share it.
    const PrunePlan plan = make_plan(pretrain.net, spec_from_config(config, config.arch));
    save_plan(output_path(config, base + "_plan.txt"), plan);
    const Network pruned = apply_plan(pretrain.net, plan);
    const Network recovered = orthp(pruned);
    save_checkpoint(pruned, output_path(config, base + "_pruned.ckpt"));
    save_checkpoint(recovered, output_path(config, base + "_orthp.ckpt"));

    auto run_cell = [&](const Network& start, const std::string& schedule_text,
                        const std::string& run_prefix) {
        const LrSchedule schedule = parse_schedule(schedule_text);
        std::vector<double> accs;
        for (int run = 0; run < config.repeat; ++run) {
            TrainOptions options;
            options.schedule = schedule;
            options.seed = config.seed + static_cast<std::uint64_t>(run);
            options.batch_size = config.batch_size;
            RunResult result = train_network(start, train, test, options);
            write_runlog((fs::path(config.out_dir) / "runs" /
                          (run_prefix + "_run" + std::to_string(run) + ".csv"))
                             .string(),
                         result.log);
            accs.push_back(result.final_acc);
        }
        return stats_percent(accs);
    };

    for (const GridSetting& setting : grid_settings(config.long_grid)) {
        const Network& start = setting.orthp ? recovered : pruned;
        const CellStats small = run_cell(start, setting.small_lr, slug(setting.name) + "_lr0.001");
        const CellStats big = run_cell(start, setting.big_lr, slug(setting.name) + "_lr0.01");

        HypothesisRow row;
        row.setting = setting.name;
        row.mean_small = small.mean;
        row.std_small = small.std_dev;
        row.mean_big = big.mean;
        row.std_big = big.std_dev;
        row.gain = printed(big.mean) - printed(small.mean);
        outputs.rows.push_back(row);
    }

    // Scratch baseline: the pruned architecture from fresh orthogonal init,
    // trained with the pretraining schedule.
    {
        const LrSchedule schedule = parse_schedule(config.pretrain_schedule);
        std::vector<double> accs;
        for (int run = 0; run < config.repeat; ++run) {
            Network scratch = pruned;
            const std::uint64_t seed_i = config.seed + static_cast<std::uint64_t>(run);
            init_orthogonal(scratch, seed_i);
            TrainOptions options;
            options.schedule = schedule;
            options.seed = seed_i;
            options.batch_size = config.batch_size;
            RunResult result = train_network(std::move(scratch), train, test, options);
            write_runlog((fs::path(config.out_dir) / "runs" /
                          ("scratch_run" + std::to_string(run) + ".csv"))
                             .string(),
                         result.log);
            accs.push_back(result.final_acc);
        }
        const CellStats stats = stats_percent(accs);
        HypothesisRow row;
        row.setting = "Scratch";
        row.mean_small = stats.mean;  // one cell spanning both LR columns
        row.std_small = stats.std_dev;
        row.mean_big = stats.mean;
        row.std_big = stats.std_dev;
        row.gain = 0.0;
        outputs.rows.push_back(row);
    }

    outputs.report_csv = output_path(config, "hypotheses.csv");
    std::ofstream out(outputs.report_csv);
    if (!out) throw std::runtime_error("cmd_hypotheses: cannot open \"" + outputs.report_csv + "\"");
    out << "setting,acc_mean_lr0.001,acc_std_lr0.001,acc_mean_lr0.01,acc_std_lr0.01,acc_gain\n";
    for (const HypothesisRow& row : outputs.rows) {
        out << "\"" << row.setting << "\"," << format_double(row.mean_small) << ","
            << format_double(row.std_small) << "," << format_double(row.mean_big) << ","
            << format_double(row.std_big) << "," << format_double(row.gain) << "\n";
    }
    return outputs;
}

SweepOutputs cmd_sweep(const ExperimentConfig& config,
                       const std::vector<std::string>& checkpoint_paths,
                       const std::vector<double>& ratios) {
    config.validate();
    if (checkpoint_paths.empty()) {
        throw std::invalid_argument("cmd_sweep: no checkpoints given");
    }
    if (ratios.empty()) throw std::invalid_argument("cmd_sweep: no ratios given");

    auto [train, test] = load_data(config);
    const Tensor probes = jsv_probe_inputs(test);

    SweepOutputs outputs;
    for (const std::string& path : checkpoint_paths) {
        const Network net = load_checkpoint(path);
        for (const auto& [ratio, report] : jsv_sweep(net, ratios, probes)) {
            SweepRow row;
            row.arch = to_string(net.arch_id);
            row.ratio = ratio;
            row.jsv_mean = report.mean;
            outputs.rows.push_back(row);
        }
    }

    outputs.report_csv = output_path(config, "sweep.csv");
    std::ofstream out(outputs.report_csv);
    if (!out) throw std::runtime_error("cmd_sweep: cannot open \"" + outputs.report_csv + "\"");
    out << "arch,ratio,jsv_mean\n";
    for (const SweepRow& row : outputs.rows) {
        out << row.arch << "," << format_double(row.ratio) << "," << format_double(row.jsv_mean)
            << "\n";
    }
    return outputs;
}

}  // namespace isoprune
