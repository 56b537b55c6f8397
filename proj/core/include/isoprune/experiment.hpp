#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isoprune/data.hpp"
#include "isoprune/isometry.hpp"
#include "isoprune/nn.hpp"
#include "isoprune/pruning.hpp"
#include "isoprune/schedule.hpp"

namespace isoprune {

struct ExperimentConfig {
    ArchId arch = ArchId::MLP7_LINEAR;
    std::uint64_t seed = 0;
    std::string pretrain_schedule = "90 epochs, 0:0.01,30:0.001,60:0.0001";
    double ratio = 0.8;
    std::vector<std::size_t> layers;  // prune targets; empty = arch defaults
    bool orthp = false;
    std::string finetune_schedule = "90 epochs, 0:0.01,30:0.001,60:0.0001";
    int repeat = 1;
    std::string data_dir;        // IDX directory; empty = synthetic fallback
    std::size_t synthetic = 0;   // synthetic train-split size; 0 = default
    std::string out_dir = ".";
    bool long_grid = false;      // include the 900-epoch settings
    std::size_t batch_size = 64;

    void validate() const;  // schedules parse, ratio/repeat in range
};

// Flat "key = value" file with the keys of ExperimentConfig (arch, seed,
// pretrain_schedule, ratio, layers, orthp, finetune_schedule, repeat,
// data_dir, synthetic, out, long, batch_size). Unknown keys are rejected.
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {});

// The configured data source: load_mnist(data_dir) when set, otherwise the
// synthetic fallback (fixed dataset seed so training seeds never change the
// data itself).
std::pair<Dataset, Dataset> load_data(const ExperimentConfig& config);

// First min(count, N) test images, the default probe set for mean_jsv.
Tensor jsv_probe_inputs(const Dataset& test, std::size_t count = 32);

struct EpochRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double test_acc = 0.0;
    JsvReport jsv;
};

struct RunResult {
    Network net;
    std::vector<EpochRow> log;  // one row per epoch, measured at epoch end
    JsvReport initial_jsv;      // state before the first update
    double initial_acc = 0.0;
    double final_acc = 0.0;
};

struct TrainOptions {
    LrSchedule schedule;
    std::uint64_t seed = 0;
    std::size_t batch_size = 64;
};

// SGD training per the schedule, logging loss/accuracy/JSV each epoch.
RunResult train_network(Network net, const Dataset& train, const Dataset& test,
                        const TrainOptions& options);

std::string runlog_header();  // epoch,lr,train_loss,test_acc,jsv_mean,jsv_std,jsv_max,jsv_min
void write_runlog(const std::string& path, const std::vector<EpochRow>& rows);
std::vector<EpochRow> read_runlog(const std::string& path);
// Initial-state report: header test_acc,jsv_mean,jsv_std,jsv_max,jsv_min,K,samples
void write_initial_state(const std::string& path, const RunResult& result);

// ---- CLI-level commands. Each writes its artifacts under out_dir and
// returns what it produced. ----

struct TrainOutputs {
    std::string checkpoint;
    std::string runlog;
    std::string initial_state;
    RunResult result;
};
TrainOutputs cmd_train(const ExperimentConfig& config);

struct PruneOutputs {
    std::string checkpoint;
    std::string plan_file;
    std::string jsv_report;  // stage,mean,std,max,min,K,samples with pre/post rows
    JsvReport pre;
    JsvReport post;
};
PruneOutputs cmd_prune(const ExperimentConfig& config, const std::string& checkpoint_path,
                       std::optional<PrunePlan> plan = std::nullopt);

struct OrthpOutputs {
    std::string checkpoint;
    std::string jsv_report;
    JsvReport pre;
    JsvReport post;
};
OrthpOutputs cmd_orthp(const ExperimentConfig& config, const std::string& checkpoint_path);

JsvReport cmd_jsv(const ExperimentConfig& config, const std::string& checkpoint_path,
                  const std::string& out_csv = "");

struct FinetuneOutputs {
    std::string checkpoint;
    std::string runlog;
    std::string initial_state;
    RunResult result;
};
// Optional plan: applied to the loaded checkpoint before finetuning.
FinetuneOutputs cmd_finetune(const ExperimentConfig& config, const std::string& checkpoint_path,
                             std::optional<PrunePlan> plan = std::nullopt);

struct HypothesisRow {
    std::string setting;           // "90 epochs", "OrthP, 90 epochs", ..., "Scratch"
    double mean_small = 0.0;       // initial LR 0.001, percent
    double std_small = 0.0;
    double mean_big = 0.0;         // initial LR 0.01, percent
    double std_big = 0.0;
    double gain = 0.0;             // mean_big - mean_small, from the printed values
};

struct HypothesesOutputs {
    std::string report_csv;
    std::vector<HypothesisRow> rows;
    std::string pretrain_checkpoint;
};
// Pretrain -> prune -> the +-OrthP x LR grid (x epochs with long_grid) plus
// the scratch baseline; every cell repeated `repeat` times with seeds
// base_seed + run_index.
HypothesesOutputs cmd_hypotheses(const ExperimentConfig& config);

struct SweepRow {
    std::string arch;
    double ratio = 0.0;
    double jsv_mean = 0.0;
};
struct SweepOutputs {
    std::string report_csv;  // arch,ratio,jsv_mean
    std::vector<SweepRow> rows;
};
SweepOutputs cmd_sweep(const ExperimentConfig& config,
                       const std::vector<std::string>& checkpoint_paths,
                       const std::vector<double>& ratios);

}  // namespace isoprune
