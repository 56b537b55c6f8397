#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "isoprune/checkpoint.hpp"
#include "isoprune/experiment.hpp"

using isoprune::ArchId;
using isoprune::ExperimentConfig;
using isoprune::load_config_file;
using isoprune::RunResult;
using isoprune::TrainOptions;
using isoprune::train_network;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("isoprune_harness_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig config;
    config.arch = ArchId::MLP7_LINEAR;
    config.seed = 1;
    config.synthetic = 120;
    config.out_dir = out_dir;
    config.pretrain_schedule = "3 epochs, 0:0.01";
    config.finetune_schedule = "3 epochs, 0:0.01";
    config.ratio = 0.5;
    return config;
}

std::vector<std::string> csv_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            fields.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

}  // namespace

TEST_CASE("config: validation catches bad fields") {
    ExperimentConfig config;
    config.ratio = 1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.ratio = 0.5;
    config.repeat = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.repeat = 1;
    config.pretrain_schedule = "nonsense";
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("config file: parse, defaults, unknown keys") {
    TempDir dir;
    const std::string path = dir.file("run.cfg");
    {
        std::ofstream out(path);
        out << "# comment\n";
        out << "arch = LENET5_RELU\n";
        out << "seed = 42\n";
        out << "ratio = 0.9\n";
        out << "layers = 0, 1\n";
        out << "orthp = true\n";
        out << "finetune_schedule = 90 epochs, 0:0.001,45:0.001\n";
        out << "repeat = 3\n";
        out << "synthetic = 500\n";
        out << "long = false\n";
    }
    const ExperimentConfig config = load_config_file(path);
    CHECK(config.arch == ArchId::LENET5_RELU);
    CHECK(config.seed == 42);
    CHECK(config.ratio == 0.9);
    CHECK(config.layers == std::vector<std::size_t>{0, 1});
    CHECK(config.orthp);
    CHECK(config.finetune_schedule == "90 epochs, 0:0.001,45:0.001");
    CHECK(config.repeat == 3);
    CHECK(config.synthetic == 500);
    // untouched keys keep their defaults
    CHECK(config.pretrain_schedule == "90 epochs, 0:0.01,30:0.001,60:0.0001");

    {
        std::ofstream out(path);
        out << "bogus_key = 1\n";
    }
    CHECK_THROWS_WITH_AS(load_config_file(path), doctest::Contains("unknown key"),
                         std::invalid_argument);
}

TEST_CASE("train_network: identical seeds give bit-exact logs for 3 epochs") {
    auto [train, test] = isoprune::synthetic_dataset(120, 30, 7);
    isoprune::Network net = isoprune::build_network(ArchId::MLP7_LINEAR);
    isoprune::init_orthogonal(net, 5);

    TrainOptions options;
    options.schedule = isoprune::parse_schedule("3 epochs, 0:0.01");
    options.seed = 9;
    const RunResult a = train_network(net, train, test, options);
    const RunResult b = train_network(net, train, test, options);

    REQUIRE(a.log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.log[e].train_loss == b.log[e].train_loss);
        CHECK(a.log[e].test_acc == b.log[e].test_acc);
        CHECK(a.log[e].jsv.mean == b.log[e].jsv.mean);
    }
    for (std::size_t i = 0; i < a.net.params.size(); ++i) {
        CHECK(a.net.params[i] == b.net.params[i]);
    }

    // a different seed changes the batch order and the trajectory
    options.seed = 10;
    const RunResult c = train_network(net, train, test, options);
    CHECK(c.log[0].train_loss != a.log[0].train_loss);
}

TEST_CASE("runlog: write/read round trip with the fixed header") {
    TempDir dir;
    auto [train, test] = isoprune::synthetic_dataset(60, 20, 7);
    isoprune::Network net = isoprune::build_network(ArchId::MLP7_LINEAR);
    isoprune::init_orthogonal(net, 5);
    TrainOptions options;
    options.schedule = isoprune::parse_schedule("2 epochs, 0:0.01,1:0.001");
    options.seed = 3;
    const RunResult result = train_network(net, train, test, options);

    const std::string path = dir.file("log.csv");
    isoprune::write_runlog(path, result.log);
    const std::string text = slurp(path);
    CHECK(csv_lines(text)[0] == "epoch,lr,train_loss,test_acc,jsv_mean,jsv_std,jsv_max,jsv_min");
    CHECK(csv_lines(text).size() == 3);  // header + one row per epoch

    const auto rows = isoprune::read_runlog(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].epoch == 0);
    CHECK(rows[0].lr == 0.01);
    CHECK(rows[1].lr == 0.001);
    CHECK(rows[0].train_loss == result.log[0].train_loss);
    CHECK(rows[1].jsv.mean == result.log[1].jsv.mean);
}

TEST_CASE("cmd_train: deterministic bytes across identical configs") {
    TempDir dir;
    ExperimentConfig config1 = tiny_config(dir.file("run1"));
    ExperimentConfig config2 = tiny_config(dir.file("run2"));

    const auto out1 = isoprune::cmd_train(config1);
    const auto out2 = isoprune::cmd_train(config2);
    CHECK(slurp(out1.runlog) == slurp(out2.runlog));
    CHECK(slurp(out1.checkpoint) == slurp(out2.checkpoint));
    CHECK(slurp(out1.initial_state) == slurp(out2.initial_state));
    CHECK(out1.result.final_acc == out2.result.final_acc);
}

TEST_CASE("cmd pipeline: train -> prune -> orthp -> jsv -> finetune on synthetic data") {
    TempDir dir;
    ExperimentConfig config = tiny_config(dir.file("out"));

    const auto trained = isoprune::cmd_train(config);
    CHECK(std::filesystem::exists(trained.checkpoint));

    const auto pruned = isoprune::cmd_prune(config, trained.checkpoint);
    CHECK(std::filesystem::exists(pruned.checkpoint));
    CHECK(std::filesystem::exists(pruned.plan_file));
    // pruning hurts isometry on the trained linear net
    CHECK(pruned.post.mean < pruned.pre.mean);

    // the plan file round-trips
    const auto plan = isoprune::load_plan(pruned.plan_file);
    isoprune::save_plan(dir.file("plan2.txt"), plan);
    CHECK(slurp(pruned.plan_file) == slurp(dir.file("plan2.txt")));

    const auto fixed = isoprune::cmd_orthp(config, pruned.checkpoint);
    CHECK(std::abs(fixed.post.mean - 1.0) < 1e-8);

    // applying orthp twice is a fixed point
    const auto fixed_again = isoprune::cmd_orthp(config, fixed.checkpoint);
    const isoprune::Network once = isoprune::load_checkpoint(fixed.checkpoint);
    const isoprune::Network twice = isoprune::load_checkpoint(fixed_again.checkpoint);
    for (std::size_t i = 0; i < once.params.size(); ++i) {
        if (once.params[i].empty()) continue;
        for (std::size_t k = 0; k < once.params[i].size(); ++k) {
            CHECK(std::abs(once.params[i](k) - twice.params[i](k)) < 1e-10);
        }
    }

    const auto jsv = isoprune::cmd_jsv(config, fixed.checkpoint);
    CHECK(jsv.mean == fixed.post.mean);

    const auto finetuned = isoprune::cmd_finetune(config, pruned.checkpoint);
    REQUIRE(finetuned.result.log.size() == 3);
    CHECK(std::filesystem::exists(finetuned.runlog));

    // ratio 0 in a sweep reproduces the final logged JSV of training
    const auto sweep = isoprune::cmd_sweep(config, {trained.checkpoint}, {0.0, 0.5});
    REQUIRE(sweep.rows.size() == 2);
    CHECK(sweep.rows[0].jsv_mean == trained.result.log.back().jsv.mean);
    CHECK(sweep.rows[1].jsv_mean < sweep.rows[0].jsv_mean);
    const auto sweep_lines = csv_lines(slurp(sweep.report_csv));
    CHECK(sweep_lines[0] == "arch,ratio,jsv_mean");
    CHECK(sweep_lines.size() == 3);
}

TEST_CASE("cmd_finetune: optional plan prunes before finetuning, orthp flag applies") {
    TempDir dir;
    ExperimentConfig config = tiny_config(dir.file("out"));
    const auto trained = isoprune::cmd_train(config);

    const isoprune::Network net = isoprune::load_checkpoint(trained.checkpoint);
    const auto plan =
        isoprune::make_plan(net, isoprune::PruneSpec::uniform(config.arch, 0.5));

    ExperimentConfig with_orthp = config;
    with_orthp.orthp = true;
    const auto outputs = isoprune::cmd_finetune(with_orthp, trained.checkpoint, plan);
    // the starting point was pruned (50 wide) and orthogonalized: initial JSV = 1
    CHECK(std::abs(outputs.result.initial_jsv.mean - 1.0) < 1e-8);
    const isoprune::Network final_net = isoprune::load_checkpoint(outputs.checkpoint);
    const auto pidx = final_net.parameterized_indices();
    CHECK(final_net.params[pidx[0]].dim(0) == 50);
}

TEST_CASE("cmd_hypotheses: repeat=1 smoke grid with schema checks") {
    TempDir dir;
    ExperimentConfig config = tiny_config(dir.file("out"));
    config.repeat = 1;
    config.ratio = 0.5;
    // keep the default 90-epoch grid; the dataset is tiny so this is quick

    const auto outputs = isoprune::cmd_hypotheses(config);
    REQUIRE(outputs.rows.size() == 3);  // 90 epochs, OrthP 90 epochs, Scratch
    CHECK(outputs.rows[0].setting == "90 epochs");
    CHECK(outputs.rows[1].setting == "OrthP, 90 epochs");
    CHECK(outputs.rows[2].setting == "Scratch");

    const auto lines = csv_lines(slurp(outputs.report_csv));
    CHECK(lines[0] ==
          "setting,acc_mean_lr0.001,acc_std_lr0.001,acc_mean_lr0.01,acc_std_lr0.01,acc_gain");
    REQUIRE(lines.size() == 4);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = csv_fields(lines[i]);
        REQUIRE(fields.size() == 6);
        // the gain column equals the difference of the printed mean columns
        const double small = std::stod(fields[1]);
        const double big = std::stod(fields[3]);
        const double gain = std::stod(fields[5]);
        CHECK(gain == big - small);
    }
    // scratch duplicates its single cell across both LR columns
    const auto scratch = csv_fields(lines[3]);
    CHECK(scratch[1] == scratch[3]);
    CHECK(scratch[2] == scratch[4]);
    CHECK(std::stod(scratch[5]) == 0.0);

    // per-run logs exist
    CHECK(std::filesystem::exists(dir.file("out") + "/runs/90_epochs_lr0.01_run0.csv"));
    CHECK(std::filesystem::exists(dir.file("out") + "/runs/orthp_90_epochs_lr0.001_run0.csv"));
    CHECK(std::filesystem::exists(dir.file("out") + "/runs/scratch_run0.csv"));
}
