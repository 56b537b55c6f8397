#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "isoprune/checkpoint.hpp"
#include "isoprune/experiment.hpp"

namespace {

using isoprune::ExperimentConfig;

// Shared flags; each subcommand overlays the ones it uses onto the config
// (after an optional --config file, so command-line flags win).
struct ConfigFlags {
    std::string config_file;
    std::string arch;
    std::uint64_t seed = 0;
    std::string lr_schedule;
    double ratio = 0.0;
    std::vector<std::size_t> layers;
    int repeat = 0;
    std::string data_dir;
    std::size_t synthetic = 0;
    std::string out;
    bool long_grid = false;
    bool orthp = false;
    std::size_t batch_size = 0;

    CLI::Option* arch_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* schedule_opt = nullptr;
    CLI::Option* ratio_opt = nullptr;
    CLI::Option* layers_opt = nullptr;
    CLI::Option* repeat_opt = nullptr;
    CLI::Option* data_dir_opt = nullptr;
    CLI::Option* synthetic_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* long_opt = nullptr;
    CLI::Option* orthp_opt = nullptr;
    CLI::Option* batch_opt = nullptr;

    void add_common(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "flat key=value config file");
        arch_opt = cmd->add_option("--arch", arch,
                                   "MLP7_LINEAR | MLP7_RELU | LENET5_LINEAR | LENET5_RELU");
        seed_opt = cmd->add_option("--seed", seed, "base random seed");
        data_dir_opt = cmd->add_option("--data-dir", data_dir, "directory with the four IDX files");
        synthetic_opt = cmd->add_option("--synthetic", synthetic,
                                        "synthetic fallback dataset, N training samples");
        out_opt = cmd->add_option("--out", out, "output directory");
        batch_opt = cmd->add_option("--batch-size", batch_size, "SGD minibatch size");
    }

    ExperimentConfig build(bool schedule_is_pretrain) const {
        ExperimentConfig config;
        if (!config_file.empty()) config = isoprune::load_config_file(config_file, config);
        if (arch_opt && arch_opt->count()) config.arch = isoprune::parse_arch(arch);
        if (seed_opt && seed_opt->count()) config.seed = seed;
        if (schedule_opt && schedule_opt->count()) {
            (schedule_is_pretrain ? config.pretrain_schedule : config.finetune_schedule) =
                lr_schedule;
        }
        if (ratio_opt && ratio_opt->count()) config.ratio = ratio;
        if (layers_opt && layers_opt->count()) config.layers = layers;
        if (repeat_opt && repeat_opt->count()) config.repeat = repeat;
        if (data_dir_opt && data_dir_opt->count()) config.data_dir = data_dir;
        if (synthetic_opt && synthetic_opt->count()) config.synthetic = synthetic;
        if (out_opt && out_opt->count()) config.out_dir = out;
        if (long_opt && long_opt->count()) config.long_grid = long_grid;
        if (orthp_opt && orthp_opt->count()) config.orthp = orthp;
        if (batch_opt && batch_opt->count()) config.batch_size = batch_size;
        return config;
    }
};

void print_jsv(const std::string& label, const isoprune::JsvReport& report) {
    std::cout << label << ": " << isoprune::jsv_csv_header() << "\n"
              << label << ": " << isoprune::jsv_csv_row(report) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"L1-norm structured pruning with dynamical isometry measurement and repair"};
    app.require_subcommand(1);

    // train
    auto train_flags = std::make_shared<ConfigFlags>();
    CLI::App* train = app.add_subcommand("train", "orthogonal-init and train a network");
    train_flags->add_common(train);
    train_flags->schedule_opt =
        train->add_option("--lr-schedule", train_flags->lr_schedule,
                          "step schedule, e.g. \"90 epochs, 0:0.01,30:0.001,60:0.0001\"");
    train->callback([train_flags] {
        const auto outputs = isoprune::cmd_train(train_flags->build(true));
        std::cout << "checkpoint: " << outputs.checkpoint << "\n"
                  << "runlog: " << outputs.runlog << "\n"
                  << "final test accuracy: " << outputs.result.final_acc << "\n";
    });

    // prune
    auto prune_flags = std::make_shared<ConfigFlags>();
    auto prune_ckpt = std::make_shared<std::string>();
    auto prune_plan = std::make_shared<std::string>();
    CLI::App* prune = app.add_subcommand("prune", "L1-norm structured pruning of a checkpoint");
    prune_flags->add_common(prune);
    prune->add_option("--checkpoint", *prune_ckpt, "input checkpoint")->required();
    prune_flags->ratio_opt = prune->add_option("--ratio", prune_flags->ratio,
                                               "fraction of units to drop per target layer");
    prune_flags->layers_opt =
        prune->add_option("--layers", prune_flags->layers,
                          "target parameterized-layer ordinals (default: paper convention)");
    prune->add_option("--plan", *prune_plan, "apply this plan file instead of L1 scoring");
    prune->callback([prune_flags, prune_ckpt, prune_plan] {
        std::optional<isoprune::PrunePlan> plan;
        if (!prune_plan->empty()) plan = isoprune::load_plan(*prune_plan);
        const auto outputs =
            isoprune::cmd_prune(prune_flags->build(true), *prune_ckpt, std::move(plan));
        std::cout << "checkpoint: " << outputs.checkpoint << "\n"
                  << "plan: " << outputs.plan_file << "\n";
        print_jsv("pre", outputs.pre);
        print_jsv("post", outputs.post);
    });

    // orthp
    auto orthp_flags = std::make_shared<ConfigFlags>();
    auto orthp_ckpt = std::make_shared<std::string>();
    CLI::App* orthp_cmd = app.add_subcommand("orthp", "QR-orthogonalize a checkpoint's weights");
    orthp_flags->add_common(orthp_cmd);
    orthp_cmd->add_option("--checkpoint", *orthp_ckpt, "input checkpoint")->required();
    orthp_cmd->callback([orthp_flags, orthp_ckpt] {
        const auto outputs = isoprune::cmd_orthp(orthp_flags->build(true), *orthp_ckpt);
        std::cout << "checkpoint: " << outputs.checkpoint << "\n";
        print_jsv("pre", outputs.pre);
        print_jsv("post", outputs.post);
    });

    // jsv
    auto jsv_flags = std::make_shared<ConfigFlags>();
    auto jsv_ckpt = std::make_shared<std::string>();
    CLI::App* jsv = app.add_subcommand("jsv", "Jacobian singular value report for a checkpoint");
    jsv_flags->add_common(jsv);
    jsv->add_option("--checkpoint", *jsv_ckpt, "input checkpoint")->required();
    jsv->callback([jsv_flags, jsv_ckpt] {
        const auto report = isoprune::cmd_jsv(jsv_flags->build(true), *jsv_ckpt);
        std::cout << isoprune::jsv_csv_header() << "\n" << isoprune::jsv_csv_row(report) << "\n";
    });

    // finetune
    auto ft_flags = std::make_shared<ConfigFlags>();
    auto ft_ckpt = std::make_shared<std::string>();
    auto ft_plan = std::make_shared<std::string>();
    CLI::App* finetune = app.add_subcommand("finetune", "SGD finetuning of a checkpoint");
    ft_flags->add_common(finetune);
    finetune->add_option("--checkpoint", *ft_ckpt, "input checkpoint")->required();
    ft_flags->schedule_opt =
        finetune->add_option("--lr-schedule", ft_flags->lr_schedule, "finetuning step schedule");
    ft_flags->orthp_opt =
        finetune->add_flag("--orthp", ft_flags->orthp, "orthogonalize before finetuning");
    finetune->add_option("--plan", *ft_plan, "prune with this plan file before finetuning");
    finetune->callback([ft_flags, ft_ckpt, ft_plan] {
        std::optional<isoprune::PrunePlan> plan;
        if (!ft_plan->empty()) plan = isoprune::load_plan(*ft_plan);
        const auto outputs =
            isoprune::cmd_finetune(ft_flags->build(false), *ft_ckpt, std::move(plan));
        std::cout << "checkpoint: " << outputs.checkpoint << "\n"
                  << "runlog: " << outputs.runlog << "\n"
                  << "final test accuracy: " << outputs.result.final_acc << "\n";
    });

    // hypotheses
    auto hyp_flags = std::make_shared<ConfigFlags>();
    auto hyp_pretrain = std::make_shared<std::string>();
    CLI::App* hypotheses =
        app.add_subcommand("hypotheses", "finetuning-LR hypothesis grid + scratch baseline");
    hyp_flags->add_common(hypotheses);
    hyp_flags->ratio_opt =
        hypotheses->add_option("--ratio", hyp_flags->ratio, "pruning ratio for the grid");
    hyp_flags->layers_opt =
        hypotheses->add_option("--layers", hyp_flags->layers, "target layer ordinals");
    hyp_flags->repeat_opt =
        hypotheses->add_option("--repeat", hyp_flags->repeat, "runs per grid cell");
    hyp_flags->long_opt =
        hypotheses->add_flag("--long", hyp_flags->long_grid, "include the 900-epoch settings");
    hyp_flags->schedule_opt = hypotheses->add_option("--pretrain-schedule", hyp_flags->lr_schedule,
                                                     "schedule for the unpruned model");
    hypotheses->callback([hyp_flags] {
        const auto outputs = isoprune::cmd_hypotheses(hyp_flags->build(true));
        std::cout << "report: " << outputs.report_csv << "\n";
        for (const auto& row : outputs.rows) {
            std::cout << row.setting << ": lr0.001 " << row.mean_small << " (" << row.std_small
                      << "), lr0.01 " << row.mean_big << " (" << row.std_big << "), gain "
                      << row.gain << "\n";
        }
    });

    // sweep
    auto sweep_flags = std::make_shared<ConfigFlags>();
    auto sweep_ckpts = std::make_shared<std::vector<std::string>>();
    auto sweep_ratios = std::make_shared<std::vector<double>>();
    CLI::App* sweep = app.add_subcommand("sweep", "mean JSV vs pruning ratio");
    sweep_flags->add_common(sweep);
    sweep->add_option("--checkpoint", *sweep_ckpts, "pretrained checkpoint(s)")->required();
    sweep->add_option("--ratios", *sweep_ratios, "pruning ratios, e.g. 0 0.3 0.5 0.7 0.9")
        ->required();
    sweep->callback([sweep_flags, sweep_ckpts, sweep_ratios] {
        const auto outputs =
            isoprune::cmd_sweep(sweep_flags->build(true), *sweep_ckpts, *sweep_ratios);
        std::cout << "report: " << outputs.report_csv << "\n";
        for (const auto& row : outputs.rows) {
            std::cout << row.arch << " ratio " << row.ratio << " -> mean JSV " << row.jsv_mean
                      << "\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
