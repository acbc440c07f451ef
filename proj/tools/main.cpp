#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <redgrape/errors.hpp>
#include <redgrape/experiment.hpp>

namespace {

struct CliOptions {
    redgrape::ExperimentConfig cfg;
    std::string method = "redgrape";
    std::string axis;
    std::vector<std::string> values;
};

void add_experiment_flags(CLI::App& cmd, CliOptions& opt) {
    cmd.set_config("--config", "", "TOML-like config file; command-line flags win");

    cmd.add_option("--method", opt.method, "Training method")
        ->check(CLI::IsMember({"redgrape", "fedavg_ce", "fed_focal", "ratio_loss"}))
        ->capture_default_str();
    cmd.add_option("--csv-train", opt.cfg.csv_train,
                   "Training CSV (header 'label,f0,...'); empty -> synthetic mixture");
    cmd.add_option("--csv-test", opt.cfg.csv_test, "Test CSV, required with --csv-train");
    cmd.add_option("--classes", opt.cfg.num_classes, "Synthetic class count")
        ->capture_default_str();
    cmd.add_option("--dim", opt.cfg.dim, "Synthetic feature dimension")->capture_default_str();
    cmd.add_option("--n0", opt.cfg.n0, "Head-class training count")->capture_default_str();
    cmd.add_option("--ir", opt.cfg.ir, "Imbalance ratio head/tail")->capture_default_str();
    cmd.add_option("--sigma", opt.cfg.sigma, "Mixture noise scale")->capture_default_str();
    cmd.add_option("--test-per-class", opt.cfg.test_per_class, "Balanced test count per class")
        ->capture_default_str();
    cmd.add_option("--alpha", opt.cfg.alpha, "Dirichlet concentration of the client split")
        ->capture_default_str();
    cmd.add_option("--clients", opt.cfg.n_clients, "Number of clients")->capture_default_str();
    cmd.add_option("--clients-per-round", opt.cfg.clients_per_round,
                   "Participants sampled each round")
        ->capture_default_str();
    cmd.add_option("--rounds", opt.cfg.rounds, "Federated rounds")->capture_default_str();
    cmd.add_option("--epochs", opt.cfg.epochs, "Local epochs per round")->capture_default_str();
    cmd.add_option("--batch-size", opt.cfg.batch_size, "Local mini-batch size")
        ->capture_default_str();
    cmd.add_option("--local-lr", opt.cfg.local_lr, "Client learning rate")->capture_default_str();
    cmd.add_option("--momentum", opt.cfg.momentum, "Client SGD momentum")->capture_default_str();
    cmd.add_option("--server-lr", opt.cfg.server_lr, "Server aggregation step size")
        ->capture_default_str();
    cmd.add_option("--encoder-dims", opt.cfg.encoder_dims,
                   "Encoder widths after the input layer; empty = linear model")
        ->capture_default_str();
    cmd.add_flag("--classifier-bias", opt.cfg.classifier_bias,
                 "Give the classifiers a bias row (rides inside W for norms/prototypes)");
    cmd.add_option("--lambda", opt.cfg.lambda, "Re-balance factor (redgrape only)")
        ->capture_default_str();
    cmd.add_option("--threshold-t", opt.cfg.threshold_t,
                   "Min local samples for a class to contribute real data")
        ->capture_default_str();
    cmd.add_flag("--prototypes-only", opt.cfg.prototypes_only,
                 "Balanced gradient from prototypes for every class (threshold = inf)");
    cmd.add_option("--focal-gamma", opt.cfg.focal_gamma, "Focal loss gamma (fed_focal)")
        ->capture_default_str();
    cmd.add_option("--ratio-alpha", opt.cfg.ratio_alpha, "Ratio loss alpha (ratio_loss)")
        ->capture_default_str();
    cmd.add_option("--ratio-beta", opt.cfg.ratio_beta, "Ratio loss beta (ratio_loss)")
        ->capture_default_str();
    cmd.add_option("--ratio-vector", opt.cfg.ratio_vector,
                   "Per-class ratio weights; empty -> oracle from true global counts");
    cmd.add_flag("--disable-aux-classifier", opt.cfg.disable_aux_classifier,
                 "Ablation: drop the auxiliary classifier stream");
    cmd.add_flag("--disable-rebalance", opt.cfg.disable_rebalance,
                 "Ablation: never apply the balanced correction");
    cmd.add_option("--seeds", opt.cfg.seeds, "Experiment seeds")->capture_default_str();
    cmd.add_option("--out", opt.cfg.out_dir,
                   "Output directory (relative paths go under $REDGRAPE_OUT when set)")
        ->capture_default_str();
    cmd.add_flag("--export-curves", opt.cfg.export_curves,
                 "Also write per-seed round/accuracy CSV curves");
}

void warn_ignored_flags(const CLI::App& cmd, const CliOptions& opt) {
    if (opt.cfg.method == redgrape::Method::RedGrape) return;
    for (const char* name : {"--lambda", "--threshold-t", "--prototypes-only"}) {
        if (cmd.count(name) > 0) {
            std::cerr << "warning: " << name << " is ignored for baseline methods\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated-learning simulator for long-tailed data: "
                 "classifier re-balancing with gradient prototypes, plus FedAvg/focal/ratio baselines"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment over its seeds");
    add_experiment_flags(*run_cmd, opt);

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Run one experiment per value of a config axis");
    add_experiment_flags(*sweep_cmd, opt);
    sweep_cmd->add_option("--axis", opt.axis, "Swept knob: lambda, threshold_t, ir or alpha")
        ->required();
    sweep_cmd
        ->add_option("--values", opt.values,
                     "Values for the axis (threshold_t also accepts 'inf')")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        opt.cfg.method = redgrape::parse_method(opt.method);
        if (run_cmd->parsed()) {
            warn_ignored_flags(*run_cmd, opt);
            const auto result = redgrape::run_experiment(opt.cfg, &std::cout);
            std::cout << "last-10 overall " << result.overall_mean << " +- "
                      << result.overall_stdev << ", tail " << result.tail_mean << " +- "
                      << result.tail_stdev << '\n';
            std::cout << "artifacts: " << result.out_dir.string() << '\n';
        } else {
            warn_ignored_flags(*sweep_cmd, opt);
            const auto points = redgrape::run_sweep(opt.cfg, opt.axis, opt.values, &std::cout);
            std::cout << "artifacts: " << redgrape::resolve_out_dir(opt.cfg).string() << '\n';
            (void)points;
        }
    } catch (const redgrape::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
