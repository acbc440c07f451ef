#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <redgrape/data.hpp>

namespace redgrape {

enum class Method { RedGrape, FedAvgCE, FedFocal, RatioLoss };

std::string to_string(Method m);
// Accepts the CLI spellings: redgrape, fedavg_ce, fed_focal, ratio_loss.
Method parse_method(const std::string& name);

// Every knob that can affect results. Defaults are the desk-scale profile:
// a 10-class Gaussian mixture at IR=100 over 10 clients, 100 rounds.
struct ExperimentConfig {
    Method method = Method::RedGrape;

    // Data: synthetic mixture unless CSV paths are given.
    std::string csv_train;  // both empty -> synthetic
    std::string csv_test;
    int num_classes = 10;
    int dim = 32;
    Count n0 = 1000;
    double ir = 100.0;
    double sigma = 0.8;
    Count test_per_class = 200;

    // Federation.
    double alpha = 1.0;  // Dirichlet concentration for the client split
    int n_clients = 10;
    int clients_per_round = 10;
    int rounds = 100;

    // Local optimization. lr/momentum validated on the default profile:
    // hotter settings (0.1/0.9) diverge before round 100.
    int epochs = 5;
    int batch_size = 64;
    double local_lr = 0.01;
    double momentum = 0.7;
    double server_lr = 1.0;

    // Model: encoder widths after the input layer; empty = linear model.
    std::vector<int> encoder_dims = {64, 32};
    bool classifier_bias = false;

    // Re-balancing method knobs.
    double lambda = 0.1;
    Count threshold_t = 8;
    bool prototypes_only = false;  // threshold "inf": prototypes for every class

    // Baseline knobs.
    double focal_gamma = 2.0;
    double ratio_alpha = 1.0;
    double ratio_beta = 0.1;
    std::vector<double> ratio_vector;  // empty -> oracle from global counts

    // Ablations.
    bool disable_aux_classifier = false;
    bool disable_rebalance = false;

    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "runs/exp";
    bool export_curves = false;

    bool synthetic() const { return csv_train.empty(); }
};

// Throws ConfigError naming the offending field on the first violated
// constraint.
void validate(const ExperimentConfig& cfg);

// Final output directory: $REDGRAPE_OUT (when set) prefixes a relative
// out_dir; absolute out_dir wins.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg);

}  // namespace redgrape
