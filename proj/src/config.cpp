#include "redgrape/config.hpp"

#include <cstdlib>

#include "redgrape/errors.hpp"

namespace redgrape {

std::string to_string(Method m) {
    switch (m) {
        case Method::RedGrape: return "redgrape";
        case Method::FedAvgCE: return "fedavg_ce";
        case Method::FedFocal: return "fed_focal";
        case Method::RatioLoss: return "ratio_loss";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "redgrape") return Method::RedGrape;
    if (name == "fedavg_ce") return Method::FedAvgCE;
    if (name == "fed_focal") return Method::FedFocal;
    if (name == "ratio_loss") return Method::RatioLoss;
    throw ConfigError("method: unknown value '" + name +
                      "' (expected redgrape, fedavg_ce, fed_focal or ratio_loss)");
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
    if (cfg.csv_train.empty() != cfg.csv_test.empty()) {
        fail("csv_train/csv_test", "CSV mode needs both a train and a test file");
    }
    if (cfg.synthetic()) {
        if (cfg.num_classes < 2) fail("num_classes", "must be >= 2");
        if (cfg.dim < 2) fail("dim", "must be >= 2");
        if (cfg.n0 < 1) fail("n0", "must be >= 1");
        if (cfg.ir < 1.0) fail("ir", "must be >= 1");
        if (cfg.sigma <= 0.0) fail("sigma", "must be > 0");
        if (cfg.test_per_class < 1) fail("test_per_class", "must be >= 1");
    }
    if (cfg.alpha <= 0.0) fail("alpha", "must be > 0");
    if (cfg.n_clients < 1) fail("n_clients", "must be >= 1");
    if (cfg.clients_per_round < 1 || cfg.clients_per_round > cfg.n_clients) {
        fail("clients_per_round", "must be in [1, n_clients]");
    }
    if (cfg.rounds < 1) fail("rounds", "must be >= 1");
    if (cfg.epochs < 1) fail("epochs", "must be >= 1");
    if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
    if (cfg.local_lr <= 0.0) fail("local_lr", "must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail("momentum", "must be in [0, 1)");
    if (cfg.server_lr <= 0.0) fail("server_lr", "must be > 0");
    for (int w : cfg.encoder_dims) {
        if (w < 1) fail("encoder_dims", "every width must be >= 1");
    }
    if (cfg.lambda < 0.0) fail("lambda", "must be >= 0");
    if (cfg.threshold_t < 1) fail("threshold_t", "must be >= 1");
    if (cfg.focal_gamma < 0.0) fail("focal_gamma", "must be >= 0");
    if (cfg.ratio_beta < 0.0) fail("ratio_beta", "must be >= 0");
    if (!cfg.ratio_vector.empty()) {
        if (cfg.synthetic() && static_cast<int>(cfg.ratio_vector.size()) != cfg.num_classes) {
            fail("ratio_vector", "length must equal num_classes");
        }
        for (double v : cfg.ratio_vector) {
            if (v < 0.0) fail("ratio_vector", "entries must be >= 0");
        }
    }
    if (cfg.seeds.empty()) fail("seeds", "at least one seed is required");
    if (cfg.out_dir.empty()) fail("out_dir", "must not be empty");
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    if (dir.is_absolute()) return dir;
    if (const char* root = std::getenv("REDGRAPE_OUT"); root != nullptr && *root != '\0') {
        return std::filesystem::path(root) / dir;
    }
    return dir;
}

}  // namespace redgrape
