#include "redgrape/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <system_error>
#include <utility>

#include <json.hpp>

#include "redgrape/errors.hpp"

#ifndef REDGRAPE_VERSION
#define REDGRAPE_VERSION "dev"
#endif

namespace redgrape {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest round-trip decimal form, for CSV cells.
std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, end);
}

json round_record(const RoundMetrics& m) {
    json rec;
    rec["round"] = m.round;
    rec["participants"] = m.participants;
    rec["train_loss"] = m.train_loss;
    rec["overall_accuracy"] = m.eval.overall_accuracy;
    rec["tail_accuracy"] = m.eval.tail_accuracy;
    rec["mean_test_loss"] = m.eval.mean_loss;
    rec["per_class_accuracy"] = m.eval.per_class_accuracy;
    rec["warnings"] = m.warnings;
    return rec;
}

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["method"] = to_string(cfg.method);
    j["csv_train"] = cfg.csv_train;
    j["csv_test"] = cfg.csv_test;
    j["num_classes"] = cfg.num_classes;
    j["dim"] = cfg.dim;
    j["n0"] = cfg.n0;
    j["ir"] = cfg.ir;
    j["sigma"] = cfg.sigma;
    j["test_per_class"] = cfg.test_per_class;
    j["alpha"] = cfg.alpha;
    j["n_clients"] = cfg.n_clients;
    j["clients_per_round"] = cfg.clients_per_round;
    j["rounds"] = cfg.rounds;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["local_lr"] = cfg.local_lr;
    j["momentum"] = cfg.momentum;
    j["server_lr"] = cfg.server_lr;
    j["encoder_dims"] = cfg.encoder_dims;
    j["classifier_bias"] = cfg.classifier_bias;
    j["lambda"] = cfg.lambda;
    j["threshold_t"] = cfg.threshold_t;
    j["prototypes_only"] = cfg.prototypes_only;
    j["focal_gamma"] = cfg.focal_gamma;
    j["ratio_alpha"] = cfg.ratio_alpha;
    j["ratio_beta"] = cfg.ratio_beta;
    j["ratio_vector"] = cfg.ratio_vector;
    j["disable_aux_classifier"] = cfg.disable_aux_classifier;
    j["disable_rebalance"] = cfg.disable_rebalance;
    j["seeds"] = cfg.seeds;
    j["out_dir"] = cfg.out_dir;
    j["export_curves"] = cfg.export_curves;
    return j;
}

template <typename PerRound>
std::vector<RoundMetrics> run_seed_rounds(const ExperimentConfig& cfg, std::uint64_t seed,
                                          PerRound&& per_round) {
    const SeedData data = build_seed_data(cfg, seed);
    const int c_total = data.train.num_classes();

    ServerState state;
    state.model = init_model(cfg, c_total, static_cast<int>(data.train.dim()), seed);
    state.prototypes = PrototypeTable(c_total);

    const std::optional<BaselineKind> baseline = make_baseline(cfg, data.train.class_counts);

    std::vector<RoundMetrics> rounds;
    rounds.reserve(static_cast<std::size_t>(cfg.rounds));
    for (int t = 1; t <= cfg.rounds; ++t) {
        rounds.push_back(
            run_round(state, data.shards, data.test, data.tail, cfg, baseline, seed));
        per_round(rounds.back());
    }
    return rounds;
}

AccuracySummary last10_summary(const std::vector<RoundMetrics>& rounds) {
    std::vector<EvalReport> evals;
    evals.reserve(rounds.size());
    for (const auto& r : rounds) evals.push_back(r.eval);
    return last_k_average(evals, std::min<std::size_t>(10, evals.size()));
}

// Removes everything this run created (on failure), leaving preexisting
// content alone.
struct ArtifactTracker {
    fs::path root;
    bool root_existed = false;
    std::vector<fs::path> files;

    void cleanup() noexcept {
        std::error_code ec;
        if (!root_existed) {
            fs::remove_all(root, ec);
            return;
        }
        for (const auto& f : files) fs::remove(f, ec);
    }
};

}  // namespace

SeedData build_seed_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedData data;
    if (cfg.synthetic()) {
        const std::vector<Count> counts = longtail_counts(cfg.n0, cfg.ir, cfg.num_classes);
        const std::vector<Vector> means = gaussian_class_means(
            cfg.num_classes, cfg.dim, derive_seed(seed, Stream::MixtureMeans));
        data.train = sample_gaussian_mixture(means, cfg.sigma, counts,
                                             derive_seed(seed, Stream::TrainData));
        const std::vector<Count> test_counts(static_cast<std::size_t>(cfg.num_classes),
                                             cfg.test_per_class);
        data.test = sample_gaussian_mixture(means, cfg.sigma, test_counts,
                                            derive_seed(seed, Stream::TestData));
    } else {
        data.train = load_csv_dataset(cfg.csv_train);
        data.test = load_csv_dataset(cfg.csv_test);
        if (data.test.num_classes() != data.train.num_classes()) {
            throw ConfigError("csv_test: has " + std::to_string(data.test.num_classes()) +
                              " classes but csv_train has " +
                              std::to_string(data.train.num_classes()));
        }
        if (data.test.dim() != data.train.dim()) {
            throw ConfigError("csv_test: feature dimension differs from csv_train");
        }
    }
    data.shards =
        dirichlet_partition(data.train, cfg.n_clients, cfg.alpha, derive_seed(seed, Stream::Partition));
    data.tail = tail_class_set(data.train.class_counts);
    return data;
}

ParamSet init_model(const ExperimentConfig& cfg, int num_classes, int data_dim,
                    std::uint64_t seed) {
    std::vector<int> dims;
    dims.reserve(cfg.encoder_dims.size() + 1);
    dims.push_back(data_dim);
    dims.insert(dims.end(), cfg.encoder_dims.begin(), cfg.encoder_dims.end());
    const bool with_aux = cfg.method == Method::RedGrape && !cfg.disable_aux_classifier;
    Rng rng(derive_seed(seed, Stream::ModelInit));
    return make_mlp(dims, num_classes, with_aux, cfg.classifier_bias, rng);
}

std::optional<BaselineKind> make_baseline(const ExperimentConfig& cfg,
                                          const std::vector<Count>& train_counts) {
    switch (cfg.method) {
        case Method::RedGrape:
            return std::nullopt;
        case Method::FedAvgCE:
            return BaselineKind{FedAvgCE{}};
        case Method::FedFocal:
            return BaselineKind{FedFocal{cfg.focal_gamma}};
        case Method::RatioLoss: {
            RatioLossSpec spec;
            spec.alpha = cfg.ratio_alpha;
            spec.beta = cfg.ratio_beta;
            if (cfg.ratio_vector.empty()) {
                spec.ratio = ratio_vector_oracle(train_counts);
            } else {
                if (cfg.ratio_vector.size() != train_counts.size()) {
                    throw ConfigError("ratio_vector: length must equal the number of classes");
                }
                spec.ratio = Eigen::Map<const Vector>(cfg.ratio_vector.data(),
                                                      static_cast<Eigen::Index>(cfg.ratio_vector.size()));
            }
            return BaselineKind{std::move(spec)};
        }
    }
    return std::nullopt;
}

std::vector<RoundMetrics> run_single_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    return run_seed_rounds(cfg, seed, [](const RoundMetrics&) {});
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentResult result;
    result.out_dir = resolve_out_dir(cfg);

    ArtifactTracker tracker;
    tracker.root = result.out_dir;
    tracker.root_existed = fs::exists(result.out_dir);
    fs::create_directories(result.out_dir);

    try {
        for (std::uint64_t seed : cfg.seeds) {
            const fs::path metrics_path =
                result.out_dir / ("seed_" + std::to_string(seed) + ".jsonl");
            tracker.files.push_back(metrics_path);
            std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
            if (!metrics) {
                throw ConfigError("out_dir: cannot write " + metrics_path.string());
            }

            SeedRunResult run;
            run.seed = seed;
            run.rounds = run_seed_rounds(cfg, seed, [&metrics](const RoundMetrics& m) {
                metrics << round_record(m).dump() << '\n';
                metrics.flush();
            });
            run.last10 = last10_summary(run.rounds);

            // The shard manifest depends only on (config, seed); rebuilding it
            // here avoids threading shard state out of the training loop.
            const fs::path shards_path =
                result.out_dir / ("shards_seed_" + std::to_string(seed) + ".json");
            tracker.files.push_back(shards_path);
            std::ofstream shards_file(shards_path, std::ios::binary | std::ios::trunc);
            shards_file << shard_manifest_json(build_seed_data(cfg, seed).shards) << '\n';

            if (cfg.export_curves) {
                const fs::path curve_path =
                    result.out_dir / ("curve_seed_" + std::to_string(seed) + ".csv");
                tracker.files.push_back(curve_path);
                std::ofstream curve(curve_path, std::ios::binary | std::ios::trunc);
                curve << "round,overall_accuracy,tail_accuracy\n";
                for (const auto& m : run.rounds) {
                    curve << m.round << ',' << fmt_double(m.eval.overall_accuracy) << ','
                          << fmt_double(m.eval.tail_accuracy) << '\n';
                }
            }

            if (progress != nullptr) {
                (*progress) << "seed " << seed << ": last-10 overall "
                            << fmt_double(run.last10.overall) << ", tail "
                            << fmt_double(run.last10.tail) << '\n';
            }
            result.per_seed.push_back(std::move(run));
        }

        const auto n = static_cast<double>(result.per_seed.size());
        for (const auto& run : result.per_seed) {
            result.overall_mean += run.last10.overall / n;
            result.tail_mean += run.last10.tail / n;
        }
        for (const auto& run : result.per_seed) {
            const double od = run.last10.overall - result.overall_mean;
            const double td = run.last10.tail - result.tail_mean;
            result.overall_stdev += od * od / n;
            result.tail_stdev += td * td / n;
        }
        result.overall_stdev = std::sqrt(result.overall_stdev);
        result.tail_stdev = std::sqrt(result.tail_stdev);

        json summary;
        summary["last10_overall"] = {{"mean", result.overall_mean},
                                     {"stdev", result.overall_stdev}};
        summary["last10_tail"] = {{"mean", result.tail_mean}, {"stdev", result.tail_stdev}};
        json per_seed = json::array();
        for (const auto& run : result.per_seed) {
            per_seed.push_back({{"seed", run.seed},
                                {"overall", run.last10.overall},
                                {"tail", run.last10.tail}});
        }
        summary["per_seed"] = std::move(per_seed);
        const fs::path summary_path = result.out_dir / "summary.json";
        tracker.files.push_back(summary_path);
        std::ofstream summary_file(summary_path, std::ios::binary | std::ios::trunc);
        summary_file << summary.dump(2) << '\n';

        const double wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json manifest;
        manifest["config"] = config_json(cfg);
        manifest["resolved_out_dir"] = result.out_dir.string();
        manifest["seeds"] = cfg.seeds;
        manifest["version"] = REDGRAPE_VERSION;
        manifest["wall_time_seconds"] = wall_seconds;
        const fs::path manifest_path = result.out_dir / "manifest.json";
        tracker.files.push_back(manifest_path);
        std::ofstream manifest_file(manifest_path, std::ios::binary | std::ios::trunc);
        manifest_file << manifest.dump(2) << '\n';
    } catch (...) {
        tracker.cleanup();
        throw;
    }
    return result;
}

namespace {

double parse_number(const std::string& axis, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        throw ConfigError(axis + ": cannot parse value '" + value + "'");
    }
    if (used != value.size()) {
        throw ConfigError(axis + ": cannot parse value '" + value + "'");
    }
    return v;
}

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
    ExperimentConfig cfg = base;
    if (axis == "lambda") {
        cfg.lambda = parse_number(axis, value);
    } else if (axis == "threshold_t") {
        if (value == "inf") {
            cfg.prototypes_only = true;
        } else {
            cfg.threshold_t = static_cast<Count>(parse_number(axis, value));
        }
    } else if (axis == "ir") {
        cfg.ir = parse_number(axis, value);
    } else if (axis == "alpha") {
        cfg.alpha = parse_number(axis, value);
    } else {
        throw ConfigError("axis: unknown sweep axis '" + axis +
                          "' (expected lambda, threshold_t, ir or alpha)");
    }
    return cfg;
}

}  // namespace

std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                  const std::vector<std::string>& values,
                                  std::ostream* progress) {
    if (values.empty()) throw ConfigError("values: sweep needs at least one value");
    const fs::path base_out = resolve_out_dir(base);

    std::vector<SweepPoint> points;
    points.reserve(values.size());
    for (const std::string& value : values) {
        ExperimentConfig cfg = apply_axis(base, axis, value);
        cfg.out_dir = (base_out / (axis + "=" + value)).string();
        if (progress != nullptr) {
            (*progress) << "sweep " << axis << "=" << value << '\n';
        }
        points.push_back({value, run_experiment(cfg, progress)});
    }

    fs::create_directories(base_out);
    std::ofstream cmp(base_out / "comparison.csv", std::ios::binary | std::ios::trunc);
    cmp << "axis,value,overall_mean,overall_stdev,tail_mean,tail_stdev\n";
    for (const auto& p : points) {
        cmp << axis << ',' << p.value << ',' << fmt_double(p.result.overall_mean) << ','
            << fmt_double(p.result.overall_stdev) << ',' << fmt_double(p.result.tail_mean) << ','
            << fmt_double(p.result.tail_stdev) << '\n';
    }
    return points;
}

}  // namespace redgrape
