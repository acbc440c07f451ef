#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <redgrape/config.hpp>
#include <redgrape/round.hpp>

namespace redgrape {

// Everything one seed's run derives from the experiment seed before training:
// datasets, the client split and the tail-class set.
struct SeedData {
    GlobalDataset train;
    GlobalDataset test;
    std::vector<ClientShard> shards;
    std::set<int> tail;
};

SeedData build_seed_data(const ExperimentConfig& cfg, std::uint64_t seed);

ParamSet init_model(const ExperimentConfig& cfg, int num_classes, int data_dim,
                    std::uint64_t seed);

// The BaselineKind for a non-redgrape method (nullopt for redgrape); the
// ratio baseline defaults to the oracle over true global counts.
std::optional<BaselineKind> make_baseline(const ExperimentConfig& cfg,
                                          const std::vector<Count>& train_counts);

// One seed end to end, in memory (no artifacts).
std::vector<RoundMetrics> run_single_seed(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::vector<RoundMetrics> rounds;
    AccuracySummary last10;  // over min(10, rounds) final rounds
};

struct ExperimentResult {
    std::filesystem::path out_dir;
    std::vector<SeedRunResult> per_seed;
    double overall_mean = 0.0;
    double overall_stdev = 0.0;  // population stdev across seeds
    double tail_mean = 0.0;
    double tail_stdev = 0.0;
};

// Runs every seed and writes the artifact set under the resolved output
// directory: per-seed metrics JSONL (one record per round), per-seed shard
// manifests, summary.json (cross-seed last-10 statistics), manifest.json
// (config echo, version, wall time) and optional per-seed accuracy-curve
// CSVs. Files created by a failing run are removed before the error
// propagates. `progress`, when given, receives one line per finished seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

struct SweepPoint {
    std::string value;
    ExperimentResult result;
};

// One experiment per value of `axis` (lambda, threshold_t, ir or alpha), each
// in its own "<axis>=<value>" subdirectory of the base out_dir, plus a merged
// comparison.csv. For axis threshold_t the value "inf" switches the balanced
// gradient to prototypes for every class.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                  const std::vector<std::string>& values,
                                  std::ostream* progress = nullptr);

}  // namespace redgrape
