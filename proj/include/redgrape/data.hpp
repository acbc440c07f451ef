#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "redgrape/nn.hpp"
#include "redgrape/rng.hpp"

namespace redgrape {

using Count = std::int64_t;

struct LabeledSample {
    Vector features;
    int label = 0;
};

struct GlobalDataset {
    std::vector<LabeledSample> samples;
    std::vector<Count> class_counts;

    int num_classes() const { return static_cast<int>(class_counts.size()); }
    Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().features.size(); }
    // max/min over classes with at least one sample.
    double imbalance_ratio() const;
};

struct ClientShard {
    int client_id = 0;
    std::vector<LabeledSample> samples;
    std::vector<Count> per_class_counts;

    std::set<int> label_set() const;
};

// Per-class index lists into the owning shard's samples; every listed class
// holds exactly the threshold count, drawn without replacement.
struct BalancedSubset {
    std::map<int, std::vector<int>> per_class;
};

// Exponential-decay class sizes: n_c = n0 * (1/ir)^(c / (C-1)), floored with
// a 1e-9 nudge against downward float error, clamped to at least 1.
std::vector<Count> longtail_counts(Count n0, double ir, int c_total);

// Head classes get n_head samples, the chosen tail classes n_head/ir
// (rounded to nearest).
std::vector<Count> binary_imbalance_counts(Count n_head, double ir, int c_total, const std::set<int>& tail_classes);

// Deterministic pairwise-distinct unit-norm class means.
std::vector<Vector> gaussian_class_means(int c_total, int dim, std::uint64_t seed);

// Isotropic Gaussian samples around the given means, deterministically
// shuffled. Exposed separately from synth_gaussian_mixture so train and test
// splits can share one set of means.
GlobalDataset sample_gaussian_mixture(const std::vector<Vector>& means, double sigma,
                                      const std::vector<Count>& counts, std::uint64_t seed);

GlobalDataset synth_gaussian_mixture(int c_total, int dim, const std::vector<Count>& counts,
                                     std::uint64_t seed, double sigma = 0.8);

// Split each class across clients by Dirichlet(alpha) proportions with
// largest-remainder rounding, so per-class totals are conserved exactly.
std::vector<ClientShard> dirichlet_partition(const GlobalDataset& ds, int n_clients, double alpha, std::uint64_t seed);

// Classes with at least t local samples contribute exactly t samples each,
// drawn without replacement; reseed per round to vary the draw across rounds.
std::pair<BalancedSubset, std::set<int>> sample_balanced_subset(const ClientShard& shard, Count t, std::uint64_t round_seed);

// CSV with header "label,f0,f1,...".
GlobalDataset load_csv_dataset(const std::string& path);

// Diagnostic JSON: one {client_id, per_class_counts} object per shard.
std::string shard_manifest_json(const std::vector<ClientShard>& shards);

// Column-per-sample feature matrix and label vector for a set of samples.
Matrix batch_features(const std::vector<LabeledSample>& samples, const std::vector<int>& indices);
IntVector batch_labels(const std::vector<LabeledSample>& samples, const std::vector<int>& indices);
Matrix dataset_features(const GlobalDataset& ds);
IntVector dataset_labels(const GlobalDataset& ds);

}  // namespace redgrape
