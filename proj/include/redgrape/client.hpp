#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>

#include <redgrape/data.hpp>
#include <redgrape/messages.hpp>
#include <redgrape/nn.hpp>

namespace redgrape {

// Knobs for one client's local pass. `rebalance_factor` is the lambda that
// scales the balanced correction; `threshold_t` is the per-class cap when
// drawing the balanced subset. With `prototypes_only` the correction uses the
// global prototype table for every class, ignoring local real samples.
struct LocalTrainConfig {
    double learning_rate = 0.01;
    int epochs = 5;
    int batch_size = 64;
    double momentum = 0.7;
    double rebalance_factor = 0.1;
    Count threshold_t = 8;
    bool rebalance_active = false;
    bool prototypes_only = false;
};

// Per-class mean CE gradient wrt the main classifier, evaluated at `params`
// as received (before any local steps) over all of the client's samples of
// each class it owns. Logits are main-classifier only.
std::map<int, Matrix> compute_local_prototypes(const ParamSet& params,
                                               const ClientShard& shard);

// Mean CE gradient wrt the main classifier over the subset's samples of class
// `label`, at the current `params`. `label` must be present in the subset.
Matrix real_class_gradient(const ParamSet& params, const ClientShard& shard,
                           const BalancedSubset& subset, int label);

// `real_classes` and `proto_classes` partition the full label set
// {0..c_total-1}; a proto class with no stored prototype still belongs here,
// it just contributed zero.
struct MixedBalancedGradient {
    Matrix matrix;
    std::set<int> real_classes;
    std::set<int> proto_classes;
};

// (sum of real per-class gradients + sum of stored prototypes for the
// remaining classes) / c_total. `real_grads` must be keyed exactly by
// `real_classes`. `rows`/`cols` fix the result shape so the degenerate
// no-contribution case still yields a well-formed zero matrix.
MixedBalancedGradient mixed_balanced_gradient(
    const std::map<int, Matrix>& real_grads, const PrototypeTable& prototypes,
    const std::set<int>& real_classes, int c_total, Eigen::Index rows,
    Eigen::Index cols);

// g_local + lambda * (||g_local|| / ||g_bal||) * g_bal. Falls back to g_local
// alone when lambda == 0 or ||g_bal|| < 1e-12 (nothing to balance against).
Matrix rebalanced_gradient(const Matrix& g_local, const Matrix& g_bal,
                           double lambda);

// One descent step on the main classifier using the re-balanced gradient.
Matrix rebalanced_w_step(const Matrix& w, const Matrix& g_local,
                         const Matrix& g_bal, double lr, double lambda);

namespace detail {

// Shared local-training engine. Runs `epochs` passes of mini-batch SGD with
// momentum starting from `global`, then reports the parameter delta
// (global - trained), sample count and mean train loss. When `prototypes` is
// non-null and cfg.rebalance_active and lambda != 0, each step replaces the
// main classifier's gradient with the re-balanced combination; momentum sees
// the combined gradient. When `collect_prototypes`, per-class prototype
// gradients are computed at `global` before any step and attached to the
// report. Returns nullopt for an empty shard.
//
// Batch order comes from a stream derived from `round_seed`; the balanced
// subset (drawn once, before the first step) uses a separate stream so both
// paths consume the loader stream identically.
std::optional<ClientRoundReport> run_local_training(
    const ParamSet& global, const ClientShard& shard,
    const LocalTrainConfig& cfg, const LossKind& loss,
    const PrototypeTable* prototypes, bool collect_prototypes,
    std::uint64_t round_seed);

}  // namespace detail

// Full local pass of the re-balancing method: prototypes extracted at the
// received parameters, CE training on real batches, and (when active) the
// per-step balanced correction of the main classifier.
std::optional<ClientRoundReport> local_train(const ParamSet& global,
                                             const PrototypeTable& prototypes,
                                             const ClientShard& shard,
                                             const LocalTrainConfig& cfg,
                                             std::uint64_t round_seed);

}  // namespace redgrape
