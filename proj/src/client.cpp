#include "redgrape/client.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "redgrape/errors.hpp"

namespace redgrape {

namespace {

// Group sample indices by label, ascending labels via std::map.
std::map<int, std::vector<int>> indices_by_class(const ClientShard& shard) {
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < static_cast<int>(shard.samples.size()); ++i) {
        by_class[shard.samples[static_cast<std::size_t>(i)].label].push_back(i);
    }
    return by_class;
}

Matrix class_mean_w_gradient(const ParamSet& params, const ClientShard& shard,
                             const std::vector<int>& indices, int label) {
    const Matrix x = batch_features(shard.samples, indices);
    const IntVector y = IntVector::Constant(static_cast<Eigen::Index>(indices.size()), label);
    return main_classifier_ce_gradient(params, x, y);
}

}  // namespace

std::map<int, Matrix> compute_local_prototypes(const ParamSet& params, const ClientShard& shard) {
    std::map<int, Matrix> prototypes;
    for (const auto& [label, indices] : indices_by_class(shard)) {
        prototypes.emplace(label, class_mean_w_gradient(params, shard, indices, label));
    }
    return prototypes;
}

Matrix real_class_gradient(const ParamSet& params, const ClientShard& shard,
                           const BalancedSubset& subset, int label) {
    const auto it = subset.per_class.find(label);
    if (it == subset.per_class.end() || it->second.empty()) {
        throw std::invalid_argument("real_class_gradient: class " + std::to_string(label) +
                                    " is not part of the balanced subset");
    }
    return class_mean_w_gradient(params, shard, it->second, label);
}

MixedBalancedGradient mixed_balanced_gradient(const std::map<int, Matrix>& real_grads,
                                              const PrototypeTable& prototypes,
                                              const std::set<int>& real_classes, int c_total,
                                              Eigen::Index rows, Eigen::Index cols) {
    if (c_total < 1) throw std::invalid_argument("mixed_balanced_gradient: c_total must be >= 1");
    if (real_grads.size() != real_classes.size()) {
        throw std::invalid_argument("mixed_balanced_gradient: real_grads must be keyed exactly by real_classes");
    }

    MixedBalancedGradient out;
    out.real_classes = real_classes;
    out.matrix = Matrix::Zero(rows, cols);
    for (int c = 0; c < c_total; ++c) {
        if (real_classes.count(c) != 0) {
            const auto it = real_grads.find(c);
            if (it == real_grads.end()) {
                throw std::invalid_argument("mixed_balanced_gradient: missing real gradient for class " +
                                            std::to_string(c));
            }
            if (it->second.rows() != rows || it->second.cols() != cols) {
                throw std::invalid_argument("mixed_balanced_gradient: gradient shape mismatch for class " +
                                            std::to_string(c));
            }
            out.matrix += it->second;
        } else {
            out.proto_classes.insert(c);
            if (c < prototypes.num_classes() && prototypes.has(c)) {
                const Matrix& g = prototypes.entry(c).gradient;
                if (g.rows() != rows || g.cols() != cols) {
                    throw std::invalid_argument("mixed_balanced_gradient: prototype shape mismatch for class " +
                                                std::to_string(c));
                }
                out.matrix += g;
            }
        }
    }
    out.matrix /= static_cast<double>(c_total);
    return out;
}

Matrix rebalanced_gradient(const Matrix& g_local, const Matrix& g_bal, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("rebalanced_gradient: lambda must be >= 0");
    if (lambda == 0.0) return g_local;
    const double bal_norm = frobenius_norm(g_bal);
    // An (almost) empty balanced gradient carries no usable direction; fall
    // back to the plain local gradient instead of dividing by ~0.
    if (bal_norm < 1e-12) return g_local;
    const double scale = lambda * frobenius_norm(g_local) / bal_norm;
    return g_local + scale * g_bal;
}

Matrix rebalanced_w_step(const Matrix& w, const Matrix& g_local, const Matrix& g_bal, double lr,
                         double lambda) {
    if (lr <= 0.0) throw std::invalid_argument("rebalanced_w_step: lr must be > 0");
    if (w.rows() != g_local.rows() || w.cols() != g_local.cols()) {
        throw std::invalid_argument("rebalanced_w_step: shape mismatch between w and g_local");
    }
    return w - lr * rebalanced_gradient(g_local, g_bal, lambda);
}

namespace detail {

std::optional<ClientRoundReport> run_local_training(const ParamSet& global,
                                                    const ClientShard& shard,
                                                    const LocalTrainConfig& cfg,
                                                    const LossKind& loss,
                                                    const PrototypeTable* prototypes,
                                                    bool collect_prototypes,
                                                    std::uint64_t round_seed) {
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("local training: learning_rate must be > 0");
    if (cfg.epochs < 1) throw std::invalid_argument("local training: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("local training: batch_size must be >= 1");
    if (cfg.rebalance_factor < 0.0) throw std::invalid_argument("local training: rebalance_factor must be >= 0");

    const int n = static_cast<int>(shard.samples.size());
    if (n == 0) return std::nullopt;

    ClientRoundReport report;
    report.client_id = shard.client_id;
    report.sample_count = n;
    if (collect_prototypes) {
        report.local_prototypes = compute_local_prototypes(global, shard);
    }

    // lambda == 0 contributes nothing; skipping keeps the step sequence
    // bit-identical to the plain path.
    const bool rebalance =
        prototypes != nullptr && cfg.rebalance_active && cfg.rebalance_factor != 0.0;

    BalancedSubset subset;
    std::set<int> real_classes;
    if (rebalance && !cfg.prototypes_only) {
        std::tie(subset, real_classes) = sample_balanced_subset(
            shard, cfg.threshold_t, derive_seed(round_seed, Stream::BalancedSubset));
    }
    const int c_total =
        prototypes != nullptr ? std::max<int>(prototypes->num_classes(),
                                              static_cast<int>(global.num_classes()))
                              : static_cast<int>(global.num_classes());

    ParamSet params = global;
    Gradients momentum_state = zero_like(params);
    Rng loader(derive_seed(round_seed, Stream::BatchLoader));

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    double loss_sum = 0.0;
    long steps = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        loader.shuffle(order);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int len = std::min(cfg.batch_size, n - start);
            const std::vector<int> batch(order.begin() + start, order.begin() + start + len);
            const Matrix x = batch_features(shard.samples, batch);
            const IntVector y = batch_labels(shard.samples, batch);

            auto [batch_loss, grads] = backward(params, x, y, loss);
            loss_sum += batch_loss;
            ++steps;

            if (rebalance) {
                std::map<int, Matrix> real_grads;
                for (int c : real_classes) {
                    real_grads.emplace(c, real_class_gradient(params, shard, subset, c));
                }
                const MixedBalancedGradient bal = mixed_balanced_gradient(
                    real_grads, *prototypes, real_classes, c_total,
                    params.main_classifier.rows(), params.main_classifier.cols());
                grads.main_classifier =
                    rebalanced_gradient(grads.main_classifier, bal.matrix, cfg.rebalance_factor);
            }
            sgd_step(params, grads, cfg.learning_rate, momentum_state, cfg.momentum);
        }
    }

    report.mean_train_loss = loss_sum / static_cast<double>(steps);
    report.local_update = param_delta(global, params);
    return report;
}

}  // namespace detail

std::optional<ClientRoundReport> local_train(const ParamSet& global,
                                             const PrototypeTable& prototypes,
                                             const ClientShard& shard, const LocalTrainConfig& cfg,
                                             std::uint64_t round_seed) {
    return detail::run_local_training(global, shard, cfg, CrossEntropyLoss{}, &prototypes,
                                      /*collect_prototypes=*/true, round_seed);
}

}  // namespace redgrape
