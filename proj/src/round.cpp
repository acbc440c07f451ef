#include "redgrape/round.hpp"

#include <stdexcept>
#include <string>

#include "redgrape/client.hpp"
#include "redgrape/errors.hpp"

namespace redgrape {

RoundMetrics run_round(ServerState& state, const std::vector<ClientShard>& shards,
                       const GlobalDataset& test_set, const std::set<int>& tail_set,
                       const ExperimentConfig& cfg, const std::optional<BaselineKind>& baseline,
                       std::uint64_t run_seed) {
    const int t = state.round + 1;
    const bool redgrape_method = cfg.method == Method::RedGrape;
    if (!redgrape_method && !baseline.has_value()) {
        throw std::invalid_argument("run_round: baseline methods need a BaselineKind");
    }

    RoundMetrics metrics;
    metrics.round = t;
    metrics.participants = sample_participants(
        cfg.n_clients, cfg.clients_per_round, derive_seed(run_seed, Stream::Participants, t));

    LocalTrainConfig local;
    local.learning_rate = cfg.local_lr;
    local.epochs = cfg.epochs;
    local.batch_size = cfg.batch_size;
    local.momentum = cfg.momentum;
    local.rebalance_factor = cfg.lambda;
    local.threshold_t = cfg.threshold_t;
    local.prototypes_only = cfg.prototypes_only;
    local.rebalance_active = redgrape_method && !cfg.disable_rebalance && t >= 2;

    std::vector<ClientRoundReport> reports;
    reports.reserve(metrics.participants.size());
    for (int k : metrics.participants) {
        const ClientShard& shard = shards[static_cast<std::size_t>(k)];
        const std::uint64_t client_seed = derive_seed(run_seed, Stream::ClientRound, t, k);
        std::optional<ClientRoundReport> report;
        if (redgrape_method) {
            report = local_train(state.model, state.prototypes, shard, local, client_seed);
        } else {
            report = baseline_local_train(state.model, shard, *baseline, local, client_seed);
        }
        if (report.has_value()) {
            reports.push_back(std::move(*report));
        } else {
            metrics.warnings.push_back("client " + std::to_string(k) +
                                       " skipped: empty shard");
        }
    }
    if (reports.empty()) {
        throw ProtocolError("round " + std::to_string(t) +
                            ": every selected client had an empty shard");
    }

    Count total = 0;
    for (const auto& r : reports) total += r.sample_count;
    for (const auto& r : reports) {
        metrics.train_loss +=
            r.mean_train_loss * (static_cast<double>(r.sample_count) / static_cast<double>(total));
    }

    state.model = aggregate(state.model, reports, cfg.server_lr);
    if (redgrape_method) {
        state.prototypes = update_prototypes(state.prototypes, reports, t);
    }
    state.round = t;

    metrics.eval = evaluate(state.model, test_set, tail_set);
    metrics.eval.round = t;
    return metrics;
}

}  // namespace redgrape
