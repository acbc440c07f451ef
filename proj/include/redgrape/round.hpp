#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <redgrape/baselines.hpp>
#include <redgrape/config.hpp>
#include <redgrape/messages.hpp>
#include <redgrape/metrics.hpp>
#include <redgrape/protocol.hpp>

namespace redgrape {

struct ServerState {
    ParamSet model;
    PrototypeTable prototypes;
    int round = 0;  // last completed round; 0 before training
};

struct RoundMetrics {
    int round = 0;
    std::vector<int> participants;
    double train_loss = 0.0;  // data-size weighted mean of client train losses
    EvalReport eval;
    std::vector<std::string> warnings;
};

// One federated round: sample participants, train them locally on the current
// broadcast (method per cfg; `baseline` must be set for non-redgrape methods),
// aggregate, refresh prototypes, evaluate. Re-balancing engages from round 2.
// Clients with empty shards are skipped with a warning; a round where every
// participant is empty is a protocol error.
RoundMetrics run_round(ServerState& state, const std::vector<ClientShard>& shards,
                       const GlobalDataset& test_set, const std::set<int>& tail_set,
                       const ExperimentConfig& cfg, const std::optional<BaselineKind>& baseline,
                       std::uint64_t run_seed);

}  // namespace redgrape
