#pragma once

#include <cstdint>
#include <optional>
#include <variant>

#include <redgrape/client.hpp>
#include <redgrape/data.hpp>
#include <redgrape/messages.hpp>
#include <redgrape/nn.hpp>

namespace redgrape {

struct FedAvgCE {};
struct FedFocal {
    double gamma = 2.0;
};
// `ratio` holds the per-class weight basis R; build it from true global
// counts with ratio_vector_oracle or supply any nonnegative vector.
struct RatioLossSpec {
    double alpha = 1.0;
    double beta = 0.1;
    Vector ratio;
};
using BaselineKind = std::variant<FedAvgCE, FedFocal, RatioLossSpec>;

// R[c] = max_j(n_j) / n_c: head classes weigh 1, tails proportionally more.
Vector ratio_vector_oracle(const std::vector<Count>& global_counts);

// Single-classifier local training on the chosen loss; same loader, optimizer
// and report contract as the re-balancing client, minus prototypes and the
// auxiliary stream. Returns nullopt for an empty shard.
std::optional<ClientRoundReport> baseline_local_train(const ParamSet& global,
                                                      const ClientShard& shard,
                                                      const BaselineKind& kind,
                                                      const LocalTrainConfig& cfg,
                                                      std::uint64_t round_seed);

}  // namespace redgrape
