#include "redgrape/baselines.hpp"

#include <stdexcept>
#include <string>

namespace redgrape {

Vector ratio_vector_oracle(const std::vector<Count>& global_counts) {
    if (global_counts.empty()) throw std::invalid_argument("ratio_vector_oracle: empty counts");
    Count max_count = 0;
    for (std::size_t c = 0; c < global_counts.size(); ++c) {
        if (global_counts[c] <= 0) {
            throw std::invalid_argument("ratio_vector_oracle: class " + std::to_string(c) +
                                        " has nonpositive count");
        }
        max_count = std::max(max_count, global_counts[c]);
    }
    Vector r(static_cast<Eigen::Index>(global_counts.size()));
    for (std::size_t c = 0; c < global_counts.size(); ++c) {
        r[static_cast<Eigen::Index>(c)] =
            static_cast<double>(max_count) / static_cast<double>(global_counts[c]);
    }
    return r;
}

std::optional<ClientRoundReport> baseline_local_train(const ParamSet& global,
                                                      const ClientShard& shard,
                                                      const BaselineKind& kind,
                                                      const LocalTrainConfig& cfg,
                                                      std::uint64_t round_seed) {
    const LossKind loss = std::visit(
        [](const auto& k) -> LossKind {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, FedAvgCE>) {
                return CrossEntropyLoss{};
            } else if constexpr (std::is_same_v<K, FedFocal>) {
                return FocalLoss{k.gamma};
            } else {
                return RatioLoss{k.alpha, k.beta, k.ratio};
            }
        },
        kind);

    LocalTrainConfig plain = cfg;
    plain.rebalance_active = false;
    return detail::run_local_training(global, shard, plain, loss, /*prototypes=*/nullptr,
                                      /*collect_prototypes=*/false, round_seed);
}

}  // namespace redgrape
