#pragma once

#include <cstdint>
#include <vector>

#include "redgrape/messages.hpp"

namespace redgrape {

// Uniform sample of k distinct client ids from [0, n), ascending.
std::vector<int> sample_participants(int n_clients, int k_per_round, std::uint64_t seed);

// Data-size weighted aggregation over the reporting participants:
// theta <- theta - server_lr * sum_k w_k * update_k, with w_k summing to 1.
// Reports are reduced in ascending client_id order.
ParamSet aggregate(const ParamSet& global, const std::vector<ClientRoundReport>& reports, double server_lr);

// Per-class unweighted mean of the reported prototypes; classes nobody
// reported keep their previous entry bit for bit.
PrototypeTable update_prototypes(const PrototypeTable& table, const std::vector<ClientRoundReport>& reports, int round);

}  // namespace redgrape
