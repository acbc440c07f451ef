#include "redgrape/protocol.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "redgrape/errors.hpp"

namespace redgrape {

std::vector<int> sample_participants(int n_clients, int k_per_round, std::uint64_t seed) {
    if (k_per_round < 1 || k_per_round > n_clients) {
        throw std::invalid_argument("sample_participants: need 1 <= k <= n_clients");
    }
    std::vector<int> ids(static_cast<std::size_t>(n_clients));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < k_per_round; ++i) {
        std::size_t j = static_cast<std::size_t>(i) +
                        static_cast<std::size_t>(rng.next_below(ids.size() - static_cast<std::size_t>(i)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(k_per_round));
    std::sort(ids.begin(), ids.end());
    return ids;
}

ParamSet aggregate(const ParamSet& global, const std::vector<ClientRoundReport>& reports, double server_lr) {
    if (reports.empty()) {
        throw std::invalid_argument("aggregate: no reports");
    }
    Count total = 0;
    for (const auto& report : reports) {
        if (!same_shape(global, report.local_update)) {
            throw ProtocolError("aggregate: client " + std::to_string(report.client_id) +
                                " sent a shape-mismatched update");
        }
        total += report.sample_count;
    }
    if (total <= 0) {
        throw ProtocolError("aggregate: total reported sample count is zero");
    }

    std::vector<const ClientRoundReport*> ordered;
    ordered.reserve(reports.size());
    for (const auto& report : reports) {
        ordered.push_back(&report);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->client_id < b->client_id;
    });

    Gradients acc = zero_like(global);
    for (const auto* report : ordered) {
        double weight = static_cast<double>(report->sample_count) / static_cast<double>(total);
        add_scaled(acc, report->local_update, weight);
    }
    ParamSet updated = global;
    apply_delta(updated, acc, server_lr);
    return updated;
}

PrototypeTable update_prototypes(const PrototypeTable& table, const std::vector<ClientRoundReport>& reports, int round) {
    PrototypeTable updated = table;
    int c_total = table.num_classes();

    std::vector<const ClientRoundReport*> ordered;
    ordered.reserve(reports.size());
    for (const auto& report : reports) {
        ordered.push_back(&report);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->client_id < b->client_id;
    });

    for (int c = 0; c < c_total; ++c) {
        Matrix sum;
        int reporters = 0;
        for (const auto* report : ordered) {
            auto it = report->local_prototypes.find(c);
            if (it == report->local_prototypes.end()) {
                continue;
            }
            if (!it->second.allFinite()) {
                throw ProtocolError("update_prototypes: client " + std::to_string(report->client_id) +
                                    " sent a non-finite prototype for class " + std::to_string(c));
            }
            if (reporters == 0) {
                sum = it->second;
            } else {
                sum += it->second;
            }
            ++reporters;
        }
        if (reporters > 0) {
            updated.set(c, sum / static_cast<double>(reporters), round);
        }
    }
    return updated;
}

}  // namespace redgrape
