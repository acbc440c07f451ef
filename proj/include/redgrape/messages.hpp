#pragma once

#include <map>
#include <optional>
#include <vector>

#include "redgrape/data.hpp"
#include "redgrape/nn.hpp"

namespace redgrape {

// What a client uploads after local training: accumulated parameter deltas
// (initial model minus trained model, per tensor), its per-class classifier
// gradient prototypes (empty for baseline methods), the local dataset size
// used as the aggregation weight, and its mean training loss for diagnostics.
struct ClientRoundReport {
    int client_id = 0;
    Gradients local_update;
    std::map<int, Matrix> local_prototypes;
    Count sample_count = 0;
    double mean_train_loss = 0.0;
};

struct PrototypeEntry {
    Matrix gradient;  // same shape as the main classifier
    int last_updated_round = 0;
};

// Per-class global gradient prototypes. A slot stays empty until some client
// first reports that class; an unreported class keeps its previous entry
// untouched.
class PrototypeTable {
public:
    PrototypeTable() = default;
    explicit PrototypeTable(int num_classes) : slots_(static_cast<std::size_t>(num_classes)) {}

    int num_classes() const { return static_cast<int>(slots_.size()); }
    bool has(int c) const { return slots_[static_cast<std::size_t>(c)].has_value(); }
    const PrototypeEntry& entry(int c) const { return *slots_[static_cast<std::size_t>(c)]; }
    void set(int c, Matrix gradient, int round) {
        slots_[static_cast<std::size_t>(c)] = PrototypeEntry{std::move(gradient), round};
    }

private:
    std::vector<std::optional<PrototypeEntry>> slots_;
};

// One round's broadcast: the participant set plus snapshots of the global
// model and prototype table taken before any client trains.
struct RoundPlan {
    int round = 0;
    std::vector<int> participants;
    ParamSet model;
    PrototypeTable prototypes;
};

}  // namespace redgrape
