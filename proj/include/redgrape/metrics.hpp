#pragma once

#include <set>
#include <vector>

#include <redgrape/data.hpp>
#include <redgrape/nn.hpp>

namespace redgrape {

struct EvalReport {
    int round = 0;
    double overall_accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    double tail_accuracy = 0.0;
    double mean_loss = 0.0;
};

// The ceil(fraction * C) classes with the smallest training counts; count
// ties break toward the higher class index, so under monotone decay the tail
// set is exactly the last classes.
std::set<int> tail_class_set(const std::vector<Count>& train_counts, double fraction = 0.3);

// Accuracy and mean CE loss of the main classifier on the test set. Argmax
// ties go to the lower class index; the auxiliary classifier is ignored.
EvalReport evaluate(const ParamSet& params, const GlobalDataset& test_set,
                    const std::set<int>& tail_set);

struct AccuracySummary {
    double overall = 0.0;
    double tail = 0.0;
};

// Mean overall/tail accuracy over the final k reports.
AccuracySummary last_k_average(const std::vector<EvalReport>& reports, std::size_t k);

}  // namespace redgrape
