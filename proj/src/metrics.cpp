#include "redgrape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace redgrape {

std::set<int> tail_class_set(const std::vector<Count>& train_counts, double fraction) {
    const int c_total = static_cast<int>(train_counts.size());
    if (c_total == 0) throw std::invalid_argument("tail_class_set: empty counts");
    if (fraction <= 0.0 || fraction > 1.0) {
        throw std::invalid_argument("tail_class_set: fraction must be in (0, 1]");
    }
    const int k = static_cast<int>(std::ceil(fraction * c_total));

    std::vector<int> order(train_counts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (train_counts[static_cast<std::size_t>(a)] != train_counts[static_cast<std::size_t>(b)]) {
            return train_counts[static_cast<std::size_t>(a)] < train_counts[static_cast<std::size_t>(b)];
        }
        return a > b;  // equal counts: prefer the later class as "tail"
    });
    return {order.begin(), order.begin() + k};
}

EvalReport evaluate(const ParamSet& params, const GlobalDataset& test_set,
                    const std::set<int>& tail_set) {
    if (test_set.samples.empty()) throw std::invalid_argument("evaluate: empty test set");
    const int c_total = test_set.num_classes();

    const Matrix x = dataset_features(test_set);
    const Matrix h = encode(params, x);
    const Matrix z = main_logits(params, h);
    const Matrix p = softmax_columns(z);

    std::vector<Count> correct(static_cast<std::size_t>(c_total), 0);
    std::vector<Count> totals(static_cast<std::size_t>(c_total), 0);
    double loss_sum = 0.0;
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        const int label = test_set.samples[static_cast<std::size_t>(i)].label;
        // Explicit scan instead of Eigen's maxCoeff visitor to pin the
        // tie-break: first (lowest) index wins.
        int pred = 0;
        for (Eigen::Index c = 1; c < z.rows(); ++c) {
            if (z(c, i) > z(pred, i)) pred = static_cast<int>(c);
        }
        ++totals[static_cast<std::size_t>(label)];
        if (pred == label) ++correct[static_cast<std::size_t>(label)];
        loss_sum += -std::log(std::max(p(label, i), kProbEpsilon));
    }

    EvalReport report;
    report.per_class_accuracy.resize(static_cast<std::size_t>(c_total), 0.0);
    Count correct_sum = 0;
    for (int c = 0; c < c_total; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        correct_sum += correct[cu];
        if (totals[cu] > 0) {
            report.per_class_accuracy[cu] =
                static_cast<double>(correct[cu]) / static_cast<double>(totals[cu]);
        }
    }
    report.overall_accuracy =
        static_cast<double>(correct_sum) / static_cast<double>(test_set.samples.size());
    report.mean_loss = loss_sum / static_cast<double>(test_set.samples.size());

    if (!tail_set.empty()) {
        double acc = 0.0;
        for (int c : tail_set) {
            if (c < 0 || c >= c_total) throw std::invalid_argument("evaluate: tail class out of range");
            acc += report.per_class_accuracy[static_cast<std::size_t>(c)];
        }
        report.tail_accuracy = acc / static_cast<double>(tail_set.size());
    }
    return report;
}

AccuracySummary last_k_average(const std::vector<EvalReport>& reports, std::size_t k) {
    if (k == 0) throw std::invalid_argument("last_k_average: k must be >= 1");
    if (k > reports.size()) {
        throw std::invalid_argument("last_k_average: k exceeds the number of reports");
    }
    AccuracySummary summary;
    for (std::size_t i = reports.size() - k; i < reports.size(); ++i) {
        summary.overall += reports[i].overall_accuracy;
        summary.tail += reports[i].tail_accuracy;
    }
    summary.overall /= static_cast<double>(k);
    summary.tail /= static_cast<double>(k);
    return summary;
}

}  // namespace redgrape
