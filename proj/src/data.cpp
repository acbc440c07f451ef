#include "redgrape/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "redgrape/errors.hpp"

namespace redgrape {

double GlobalDataset::imbalance_ratio() const {
    Count max_c = 0;
    Count min_c = std::numeric_limits<Count>::max();
    for (Count n : class_counts) {
        if (n <= 0) {
            continue;
        }
        max_c = std::max(max_c, n);
        min_c = std::min(min_c, n);
    }
    if (max_c == 0) {
        return 0.0;
    }
    return static_cast<double>(max_c) / static_cast<double>(min_c);
}

std::set<int> ClientShard::label_set() const {
    std::set<int> labels;
    for (int c = 0; c < static_cast<int>(per_class_counts.size()); ++c) {
        if (per_class_counts[c] > 0) {
            labels.insert(c);
        }
    }
    return labels;
}

std::vector<Count> longtail_counts(Count n0, double ir, int c_total) {
    if (n0 < 1) {
        throw std::invalid_argument("longtail_counts: n0 must be >= 1");
    }
    if (!(ir >= 1.0)) {
        throw std::invalid_argument("longtail_counts: imbalance ratio must be >= 1");
    }
    if (c_total < 2) {
        throw std::invalid_argument("longtail_counts: need at least 2 classes");
    }
    std::vector<Count> counts(c_total);
    for (int c = 0; c < c_total; ++c) {
        double exponent = static_cast<double>(c) / static_cast<double>(c_total - 1);
        double value = static_cast<double>(n0) * std::pow(1.0 / ir, exponent);
        counts[c] = std::max<Count>(1, static_cast<Count>(std::floor(value + 1e-9)));
    }
    return counts;
}

std::vector<Count> binary_imbalance_counts(Count n_head, double ir, int c_total, const std::set<int>& tail_classes) {
    if (n_head < 1) {
        throw std::invalid_argument("binary_imbalance_counts: n_head must be >= 1");
    }
    if (!(ir >= 1.0)) {
        throw std::invalid_argument("binary_imbalance_counts: imbalance ratio must be >= 1");
    }
    if (tail_classes.empty() || static_cast<int>(tail_classes.size()) >= c_total) {
        throw std::invalid_argument("binary_imbalance_counts: tail classes must be a nonempty proper subset");
    }
    for (int c : tail_classes) {
        if (c < 0 || c >= c_total) {
            throw std::invalid_argument("binary_imbalance_counts: tail class index out of range");
        }
    }
    Count tail = std::max<Count>(1, static_cast<Count>(std::llround(static_cast<double>(n_head) / ir)));
    std::vector<Count> counts(c_total, n_head);
    for (int c : tail_classes) {
        counts[c] = tail;
    }
    return counts;
}

std::vector<Vector> gaussian_class_means(int c_total, int dim, std::uint64_t seed) {
    if (dim < 2) {
        throw std::invalid_argument("gaussian_class_means: dim must be >= 2");
    }
    Rng rng(seed);
    std::vector<Vector> means;
    means.reserve(c_total);
    while (static_cast<int>(means.size()) < c_total) {
        Vector m(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            m(i) = rng.next_gaussian();
        }
        double norm = m.norm();
        if (norm < 1e-12) {
            continue;
        }
        m /= norm;
        bool distinct = std::all_of(means.begin(), means.end(), [&](const Vector& other) {
            return (other - m).norm() > 1e-9;
        });
        if (distinct) {
            means.push_back(std::move(m));
        }
    }
    return means;
}

GlobalDataset sample_gaussian_mixture(const std::vector<Vector>& means, double sigma,
                                      const std::vector<Count>& counts, std::uint64_t seed) {
    if (means.size() != counts.size()) {
        throw std::invalid_argument("sample_gaussian_mixture: means/counts size mismatch");
    }
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("sample_gaussian_mixture: sigma must be >= 0");
    }
    Rng rng(derive_seed(seed, Stream::TrainData));
    GlobalDataset ds;
    ds.class_counts = counts;
    for (int c = 0; c < static_cast<int>(means.size()); ++c) {
        for (Count i = 0; i < counts[c]; ++i) {
            Vector x = means[c];
            if (sigma > 0.0) {
                for (Eigen::Index j = 0; j < x.size(); ++j) {
                    x(j) += sigma * rng.next_gaussian();
                }
            }
            ds.samples.push_back({std::move(x), c});
        }
    }
    Rng shuffler(derive_seed(seed, Stream::DatasetShuffle));
    shuffler.shuffle(ds.samples);
    return ds;
}

GlobalDataset synth_gaussian_mixture(int c_total, int dim, const std::vector<Count>& counts,
                                     std::uint64_t seed, double sigma) {
    if (static_cast<int>(counts.size()) != c_total) {
        throw std::invalid_argument("synth_gaussian_mixture: counts length must equal class count");
    }
    auto means = gaussian_class_means(c_total, dim, derive_seed(seed, Stream::MixtureMeans));
    return sample_gaussian_mixture(means, sigma, counts, seed);
}

namespace {

// Largest-remainder split of `total` into `weights.size()` integer parts
// proportional to weights; ties go to the lower index.
std::vector<Count> largest_remainder(Count total, const std::vector<double>& weights) {
    std::size_t k = weights.size();
    std::vector<Count> result(k, 0);
    std::vector<double> fractional(k, 0.0);
    Count assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        double quota = static_cast<double>(total) * weights[i];
        double base = std::floor(quota);
        result[i] = static_cast<Count>(base);
        fractional[i] = quota - base;
        assigned += result[i];
    }
    Count remaining = total - assigned;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return fractional[a] > fractional[b];
    });
    for (Count r = 0; r < remaining; ++r) {
        result[order[static_cast<std::size_t>(r) % k]] += 1;
    }
    return result;
}

}  // namespace

std::vector<ClientShard> dirichlet_partition(const GlobalDataset& ds, int n_clients, double alpha, std::uint64_t seed) {
    if (n_clients < 1) {
        throw std::invalid_argument("dirichlet_partition: need at least one client");
    }
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("dirichlet_partition: alpha must be positive");
    }
    int c_total = ds.num_classes();
    std::vector<ClientShard> shards(n_clients);
    for (int k = 0; k < n_clients; ++k) {
        shards[k].client_id = k;
        shards[k].per_class_counts.assign(c_total, 0);
    }

    // Sample indices grouped by class, in dataset order.
    std::vector<std::vector<int>> by_class(c_total);
    for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) {
        int label = ds.samples[i].label;
        if (label < 0 || label >= c_total) {
            throw std::invalid_argument("dirichlet_partition: sample label out of range");
        }
        by_class[label].push_back(i);
    }

    Rng rng(derive_seed(seed, Stream::Partition));
    for (int c = 0; c < c_total; ++c) {
        auto& indices = by_class[c];
        rng.shuffle(indices);
        std::vector<double> proportions(n_clients);
        double sum = 0.0;
        for (int k = 0; k < n_clients; ++k) {
            proportions[k] = rng.next_gamma(alpha);
            sum += proportions[k];
        }
        if (sum <= 0.0) {
            std::fill(proportions.begin(), proportions.end(), 1.0);
            sum = static_cast<double>(n_clients);
        }
        for (double& p : proportions) {
            p /= sum;
        }
        auto split = largest_remainder(static_cast<Count>(indices.size()), proportions);
        std::size_t offset = 0;
        for (int k = 0; k < n_clients; ++k) {
            for (Count i = 0; i < split[k]; ++i) {
                shards[k].samples.push_back(ds.samples[indices[offset++]]);
            }
            shards[k].per_class_counts[c] += split[k];
        }
    }
    return shards;
}

std::pair<BalancedSubset, std::set<int>> sample_balanced_subset(const ClientShard& shard, Count t, std::uint64_t round_seed) {
    if (t < 1) {
        throw std::invalid_argument("sample_balanced_subset: threshold must be >= 1");
    }
    int c_total = static_cast<int>(shard.per_class_counts.size());
    std::vector<std::vector<int>> by_class(c_total);
    for (int i = 0; i < static_cast<int>(shard.samples.size()); ++i) {
        by_class[shard.samples[i].label].push_back(i);
    }
    BalancedSubset subset;
    std::set<int> eligible;
    Rng rng(round_seed);
    for (int c = 0; c < c_total; ++c) {
        if (shard.per_class_counts[c] < t) {
            continue;
        }
        eligible.insert(c);
        auto& pool = by_class[c];
        // Partial Fisher-Yates: the first t slots are a uniform draw without
        // replacement.
        for (Count i = 0; i < t; ++i) {
            std::size_t j = static_cast<std::size_t>(i) +
                            static_cast<std::size_t>(rng.next_below(pool.size() - static_cast<std::size_t>(i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        subset.per_class[c] = std::vector<int>(pool.begin(), pool.begin() + t);
    }
    return {std::move(subset), std::move(eligible)};
}

GlobalDataset load_csv_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("load_csv_dataset: cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("load_csv_dataset: empty file " + path);
    }
    if (line.rfind("label,", 0) != 0) {
        throw ConfigError("load_csv_dataset: header must start with 'label,' in " + path);
    }
    std::size_t dims = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));

    GlobalDataset ds;
    int max_label = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        LabeledSample sample;
        sample.features = Vector(dims);
        if (!std::getline(ss, field, ',')) {
            throw ConfigError("load_csv_dataset: malformed row at line " + std::to_string(line_no));
        }
        try {
            sample.label = std::stoi(field);
        } catch (const std::exception&) {
            throw ConfigError("load_csv_dataset: bad label at line " + std::to_string(line_no));
        }
        if (sample.label < 0) {
            throw ConfigError("load_csv_dataset: negative label at line " + std::to_string(line_no));
        }
        for (std::size_t d = 0; d < dims; ++d) {
            if (!std::getline(ss, field, ',')) {
                throw ConfigError("load_csv_dataset: expected " + std::to_string(dims) +
                                  " features at line " + std::to_string(line_no));
            }
            try {
                sample.features(static_cast<Eigen::Index>(d)) = std::stod(field);
            } catch (const std::exception&) {
                throw ConfigError("load_csv_dataset: bad feature value at line " + std::to_string(line_no));
            }
        }
        max_label = std::max(max_label, sample.label);
        ds.samples.push_back(std::move(sample));
    }
    if (ds.samples.empty()) {
        throw ConfigError("load_csv_dataset: no data rows in " + path);
    }
    ds.class_counts.assign(static_cast<std::size_t>(max_label) + 1, 0);
    for (const auto& s : ds.samples) {
        ds.class_counts[static_cast<std::size_t>(s.label)] += 1;
    }
    return ds;
}

std::string shard_manifest_json(const std::vector<ClientShard>& shards) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& shard : shards) {
        manifest.push_back({{"client_id", shard.client_id},
                            {"per_class_counts", shard.per_class_counts}});
    }
    return manifest.dump(2);
}

Matrix batch_features(const std::vector<LabeledSample>& samples, const std::vector<int>& indices) {
    if (indices.empty()) {
        throw std::invalid_argument("batch_features: empty batch");
    }
    Matrix X(samples[static_cast<std::size_t>(indices[0])].features.size(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        X.col(static_cast<Eigen::Index>(i)) = samples[static_cast<std::size_t>(indices[i])].features;
    }
    return X;
}

IntVector batch_labels(const std::vector<LabeledSample>& samples, const std::vector<int>& indices) {
    IntVector y(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        y(static_cast<Eigen::Index>(i)) = samples[static_cast<std::size_t>(indices[i])].label;
    }
    return y;
}

Matrix dataset_features(const GlobalDataset& ds) {
    std::vector<int> indices(ds.samples.size());
    std::iota(indices.begin(), indices.end(), 0);
    return batch_features(ds.samples, indices);
}

IntVector dataset_labels(const GlobalDataset& ds) {
    std::vector<int> indices(ds.samples.size());
    std::iota(indices.begin(), indices.end(), 0);
    return batch_labels(ds.samples, indices);
}

}  // namespace redgrape
