#pragma once

// Shared oracle machinery for the unit tests and the acceptance gate:
// finite-difference gradient checking and randomized small model/batch
// generation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <redgrape/nn.hpp>
#include <redgrape/rng.hpp>

namespace testsupport {

using redgrape::IntVector;
using redgrape::LossKind;
using redgrape::Matrix;
using redgrape::ParamSet;
using redgrape::Vector;

inline double batch_mean_loss(const ParamSet& p, const Matrix& X, const IntVector& y,
                              const LossKind& kind) {
    const Matrix Z = redgrape::train_logits(p, redgrape::encode(p, X));
    double s = 0.0;
    for (Eigen::Index i = 0; i < Z.cols(); ++i) {
        s += redgrape::loss_value(Z.col(i), y(static_cast<Eigen::Index>(i)), kind);
    }
    return s / static_cast<double>(Z.cols());
}

// Worst relative disagreement between analytic gradients and central
// differences over every parameter entry. Denominators are floored at 1e-5 so
// near-zero gradient pairs are compared absolutely at that scale.
inline double max_fd_rel_err(const ParamSet& params, const Matrix& X, const IntVector& y,
                             const LossKind& kind, double h = 1e-5) {
    const auto [loss, g] = redgrape::backward(params, X, y, kind);
    (void)loss;

    ParamSet p = params;
    double worst = 0.0;
    auto probe = [&](double& theta, double analytic) {
        const double orig = theta;
        theta = orig + h;
        const double lp = batch_mean_loss(p, X, y, kind);
        theta = orig - h;
        const double lm = batch_mean_loss(p, X, y, kind);
        theta = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-5});
        worst = std::max(worst, std::abs(analytic - fd) / denom);
    };

    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        auto& w = p.encoder[l].weight;
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                probe(w(r, c), g.encoder[l].weight(r, c));
            }
        }
        auto& b = p.encoder[l].bias;
        for (Eigen::Index r = 0; r < b.size(); ++r) {
            probe(b(r), g.encoder[l].bias(r));
        }
    }
    for (Eigen::Index c = 0; c < p.main_classifier.cols(); ++c) {
        for (Eigen::Index r = 0; r < p.main_classifier.rows(); ++r) {
            probe(p.main_classifier(r, c), g.main_classifier(r, c));
        }
    }
    if (p.aux_classifier) {
        for (Eigen::Index c = 0; c < p.aux_classifier->cols(); ++c) {
            for (Eigen::Index r = 0; r < p.aux_classifier->rows(); ++r) {
                probe((*p.aux_classifier)(r, c), (*g.aux_classifier)(r, c));
            }
        }
    }
    return worst;
}

struct OracleCase {
    ParamSet params;
    Matrix X;
    IntVector y;
    LossKind kind;
    std::string label;
};

// Random small configuration: encoder depth 0-2, widths in [2, 8], C in
// [2, 5], batch in [1, 4], cycling through every loss kind with and without
// the auxiliary classifier and the bias row. Draws whose encoder pre-
// activations sit within 1e-3 of a ReLU kink are rejected (central
// differences would step across the kink).
inline std::optional<OracleCase> draw_oracle_case(redgrape::Rng& rng, int index) {
    OracleCase oc;
    const int depth = static_cast<int>(rng.next_below(3));
    std::vector<int> dims;
    dims.push_back(2 + static_cast<int>(rng.next_below(7)));
    for (int l = 0; l < depth; ++l) dims.push_back(2 + static_cast<int>(rng.next_below(7)));
    const int classes = 2 + static_cast<int>(rng.next_below(4));
    const int batch = 1 + static_cast<int>(rng.next_below(4));
    const bool with_aux = (index % 2) == 0;
    const bool bias = (index % 4) < 2;

    oc.params = redgrape::make_mlp(dims, classes, with_aux, bias, rng);
    // Break the all-zero init of classifier bias rows so they get probed at a
    // generic point.
    if (bias) {
        const Eigen::Index last = oc.params.main_classifier.rows() - 1;
        for (Eigen::Index c = 0; c < oc.params.main_classifier.cols(); ++c) {
            oc.params.main_classifier(last, c) = rng.next_gaussian() * 0.1;
            if (oc.params.aux_classifier) {
                (*oc.params.aux_classifier)(last, c) = rng.next_gaussian() * 0.1;
            }
        }
    }

    oc.X = Matrix(dims.front(), batch);
    for (Eigen::Index c = 0; c < oc.X.cols(); ++c) {
        for (Eigen::Index r = 0; r < oc.X.rows(); ++r) {
            oc.X(r, c) = rng.next_gaussian() * 1.5;
        }
    }
    oc.y = IntVector(batch);
    for (int i = 0; i < batch; ++i) {
        oc.y(i) = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
    }

    switch (index % 4) {
        case 0: oc.kind = redgrape::CrossEntropyLoss{}; oc.label = "ce"; break;
        case 1: oc.kind = redgrape::FocalLoss{2.0}; oc.label = "focal2"; break;
        case 2: oc.kind = redgrape::FocalLoss{0.5}; oc.label = "focal05"; break;
        default: {
            redgrape::RatioLoss ratio;
            ratio.alpha = 0.7;
            ratio.beta = 0.4;
            ratio.ratio = Vector(classes);
            for (int c = 0; c < classes; ++c) ratio.ratio(c) = 1.0 + rng.next_double() * 9.0;
            oc.kind = std::move(ratio);
            oc.label = "ratio";
            break;
        }
    }

    // Kink-adjacency rejection.
    Matrix a = oc.X;
    for (std::size_t l = 0; l < oc.params.encoder.size(); ++l) {
        const Matrix pre =
            (oc.params.encoder[l].weight * a).colwise() + oc.params.encoder[l].bias;
        if (pre.cwiseAbs().minCoeff() < 1e-3) return std::nullopt;
        a = (l + 1 == oc.params.encoder.size()) ? pre : pre.cwiseMax(0.0).eval();
    }
    return oc;
}

}  // namespace testsupport
