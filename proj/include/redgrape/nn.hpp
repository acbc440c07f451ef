#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "redgrape/rng.hpp"

namespace redgrape {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

// Log arguments are clamped at this value so a zero predicted probability
// yields a large finite loss instead of infinity.
inline constexpr double kProbEpsilon = 1e-12;

// One affine encoder layer: out = weight * in + bias.
struct DenseLayer {
    Matrix weight;
    Vector bias;
};

// The full model: MLP encoder (ReLU between layers, identity at the output),
// a main classifier W (d x C, column c scores class c via z = W^T h) and an
// optional auxiliary classifier of the same shape whose logits are added
// element-wise during training. When `classifier_bias` is set the classifiers
// carry one extra row acting on a constant 1 appended to the representation,
// so bias terms travel with the classifier matrices through every gradient,
// norm and prototype.
struct ParamSet {
    std::vector<DenseLayer> encoder;
    Matrix main_classifier;
    std::optional<Matrix> aux_classifier;
    bool classifier_bias = false;

    Eigen::Index repr_dim() const { return encoder.empty() ? main_classifier.rows() - (classifier_bias ? 1 : 0) : encoder.back().weight.rows(); }
    Eigen::Index feature_dim() const { return encoder.empty() ? repr_dim() : encoder.front().weight.cols(); }
    Eigen::Index num_classes() const { return main_classifier.cols(); }
};

// Per-tensor gradients (or accumulated parameter deltas), shape-congruent
// with a ParamSet.
struct Gradients {
    std::vector<DenseLayer> encoder;
    Matrix main_classifier;
    std::optional<Matrix> aux_classifier;
};

struct CrossEntropyLoss {};
struct FocalLoss {
    double gamma = 0.0;
};
struct RatioLoss {
    double alpha = 1.0;
    double beta = 0.0;
    Vector ratio;  // length C, nonnegative
};
using LossKind = std::variant<CrossEntropyLoss, FocalLoss, RatioLoss>;

// Glorot-uniform MLP. `dims` lists encoder layer widths from the input to the
// representation (e.g. {32, 64, 32}); a single entry means an identity-depth
// free classifier is still d x C with d = dims.back().
ParamSet make_mlp(const std::vector<int>& dims, int num_classes, bool with_aux, bool classifier_bias, Rng& rng);

Gradients zero_like(const ParamSet& params);

// acc += scale * g, tensor by tensor.
void add_scaled(Gradients& acc, const Gradients& g, double scale);

// params -= scale * g.
void apply_delta(ParamSet& params, const Gradients& g, double scale);

// a - b, tensor by tensor (both ParamSets must be shape-congruent).
Gradients param_delta(const ParamSet& a, const ParamSet& b);

bool same_shape(const ParamSet& a, const ParamSet& b);
bool same_shape(const ParamSet& p, const Gradients& g);
bool all_finite(const Gradients& g);

// Encoder forward pass over a batch; columns of X are samples, columns of the
// result are representations.
Matrix encode(const ParamSet& params, const Matrix& X);

// Training logits: W^T h plus the auxiliary stream when present.
Matrix train_logits(const ParamSet& params, const Matrix& H);

// Inference logits: the main classifier only.
Matrix main_logits(const ParamSet& params, const Matrix& H);

// Single-sample forward: (representation, training logits).
std::pair<Vector, Vector> forward(const ParamSet& params, const Vector& x);

// Column-wise softmax, shifted for stability.
Matrix softmax_columns(const Matrix& Z);
Vector softmax(const Vector& z);

double loss_value(const Vector& z, int y, const LossKind& kind);

// dL/dz for one sample.
Vector loss_grad_logits(const Vector& z, int y, const LossKind& kind);

// Mean loss and analytic gradients of the batch-mean loss over every
// parameter tensor. Gradient flows into both classifiers through the summed
// logits.
std::pair<double, Gradients> backward(const ParamSet& params, const Matrix& X, const IntVector& y, const LossKind& kind);

// Gradient of the mean cross-entropy over (X, y) with respect to the main
// classifier only, at fixed encoder, using main-classifier logits alone.
// This is the two-argument loss used for prototypes and balanced-subset
// gradients; the encoder and the auxiliary classifier receive nothing.
Matrix main_classifier_ce_gradient(const ParamSet& params, const Matrix& X, const IntVector& y);

// Momentum SGD: v <- momentum * v + g; p <- p - lr * v. The momentum state is
// passed in and updated, never hidden. momentum = 0 is plain SGD.
void sgd_step(ParamSet& params, const Gradients& grads, double lr, Gradients& momentum_state, double momentum);

template <typename Derived>
double frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
    return m.norm();
}

}  // namespace redgrape
