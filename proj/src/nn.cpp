#include "redgrape/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "redgrape/errors.hpp"

namespace redgrape {

namespace {

Matrix glorot_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            m(r, c) = (2.0 * rng.next_double() - 1.0) * bound;
        }
    }
    return m;
}

// Append a constant-1 row so classifier bias terms ride along as a matrix row.
Matrix with_ones_row(const Matrix& H) {
    Matrix out(H.rows() + 1, H.cols());
    out.topRows(H.rows()) = H;
    out.row(H.rows()).setOnes();
    return out;
}

Matrix classifier_input(const ParamSet& params, const Matrix& H) {
    return params.classifier_bias ? with_ones_row(H) : H;
}

void check_label(int y, Eigen::Index num_classes) {
    if (y < 0 || y >= num_classes) {
        throw std::invalid_argument("label out of range");
    }
}

// Per-sample loss and dL/dz. The focal gradient is written in the cancelled
// form so p_y -> 0 stays finite; gamma == 0 takes the cross-entropy branch
// bit for bit.
std::pair<double, Vector> loss_and_grad(const Vector& z, int y, const LossKind& kind) {
    check_label(y, z.size());
    Vector p = softmax(z);
    double py = p(y);
    double logp = std::log(std::max(py, kProbEpsilon));
    Vector ce_grad = p;
    ce_grad(y) -= 1.0;

    if (std::holds_alternative<CrossEntropyLoss>(kind)) {
        return {-logp, ce_grad};
    }
    if (const auto* focal = std::get_if<FocalLoss>(&kind)) {
        if (!(focal->gamma >= 0.0) || !std::isfinite(focal->gamma)) {
            throw std::invalid_argument("focal gamma must be finite and >= 0");
        }
        if (focal->gamma == 0.0) {
            return {-logp, ce_grad};
        }
        double u = 1.0 - py;
        double u_pow = std::pow(u, focal->gamma);
        double a = (u > 0.0) ? focal->gamma * std::pow(u, focal->gamma - 1.0) * logp * py : 0.0;
        return {-u_pow * logp, (u_pow - a) * ce_grad};
    }
    const auto& ratio = std::get<RatioLoss>(kind);
    if (ratio.ratio.size() != z.size()) {
        throw std::invalid_argument("ratio vector length must equal the class count");
    }
    double w = ratio.alpha + ratio.beta * ratio.ratio(y);
    return {w * -logp, w * ce_grad};
}

struct ForwardTrace {
    std::vector<Matrix> activations;  // activations[0] = X, activations[L] = H
    std::vector<Matrix> preacts;
};

ForwardTrace traced_encode(const ParamSet& params, const Matrix& X) {
    if (X.rows() != params.feature_dim()) {
        throw ConfigError("encoder input dimension mismatch");
    }
    ForwardTrace t;
    std::size_t layers = params.encoder.size();
    t.activations.resize(layers + 1);
    t.preacts.resize(layers);
    t.activations[0] = X;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& layer = params.encoder[l];
        t.preacts[l] = (layer.weight * t.activations[l]).colwise() + layer.bias;
        bool last = (l + 1 == layers);
        t.activations[l + 1] = last ? t.preacts[l] : t.preacts[l].cwiseMax(0.0);
    }
    return t;
}

}  // namespace

ParamSet make_mlp(const std::vector<int>& dims, int num_classes, bool with_aux, bool classifier_bias, Rng& rng) {
    if (dims.empty() || num_classes < 2) {
        throw ConfigError("make_mlp: need at least one encoder width and two classes");
    }
    ParamSet p;
    p.classifier_bias = classifier_bias;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = glorot_matrix(dims[l + 1], dims[l], rng);
        layer.bias = Vector::Zero(dims[l + 1]);
        p.encoder.push_back(std::move(layer));
    }
    Eigen::Index d = dims.back();
    Eigen::Index rows = d + (classifier_bias ? 1 : 0);
    auto make_classifier = [&] {
        Matrix w(rows, num_classes);
        w.topRows(d) = glorot_matrix(d, num_classes, rng);
        if (classifier_bias) {
            w.row(d).setZero();
        }
        return w;
    };
    p.main_classifier = make_classifier();
    if (with_aux) {
        p.aux_classifier = make_classifier();
    }
    return p;
}

Gradients zero_like(const ParamSet& params) {
    Gradients g;
    for (const auto& layer : params.encoder) {
        g.encoder.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                             Vector::Zero(layer.bias.size())});
    }
    g.main_classifier = Matrix::Zero(params.main_classifier.rows(), params.main_classifier.cols());
    if (params.aux_classifier) {
        g.aux_classifier = Matrix::Zero(params.aux_classifier->rows(), params.aux_classifier->cols());
    }
    return g;
}

void add_scaled(Gradients& acc, const Gradients& g, double scale) {
    if (acc.encoder.size() != g.encoder.size() || acc.aux_classifier.has_value() != g.aux_classifier.has_value()) {
        throw ConfigError("add_scaled: gradient layouts differ");
    }
    for (std::size_t l = 0; l < acc.encoder.size(); ++l) {
        acc.encoder[l].weight += scale * g.encoder[l].weight;
        acc.encoder[l].bias += scale * g.encoder[l].bias;
    }
    acc.main_classifier += scale * g.main_classifier;
    if (acc.aux_classifier) {
        *acc.aux_classifier += scale * *g.aux_classifier;
    }
}

void apply_delta(ParamSet& params, const Gradients& g, double scale) {
    if (!same_shape(params, g)) {
        throw ConfigError("apply_delta: shape mismatch");
    }
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        params.encoder[l].weight -= scale * g.encoder[l].weight;
        params.encoder[l].bias -= scale * g.encoder[l].bias;
    }
    params.main_classifier -= scale * g.main_classifier;
    if (params.aux_classifier) {
        *params.aux_classifier -= scale * *g.aux_classifier;
    }
}

Gradients param_delta(const ParamSet& a, const ParamSet& b) {
    if (!same_shape(a, b)) {
        throw ConfigError("param_delta: shape mismatch");
    }
    Gradients g;
    for (std::size_t l = 0; l < a.encoder.size(); ++l) {
        g.encoder.push_back({a.encoder[l].weight - b.encoder[l].weight,
                             a.encoder[l].bias - b.encoder[l].bias});
    }
    g.main_classifier = a.main_classifier - b.main_classifier;
    if (a.aux_classifier) {
        g.aux_classifier = *a.aux_classifier - *b.aux_classifier;
    }
    return g;
}

bool same_shape(const ParamSet& a, const ParamSet& b) {
    if (a.encoder.size() != b.encoder.size() || a.aux_classifier.has_value() != b.aux_classifier.has_value()) {
        return false;
    }
    for (std::size_t l = 0; l < a.encoder.size(); ++l) {
        if (a.encoder[l].weight.rows() != b.encoder[l].weight.rows() ||
            a.encoder[l].weight.cols() != b.encoder[l].weight.cols() ||
            a.encoder[l].bias.size() != b.encoder[l].bias.size()) {
            return false;
        }
    }
    if (a.main_classifier.rows() != b.main_classifier.rows() ||
        a.main_classifier.cols() != b.main_classifier.cols()) {
        return false;
    }
    if (a.aux_classifier &&
        (a.aux_classifier->rows() != b.aux_classifier->rows() ||
         a.aux_classifier->cols() != b.aux_classifier->cols())) {
        return false;
    }
    return true;
}

bool same_shape(const ParamSet& p, const Gradients& g) {
    if (p.encoder.size() != g.encoder.size() || p.aux_classifier.has_value() != g.aux_classifier.has_value()) {
        return false;
    }
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        if (p.encoder[l].weight.rows() != g.encoder[l].weight.rows() ||
            p.encoder[l].weight.cols() != g.encoder[l].weight.cols() ||
            p.encoder[l].bias.size() != g.encoder[l].bias.size()) {
            return false;
        }
    }
    if (p.main_classifier.rows() != g.main_classifier.rows() ||
        p.main_classifier.cols() != g.main_classifier.cols()) {
        return false;
    }
    if (p.aux_classifier &&
        (p.aux_classifier->rows() != g.aux_classifier->rows() ||
         p.aux_classifier->cols() != g.aux_classifier->cols())) {
        return false;
    }
    return true;
}

bool all_finite(const Gradients& g) {
    for (const auto& layer : g.encoder) {
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            return false;
        }
    }
    if (!g.main_classifier.allFinite()) {
        return false;
    }
    if (g.aux_classifier && !g.aux_classifier->allFinite()) {
        return false;
    }
    return true;
}

Matrix encode(const ParamSet& params, const Matrix& X) {
    return traced_encode(params, X).activations.back();
}

Matrix train_logits(const ParamSet& params, const Matrix& H) {
    Matrix input = classifier_input(params, H);
    Matrix z = params.main_classifier.transpose() * input;
    if (params.aux_classifier) {
        z += params.aux_classifier->transpose() * input;
    }
    return z;
}

Matrix main_logits(const ParamSet& params, const Matrix& H) {
    return params.main_classifier.transpose() * classifier_input(params, H);
}

std::pair<Vector, Vector> forward(const ParamSet& params, const Vector& x) {
    Matrix h = encode(params, x);
    Matrix z = train_logits(params, h);
    return {Vector(h.col(0)), Vector(z.col(0))};
}

Matrix softmax_columns(const Matrix& Z) {
    Matrix p(Z.rows(), Z.cols());
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
        Vector shifted = Z.col(c).array() - Z.col(c).maxCoeff();
        Vector e = shifted.array().exp();
        p.col(c) = e / e.sum();
    }
    return p;
}

Vector softmax(const Vector& z) {
    Vector shifted = z.array() - z.maxCoeff();
    Vector e = shifted.array().exp();
    return e / e.sum();
}

double loss_value(const Vector& z, int y, const LossKind& kind) {
    return loss_and_grad(z, y, kind).first;
}

Vector loss_grad_logits(const Vector& z, int y, const LossKind& kind) {
    return loss_and_grad(z, y, kind).second;
}

std::pair<double, Gradients> backward(const ParamSet& params, const Matrix& X, const IntVector& y, const LossKind& kind) {
    Eigen::Index n = X.cols();
    if (n == 0) {
        throw std::invalid_argument("backward: empty batch");
    }
    if (y.size() != n) {
        throw ConfigError("backward: label count does not match batch size");
    }
    ForwardTrace trace = traced_encode(params, X);
    const Matrix& H = trace.activations.back();
    Matrix input = classifier_input(params, H);
    Matrix Z = params.main_classifier.transpose() * input;
    if (params.aux_classifier) {
        Z += params.aux_classifier->transpose() * input;
    }

    double loss_sum = 0.0;
    Matrix Gz(Z.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [li, gz] = loss_and_grad(Z.col(i), y(i), kind);
        loss_sum += li;
        Gz.col(i) = gz;
    }
    Gz /= static_cast<double>(n);

    Gradients g;
    g.encoder.resize(params.encoder.size());
    g.main_classifier = input * Gz.transpose();
    if (params.aux_classifier) {
        g.aux_classifier = g.main_classifier;
    }

    // Back into the representation; both classifier streams contribute.
    Matrix dInput = params.main_classifier * Gz;
    if (params.aux_classifier) {
        dInput += *params.aux_classifier * Gz;
    }
    Matrix dA = params.classifier_bias ? Matrix(dInput.topRows(dInput.rows() - 1)) : std::move(dInput);

    for (int l = static_cast<int>(params.encoder.size()) - 1; l >= 0; --l) {
        bool last = (l + 1 == static_cast<int>(params.encoder.size()));
        Matrix dPre = last ? dA
                           : Matrix(dA.cwiseProduct(
                                 (trace.preacts[l].array() > 0.0).cast<double>().matrix()));
        g.encoder[l].weight = dPre * trace.activations[l].transpose();
        g.encoder[l].bias = dPre.rowwise().sum();
        if (l > 0) {
            dA = params.encoder[l].weight.transpose() * dPre;
        }
    }
    return {loss_sum / static_cast<double>(n), std::move(g)};
}

Matrix main_classifier_ce_gradient(const ParamSet& params, const Matrix& X, const IntVector& y) {
    Eigen::Index n = X.cols();
    if (n == 0) {
        throw std::invalid_argument("main_classifier_ce_gradient: empty batch");
    }
    Matrix input = classifier_input(params, encode(params, X));
    Matrix Gz = softmax_columns(params.main_classifier.transpose() * input);
    for (Eigen::Index i = 0; i < n; ++i) {
        check_label(y(i), Gz.rows());
        Gz(y(i), i) -= 1.0;
    }
    Gz /= static_cast<double>(n);
    return input * Gz.transpose();
}

void sgd_step(ParamSet& params, const Gradients& grads, double lr, Gradients& momentum_state, double momentum) {
    if (!(lr > 0.0)) {
        throw std::invalid_argument("sgd_step: learning rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("sgd_step: momentum must be in [0, 1)");
    }
    if (!same_shape(params, grads) || !same_shape(params, momentum_state)) {
        throw ConfigError("sgd_step: shape mismatch");
    }
    auto step = [&](auto& p, auto& v, const auto& g) {
        v = momentum * v + g;
        p -= lr * v;
    };
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        step(params.encoder[l].weight, momentum_state.encoder[l].weight, grads.encoder[l].weight);
        step(params.encoder[l].bias, momentum_state.encoder[l].bias, grads.encoder[l].bias);
    }
    step(params.main_classifier, momentum_state.main_classifier, grads.main_classifier);
    if (params.aux_classifier) {
        step(*params.aux_classifier, *momentum_state.aux_classifier, *grads.aux_classifier);
    }
}

}  // namespace redgrape
