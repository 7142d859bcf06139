#include "mkl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mkl {

std::string to_string(LossKind k) { return k == LossKind::Squared ? "squared" : "logistic"; }

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "squared") return LossKind::Squared;
    if (s == "logistic" || s == "logit") return LossKind::Logistic;
    throw ValidationError("unknown loss '" + s + "'");
}

void LossSpec::validate() const {
    if (kind == LossKind::Squared) require(noise_variance > 0.0, "squared loss needs a positive noise variance");
}

namespace {

double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

} // namespace

double LossSpec::value(double y, double z) const {
    if (kind == LossKind::Squared) return (y - z) * (y - z) / (2.0 * noise_variance);
    return log1pexp(-y * z);
}

double LossSpec::sum(const Vector& y, const Vector& scores) const {
    require(y.size() == scores.size(), "loss: length mismatch");
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) s += value(y(i), scores(i));
    return s;
}

Vector kernel_expansion(const Matrix& K, const Vector& alpha, double bias) {
    require(K.cols() == alpha.size(), "kernel_expansion: dimension mismatch");
    Vector out(K.rows());
    for (Index i = 0; i < K.rows(); ++i) {
        double s = 0.0;
        for (Index j = 0; j < K.cols(); ++j) s += K(i, j) * alpha(j);
        out(i) = s + bias;
    }
    return out;
}

namespace {

Vector active_weights(const Vector& d, double threshold) {
    Vector out = d;
    for (Index m = 0; m < d.size(); ++m)
        if (out(m) <= threshold) out(m) = 0.0;
    return out;
}

Vector squared_norms(const KernelBank& bank, const Vector& d, const Vector& alpha) {
    Vector x = Vector::Zero(d.size());
    for (Index m = 0; m < d.size(); ++m) {
        if (d(m) <= 0.0) continue;
        x(m) = std::max(0.0, d(m) * d(m) * alpha.dot(bank.gram(m) * alpha));
    }
    return x;
}

FStepResult squared_f_step(const Matrix& Kd, const LossSpec& loss, double C, const Vector& y, bool fit_bias) {
    const Index n = y.size();
    Matrix A = Kd;
    A.diagonal().array() += C * loss.noise_variance;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) throw NumericalError("f_step: combined system is not positive definite");
    FStepResult out;
    if (fit_bias) {
        const Vector Ay = llt.solve(y);
        const Vector A1 = llt.solve(Vector::Ones(n));
        out.bias = Ay.sum() / A1.sum();
        out.alpha = Ay - out.bias * A1;
    } else {
        out.alpha = llt.solve(y);
    }
    if (!out.alpha.allFinite()) throw NumericalError("f_step: singular system");
    out.inner_iterations = 1;
    return out;
}

FStepResult logistic_f_step(const Matrix& Kd, double C, const Vector& y, const FStepOptions& opts) {
    const Index n = y.size();
    for (Index i = 0; i < n; ++i) require(y(i) == 1.0 || y(i) == -1.0, "logistic loss needs labels in {-1, +1}");
    const Index dim = opts.fit_bias ? n + 1 : n;
    Vector alpha = Vector::Zero(n);
    double b = 0.0;
    LossSpec loss{LossKind::Logistic, 1.0};

    auto objective = [&](const Vector& a, double bias) {
        const Vector z = Kd * a;
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += loss.value(y(i), z(i) + bias);
        return s + 0.5 * C * a.dot(z);
    };

    FStepResult out;
    double J = objective(alpha, b);
    int it = 0;
    for (; it < opts.newton_max_iter; ++it) {
        const Vector Ka = Kd * alpha;
        Vector g(n), w(n);
        for (Index i = 0; i < n; ++i) {
            const double s = sigmoid(-y(i) * (Ka(i) + b));
            g(i) = -y(i) * s;
            w(i) = s * (1.0 - s);
        }
        const Vector r = g + C * alpha;
        Vector grad(dim);
        grad.head(n) = Kd * r;
        if (opts.fit_bias) grad(n) = g.sum();
        if (grad.norm() <= opts.newton_tol) break;

        Matrix S(dim, dim);
        S.topLeftCorner(n, n) = w.asDiagonal() * Kd;
        S.topLeftCorner(n, n).diagonal().array() += C;
        Vector rhs(dim);
        rhs.head(n) = -r;
        if (opts.fit_bias) {
            S.topRightCorner(n, 1) = w;
            S.bottomLeftCorner(1, n) = (w.asDiagonal() * Kd).colwise().sum();
            S(n, n) = w.sum();
            rhs(n) = -g.sum();
        }
        S.diagonal().array() += 1e-10 * S.trace();
        const Vector step = S.partialPivLu().solve(rhs);
        if (!step.allFinite()) throw NumericalError("f_step: Newton system is singular");

        const double slope = grad.dot(step);
        if (-slope <= 1e-12 * std::max(1.0, std::abs(J))) {
            // Decrease below the resolution of J: take the full step.
            alpha += step.head(n);
            if (opts.fit_bias) b += step(n);
            J = objective(alpha, b);
            continue;
        }
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k <= 30; ++k, t *= 0.5) {
            const Vector a_new = alpha + t * step.head(n);
            const double b_new = opts.fit_bias ? b + t * step(n) : b;
            const double J_new = objective(a_new, b_new);
            if (J_new <= J + 1e-4 * t * std::min(slope, 0.0)) {
                alpha = a_new;
                b = b_new;
                J = J_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (grad.norm() <= 1e3 * opts.newton_tol) break;
            throw NumericalError("f_step: Newton line search failed, gradient norm " + std::to_string(grad.norm()));
        }
    }
    if (it == opts.newton_max_iter) throw NumericalError("f_step: Newton did not converge");
    out.alpha = alpha;
    out.bias = b;
    out.inner_iterations = it;
    return out;
}

} // namespace

FStepResult f_step(const KernelBank& bank, const Vector& d, const LossSpec& loss, double C, const Vector& y,
                   const FStepOptions& opts) {
    require(d.size() == bank.num_kernels(), "f_step: weight length mismatch");
    require(y.size() == bank.num_samples(), "f_step: label length mismatch");
    require(C > 0.0, "f_step: C must be positive");
    loss.validate();
    const Vector active = active_weights(d, opts.prune_threshold);
    const Matrix Kd = weighted_gram(bank, active);
    FStepResult out = loss.kind == LossKind::Squared ? squared_f_step(Kd, loss, C, y, opts.fit_bias)
                                                     : logistic_f_step(Kd, C, y, opts);
    out.block_norms = squared_norms(bank, active, out.alpha);
    out.fitted = kernel_expansion(Kd, out.alpha, out.bias);
    return out;
}

double kernel_weight_objective(const KernelBank& bank, const Vector& y, const RegularizerSpec& spec,
                               const LossSpec& loss, const Vector& alpha, double bias, const Vector& d) {
    const Matrix Kd = weighted_gram(bank, d);
    const Vector z = kernel_expansion(Kd, alpha, bias);
    double ratio = 0.0;  // sum_m ||f_m||^2 / d_m = sum_m d_m alpha' K_m alpha
    for (Index m = 0; m < d.size(); ++m)
        if (d(m) > 0.0) ratio += d(m) * alpha.dot(bank.gram(m) * alpha);
    RegularizerSpec hs = spec;
    hs.side = Side::KernelWeight;
    return loss.sum(y, z) + 0.5 * spec.C * (ratio + h_value(hs, d));
}

FitResult fit(const KernelBank& bank, const Vector& y, RegularizerSpec spec, const LossSpec& loss,
              const FitOptions& opts) {
    if (spec.side == Side::BlockNorm) spec = conjugate_pair(spec);
    spec.validate();
    loss.validate();
    const Index M = bank.num_kernels();
    require(y.size() == bank.num_samples(), "fit: label length mismatch");
    const bool fixed_weights = spec.family == Family::UniformWeight;

    Vector d = fixed_weights ? Vector::Ones(M) : Vector::Constant(M, 1.0 / static_cast<double>(M));
    if (opts.initial_weights) {
        require(opts.initial_weights->size() == M, "fit: initial weight length mismatch");
        d = *opts.initial_weights;
    }
    std::vector<bool> frozen(static_cast<std::size_t>(M), false);
    const double thr = opts.fstep.prune_threshold;
    for (Index m = 0; m < M; ++m)
        if (d(m) <= thr) {
            d(m) = 0.0;
            frozen[m] = true;
        }

    FitResult result;
    FitTrace& trace = result.trace;
    auto objective = [&](const FStepResult& fs, const Vector& w) {
        return kernel_weight_objective(bank, y, spec, loss, fs.alpha, fs.bias, w);
    };

    FStepResult fs = f_step(bank, d, loss, spec.C, y, opts.fstep);
    double obj = objective(fs, d);
    trace.rows.push_back({0, obj, d, fs.inner_iterations, 0.0});

    if (fixed_weights) {
        trace.converged = true;
    } else {
        const bool monotone = has_convex_h(spec);
        for (int it = 1; it <= opts.max_outer; ++it) {
            WeightDiagnostics diag;
            Vector d_new = optimal_weights(spec, fs.block_norms, &diag);
            trace.clamped_weights += diag.clamped;
            for (Index m = 0; m < M; ++m)
                if (frozen[m] || d_new(m) <= thr) {
                    d_new(m) = 0.0;
                    frozen[m] = true;
                }
            const double delta = (d_new - d).cwiseAbs().maxCoeff();
            d = d_new;
            fs = f_step(bank, d, loss, spec.C, y, opts.fstep);
            const double obj_new = objective(fs, d);
            trace.rows.push_back({it, obj_new, d, fs.inner_iterations, delta});
            if (monotone && obj_new > obj + opts.monotone_slack * std::max(1.0, std::abs(obj))) {
                std::ostringstream os;
                os << "fit: objective increased from " << obj << " to " << obj_new << " at iteration " << it
                   << " (family " << to_string(spec.family) << ")";
                throw NumericalError(os.str());
            }
            obj = obj_new;
            if (delta <= opts.weight_tol) {
                trace.converged = true;
                break;
            }
        }
    }

    MklModel& model = result.model;
    model.alpha = fs.alpha;
    model.bias = fs.bias;
    model.weights = d;
    model.spec = spec;
    model.loss = loss;
    model.kernels = bank.descriptors();
    model.method = "alternating";
    model.in_sample_scores = fs.fitted;
    return result;
}

Vector block_norms(const MklModel& model, const KernelBank& bank) {
    require(model.weights.size() == bank.num_kernels(), "model and bank disagree on kernel count");
    return squared_norms(bank, model.weights, model.alpha);
}

Matrix component_functions(const MklModel& model, const KernelBank& bank) {
    require(model.weights.size() == bank.num_kernels(), "model and bank disagree on kernel count");
    Matrix F = Matrix::Zero(bank.num_samples(), bank.num_kernels());
    for (Index m = 0; m < bank.num_kernels(); ++m)
        if (model.weights(m) > 0.0) F.col(m) = model.weights(m) * (bank.gram(m) * model.alpha);
    return F;
}

double block_norm_objective(const MklModel& model, const KernelBank& bank, const Vector& y) {
    require(model.spec.has_value(), "block_norm_objective needs a regularizer spec");
    RegularizerSpec gs = *model.spec;
    gs.side = Side::BlockNorm;
    const Vector z = kernel_expansion(weighted_gram(bank, model.weights), model.alpha, model.bias);
    return model.loss.sum(y, z) + gs.C * g_value(gs, block_norms(model, bank));
}

Vector predict(const MklModel& model, const std::vector<Matrix>& cross_grams) {
    require(static_cast<Index>(cross_grams.size()) == model.weights.size(),
            "predict: one cross-Gram per kernel is required");
    const Index nt = cross_grams.empty() ? 0 : cross_grams.front().rows();
    Matrix K = Matrix::Zero(nt, model.alpha.size());
    for (Index m = 0; m < model.weights.size(); ++m) {
        if (!(model.weights(m) > 0.0)) continue;
        const Matrix& C = cross_grams[static_cast<std::size_t>(m)];
        require(C.rows() == nt && C.cols() == model.alpha.size(), "predict: cross-Gram has the wrong shape");
        add_scaled(K, model.weights(m), C);
    }
    return kernel_expansion(K, model.alpha, model.bias);
}

Vector predict(const MklModel& model, const DataMatrix& train, const DataMatrix& test) {
    require(train.rows() == model.alpha.size(), "predict: training data does not match the model");
    std::vector<Matrix> cross;
    cross.reserve(model.kernels.size());
    for (std::size_t m = 0; m < model.kernels.size(); ++m) {
        if (!(model.weights(static_cast<Index>(m)) > 0.0)) {
            cross.emplace_back(Matrix::Zero(test.rows(), train.rows()));
            continue;
        }
        const auto& desc = model.kernels[m];
        if (desc.family == KernelFamily::Precomputed)
            throw ValidationError("predict: kernel '" + desc.label() + "' is precomputed; supply its cross-Gram");
        cross.push_back(cross_gram(test, train, desc));
    }
    return predict(model, cross);
}

} // namespace mkl
