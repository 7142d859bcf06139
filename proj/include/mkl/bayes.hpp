#pragma once

#include <optional>
#include <vector>

#include "mkl/gram.hpp"
#include "mkl/solver.hpp"

namespace mkl {

/// 1/2 y' Kbar^{-1} y + 1/2 log|Kbar| with Kbar = s2 I + sum_m d_m K_m.
/// The (N/2) log(2 pi) constant is left out.
double neg_log_marginal(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& y);

/// log|s2 I + sum_m d_m K_m|, concave in d.
double bayes_h_value(const KernelBank& bank, const Vector& d, double noise_variance);

struct BayesFStep {
    /// Column m holds f_m = d_m K_m Kbar^{-1} y.
    Matrix parts;
    /// x_m = f_m' K_m^{-1} f_m, computed as d_m^2 beta' K_m beta.
    Vector block_norms;
    /// Kbar^{-1} y
    Vector beta;
};

BayesFStep mackay_f_step(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& y);

/// d_m <- x_m / tr(Kbar^{-1} d_m K_m). Zero weights stay zero.
Vector mackay_d_step(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& x);

/// (1/(2 s2)) |y - sum_m f_m|^2 + 1/2 sum_m norms_m / d_m.
double bayes_bracket(const Vector& y, const Matrix& parts, const Vector& norms, const Vector& d,
                     double noise_variance);

struct BayesOptions {
    int max_iter = 500;
    double tol = 1e-6;
    /// Stop after this many consecutive NLL increases larger than increase_slack.
    int increase_patience = 5;
    double increase_slack = 1e-6;
    std::optional<Vector> initial_weights;
};

struct BayesState {
    Vector weights;
    double noise_variance = 1.0;
    Matrix parts;
    std::vector<double> nll_trace;
    std::vector<Vector> weight_trace;
    int iterations = 0;
    bool converged = false;
    /// The NLL kept rising and the best state seen was returned instead.
    bool diverged = false;
};

struct BayesFit {
    BayesState state;
    MklModel model;
};

BayesFit fit_bayes(const KernelBank& bank, const Vector& y, double noise_variance, const BayesOptions& opts = {});

} // namespace mkl
