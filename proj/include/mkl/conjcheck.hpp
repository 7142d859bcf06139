#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkl/gram.hpp"
#include "mkl/regfam.hpp"

namespace mkl {

/// Log-spaced grid on [lo, hi]. The conjugates also probe the limit points
/// (0 and +inf on the y side, 0 on the x side).
struct GridSpec {
    double lo = 1e-6;
    double hi = 1e6;
    int points = 4001;
    /// Non-separable problems only: points per axis and zoom passes (the box halves each pass).
    int joint_points = 41;
    int zoom_levels = 60;

    std::vector<double> nodes() const;
};

using ScalarFn = std::function<double(double)>;
using VectorFn = std::function<double(const Vector&)>;

/// g(x) = 1/2 sum_m ext_{y_m} (x_m y_m + h(1/y_m)) for separable h given per coordinate.
double numeric_conjugate_g(const ScalarFn& h, const Vector& x, const GridSpec& grid = {},
                           Extremum ext = Extremum::Inf);

/// Same pairing for a joint h on R_+^M (tensor grid with zooming; M <= 3).
double numeric_conjugate_g_joint(const VectorFn& h, const Vector& x, const GridSpec& grid = {},
                                 Extremum ext = Extremum::Inf);

/// h(d) = -2 ext_{x} (sum_m x_m / (2 d_m) - g(x)) for separable g given per coordinate.
double numeric_conjugate_h(const ScalarFn& g, const Vector& d, const GridSpec& grid = {},
                           Extremum ext = Extremum::Inf);

double numeric_conjugate_h_joint(const VectorFn& g, const Vector& d, const GridSpec& grid = {},
                                 Extremum ext = Extremum::Inf);

struct WedgeResult {
    double value = 0.0;
    /// Multipliers of the ordering constraints d_m >= d_{m+1}; length M - 1.
    Vector eta;
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// sup_{eta >= 0} sum_m sqrt((1 + eta_{m-1} - eta_m) x_m), eta_0 = eta_M = 0.
WedgeResult wedge_g_numeric(const Vector& x, double tol = 1e-10, int max_iter = 500);

/// argmin over d_1 >= ... >= d_M >= 0 of sum_m (x_m / d_m + d_m), recovered from the dual.
Vector wedge_weight_step(const Vector& x);

struct VariationalNorm {
    double value = 0.0;
    /// Column m holds f_m evaluated at the N points.
    Matrix parts;
    bool pseudo_inverse = false;
};

/// min sum_m f_m' K_m^{-1} f_m / d_m subject to sum_m f_m = fbar.
VariationalNorm variational_norm(const KernelBank& bank, const Vector& d, const Vector& fbar);

struct BayesBlockNorm {
    double value = 0.0;
    Vector eta;
    double grad_norm = 0.0;
    int iterations = 0;
    /// Some eta hit the [-40, 40] clamp; value is the infimum evaluated there.
    bool clamped = false;
};

inline constexpr double kEtaMin = -40.0;
inline constexpr double kEtaMax = 40.0;

/// g(x) = 1/2 inf_eta (sum_m x_m e^{-eta_m} + log|s2 I + sum_m e^{eta_m} K_m|).
BayesBlockNorm bayes_g_numeric(const KernelBank& bank, double noise_variance, const Vector& x);

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct ConjugateReport {
    std::string family_id;
    std::string direction;  // "g_from_h", "h_from_g" or "duality"
    Matrix samples;         // one sample point per row
    Vector analytic;
    Vector numeric;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    GridSpec grid;
    bool passed = false;
};

struct SuiteOptions {
    double tolerance = 1e-3;
    int samples = 100;
    int dimension = 3;
    std::uint64_t seed = 20100609;
    GridSpec grid;
    /// Empty runs everything; otherwise only reports whose family name matches.
    std::string family_filter;
};

/// |a - n| / max(|a|, 1e-12), with matching infinities counted as exact.
double relative_error(double analytic, double numeric);

std::vector<ConjugateReport> run_conjugate_suite(const SuiteOptions& opts);

} // namespace mkl
