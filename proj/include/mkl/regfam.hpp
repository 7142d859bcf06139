#pragma once

#include <limits>
#include <string>

#include <Eigen/Dense>

#include "mkl/error.hpp"

namespace mkl {

using Vector = Eigen::VectorXd;

/// Regularizer families shared by the kernel-weight view h(d) and the
/// block-norm view g(x), where x_m = ||f_m||^2.
enum class Family {
    BlockOneNorm,
    LpNormTikhonov,   // param = p > 0
    LpNormIvanov,     // param = p > 0
    UniformWeight,
    BlockQNorm,       // param = q > 2
    ElasticNet,       // param = lambda in [0, 1]
    Wedge,
    MultiTaskIvanov,
};

enum class Side { KernelWeight, BlockNorm };

/// Whether the conjugate pairing is an infimum (concave g) or a supremum (convex g).
enum class Extremum { Inf, Sup };

struct RegularizerSpec {
    Family family = Family::BlockOneNorm;
    double param = 0.0;
    Side side = Side::KernelWeight;
    double C = 1.0;

    void validate() const;
    bool operator==(const RegularizerSpec&) const = default;
};

std::string to_string(Family f);
Family family_from_string(const std::string& s);
std::string to_string(Side s);
Side side_from_string(const std::string& s);
/// "p", "q", "lambda" or "" for parameterless families.
std::string param_name(Family f);

bool is_separable(Family f);
bool is_ivanov(Family f);
/// h is convex and nondecreasing, so the alternating fit is a descent method.
bool has_convex_h(const RegularizerSpec& spec);
Extremum conjugate_extremum(Family f);

inline constexpr double kInf = std::numeric_limits<double>::infinity();
/// Clamp for BlockQNorm weights when x_m = 0.
inline constexpr double kMaxWeight = 1e8;

/// Per-coordinate h for separable families.
double h_scalar(const RegularizerSpec& spec, double d);
/// Per-coordinate g for separable families.
double g_scalar(const RegularizerSpec& spec, double x);

/// Kernel-weight regularizer h(d); +inf outside its domain.
double h_value(const RegularizerSpec& spec, const Vector& d);

/// Block-norm regularizer g(x). Wedge is evaluated through the numerical dual.
double g_value(const RegularizerSpec& spec, const Vector& x);

struct WeightDiagnostics {
    int clamped = 0;
};

/// d minimizing sum_m x_m / d_m + h(d), i.e. d_m = (2 dg/dx_m)^{-1}.
Vector optimal_weights(const RegularizerSpec& spec, const Vector& x, WeightDiagnostics* diag = nullptr);

/// Same family and parameters on the other side of the h <-> g correspondence.
RegularizerSpec conjugate_pair(const RegularizerSpec& spec);

} // namespace mkl
