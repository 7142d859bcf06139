#include "mkl/regfam.hpp"

#include <cmath>

#include "mkl/conjcheck.hpp"

namespace mkl {

std::string to_string(Family f) {
    switch (f) {
    case Family::BlockOneNorm: return "block_one_norm";
    case Family::LpNormTikhonov: return "lp_tikhonov";
    case Family::LpNormIvanov: return "lp_ivanov";
    case Family::UniformWeight: return "uniform";
    case Family::BlockQNorm: return "block_q_norm";
    case Family::ElasticNet: return "elastic_net";
    case Family::Wedge: return "wedge";
    case Family::MultiTaskIvanov: return "multitask_ivanov";
    }
    return "unknown";
}

Family family_from_string(const std::string& s) {
    for (Family f : {Family::BlockOneNorm, Family::LpNormTikhonov, Family::LpNormIvanov, Family::UniformWeight,
                     Family::BlockQNorm, Family::ElasticNet, Family::Wedge, Family::MultiTaskIvanov})
        if (to_string(f) == s) return f;
    throw ValidationError("unknown regularizer family '" + s + "'");
}

std::string to_string(Side s) { return s == Side::KernelWeight ? "h" : "g"; }

Side side_from_string(const std::string& s) {
    if (s == "h" || s == "kernel_weight") return Side::KernelWeight;
    if (s == "g" || s == "block_norm") return Side::BlockNorm;
    throw ValidationError("unknown regularizer side '" + s + "'");
}

std::string param_name(Family f) {
    switch (f) {
    case Family::LpNormTikhonov:
    case Family::LpNormIvanov: return "p";
    case Family::BlockQNorm: return "q";
    case Family::ElasticNet: return "lambda";
    default: return "";
    }
}

void RegularizerSpec::validate() const {
    require(C > 0.0 && std::isfinite(C), "regularization constant C must be positive");
    switch (family) {
    case Family::LpNormTikhonov:
    case Family::LpNormIvanov: require(param > 0.0, "p must be positive"); break;
    case Family::BlockQNorm: require(param > 2.0, "q must exceed 2"); break;
    case Family::ElasticNet: require(param >= 0.0 && param <= 1.0, "lambda must lie in [0, 1]"); break;
    default: break;
    }
}

bool is_separable(Family f) {
    switch (f) {
    case Family::BlockOneNorm:
    case Family::LpNormTikhonov:
    case Family::UniformWeight:
    case Family::BlockQNorm:
    case Family::ElasticNet: return true;
    default: return false;
    }
}

bool is_ivanov(Family f) { return f == Family::LpNormIvanov || f == Family::MultiTaskIvanov; }

bool has_convex_h(const RegularizerSpec& spec) {
    switch (spec.family) {
    case Family::BlockQNorm: return false;
    case Family::LpNormTikhonov:
    case Family::LpNormIvanov: return spec.param >= 1.0;
    default: return true;
    }
}

Extremum conjugate_extremum(Family f) { return f == Family::BlockQNorm ? Extremum::Sup : Extremum::Inf; }

namespace {

void check_nonneg(const Vector& v, const char* what) {
    for (Index i = 0; i < v.size(); ++i)
        require(v(i) >= 0.0 && !std::isnan(v(i)), std::string(what) + " must be nonnegative");
}

double ivanov_p(const RegularizerSpec& spec) { return spec.family == Family::MultiTaskIvanov ? 1.0 : spec.param; }

} // namespace

double h_scalar(const RegularizerSpec& spec, double d) {
    switch (spec.family) {
    case Family::BlockOneNorm: return d;
    case Family::LpNormTikhonov: return std::pow(d, spec.param) / spec.param;
    case Family::UniformWeight: return d <= 1.0 ? 0.0 : kInf;
    case Family::BlockQNorm: {
        const double q = spec.param;
        return -((q - 2.0) / q) * std::pow(d, -q / (q - 2.0));
    }
    case Family::ElasticNet: {
        const double lam = spec.param;
        const double num = (1.0 - lam) * (1.0 - lam) * d;
        if (lam > 0.0 && d * lam >= 1.0) {
            // Lower semicontinuous closure: at lambda = 1 the family is the [0, 1] indicator.
            return (num == 0.0 && d * lam == 1.0) ? 0.0 : kInf;
        }
        return num / (1.0 - lam * d);
    }
    default: break;
    }
    throw ValidationError("h_scalar: family '" + to_string(spec.family) + "' is not separable");
}

double g_scalar(const RegularizerSpec& spec, double x) {
    switch (spec.family) {
    case Family::BlockOneNorm: return std::sqrt(x);
    case Family::LpNormTikhonov: {
        const double p = spec.param;
        return (1.0 + p) / (2.0 * p) * std::pow(x, p / (1.0 + p));
    }
    case Family::UniformWeight: return x / 2.0;
    case Family::BlockQNorm: return std::pow(x, spec.param / 2.0) / spec.param;
    case Family::ElasticNet: return (1.0 - spec.param) * std::sqrt(x) + spec.param / 2.0 * x;
    default: break;
    }
    throw ValidationError("g_scalar: family '" + to_string(spec.family) + "' is not separable");
}

double h_value(const RegularizerSpec& spec, const Vector& d) {
    require(spec.side == Side::KernelWeight, "h_value needs a kernel-weight side spec");
    check_nonneg(d, "kernel weights");
    if (is_separable(spec.family)) {
        double s = 0.0;
        for (Index m = 0; m < d.size(); ++m) s += h_scalar(spec, d(m));
        return s;
    }
    switch (spec.family) {
    case Family::LpNormIvanov:
    case Family::MultiTaskIvanov: {
        const double p = ivanov_p(spec);
        return d.array().pow(p).sum() <= 1.0 + 1e-9 ? 0.0 : kInf;
    }
    case Family::Wedge:
        for (Index m = 0; m + 1 < d.size(); ++m)
            if (d(m) < d(m + 1)) return kInf;
        return d.sum();
    default: break;
    }
    throw ValidationError("h_value: unsupported family");
}

double g_value(const RegularizerSpec& spec, const Vector& x) {
    require(spec.side == Side::BlockNorm, "g_value needs a block-norm side spec");
    check_nonneg(x, "block norms");
    if (is_separable(spec.family)) {
        double s = 0.0;
        for (Index m = 0; m < x.size(); ++m) s += g_scalar(spec, x(m));
        return s;
    }
    switch (spec.family) {
    case Family::LpNormIvanov:
    case Family::MultiTaskIvanov: {
        const double p = ivanov_p(spec);
        const double s = x.array().pow(p / (1.0 + p)).sum();
        return 0.5 * std::pow(s, (1.0 + p) / p);
    }
    case Family::Wedge: return wedge_g_numeric(x).value;
    default: break;
    }
    throw ValidationError("g_value: unsupported family");
}

Vector optimal_weights(const RegularizerSpec& spec, const Vector& x, WeightDiagnostics* diag) {
    check_nonneg(x, "block norms");
    const Index M = x.size();
    Vector d(M);
    switch (spec.family) {
    case Family::BlockOneNorm: d = x.array().sqrt(); break;
    case Family::LpNormTikhonov: d = x.array().pow(1.0 / (1.0 + spec.param)); break;
    case Family::UniformWeight: d.setOnes(); break;
    case Family::BlockQNorm: {
        const double q = spec.param;
        for (Index m = 0; m < M; ++m) {
            const double v = x(m) > 0.0 ? std::pow(x(m), (2.0 - q) / 2.0) : kInf;
            if (v > kMaxWeight) {
                d(m) = kMaxWeight;
                if (diag) ++diag->clamped;
            } else {
                d(m) = v;
            }
        }
        break;
    }
    case Family::ElasticNet: {
        const double lam = spec.param;
        for (Index m = 0; m < M; ++m) {
            const double r = std::sqrt(x(m));
            d(m) = r > 0.0 ? r / ((1.0 - lam) + lam * r) : 0.0;
        }
        break;
    }
    case Family::LpNormIvanov:
    case Family::MultiTaskIvanov: {
        const double p = ivanov_p(spec);
        const double s = x.array().pow(p / (1.0 + p)).sum();
        if (s <= 0.0) {
            d.setZero();
            break;
        }
        const double norm = std::pow(s, 1.0 / p);
        d = x.array().pow(1.0 / (1.0 + p)) / norm;
        break;
    }
    case Family::Wedge: d = wedge_weight_step(x); break;
    }
    return d;
}

RegularizerSpec conjugate_pair(const RegularizerSpec& spec) {
    RegularizerSpec out = spec;
    out.side = spec.side == Side::KernelWeight ? Side::BlockNorm : Side::KernelWeight;
    return out;
}

} // namespace mkl
