#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace mkl::detail {

struct NewtonResult {
    Eigen::VectorXd z;
    double value = 0.0;
    /// ||z - P(z - grad)||_inf, the first-order optimality residual on the box.
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline Eigen::VectorXd clamp_box(const Eigen::VectorXd& z, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return z.cwiseMax(lo).cwiseMin(hi);
}

/// Minimizes a smooth convex function over lo <= z <= hi with a projected
/// Newton method (Newton on the free variables, gradient on the binding ones,
/// Armijo backtracking along the projection arc).
///
/// `fun(z, grad, hess)` returns the value (+inf outside the domain) and, when
/// the pointers are non-null, fills the gradient and Hessian.
template <typename Fun>
NewtonResult projected_newton(Fun&& fun, Eigen::VectorXd z, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                              double tol, int max_iter) {
    using Eigen::Index;
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const Index n = z.size();
    NewtonResult res;
    z = clamp_box(z, lo, hi);
    VectorXd g(n);
    MatrixXd H(n, n);
    double val = fun(z, &g, &H);
    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it;
        res.residual = n == 0 ? 0.0 : (z - clamp_box(z - g, lo, hi)).cwiseAbs().maxCoeff();
        if (res.residual <= tol) {
            res.converged = true;
            break;
        }
        const double eps = std::min(1e-8, res.residual);
        std::vector<Index> free_idx;
        VectorXd p = VectorXd::Zero(n);
        for (Index i = 0; i < n; ++i) {
            const bool at_lo = z(i) <= lo(i) + eps && g(i) > 0.0;
            const bool at_hi = z(i) >= hi(i) - eps && g(i) < 0.0;
            if (at_lo || at_hi)
                p(i) = -g(i);
            else
                free_idx.push_back(i);
        }
        if (!free_idx.empty()) {
            const Index nf = static_cast<Index>(free_idx.size());
            MatrixXd Hf(nf, nf);
            VectorXd gf(nf);
            for (Index a = 0; a < nf; ++a) {
                gf(a) = g(free_idx[a]);
                for (Index b = 0; b < nf; ++b) Hf(a, b) = H(free_idx[a], free_idx[b]);
            }
            double ridge = 0.0;
            VectorXd pf;
            for (int attempt = 0; attempt < 30; ++attempt) {
                Eigen::LLT<MatrixXd> llt(Hf + ridge * MatrixXd::Identity(nf, nf));
                if (llt.info() == Eigen::Success) {
                    pf = llt.solve(-gf);
                    if (pf.allFinite()) break;
                }
                ridge = ridge == 0.0 ? 1e-12 * std::max(1.0, Hf.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
                pf.resize(0);
            }
            if (pf.size() == 0) pf = -gf;
            for (Index a = 0; a < nf; ++a) p(free_idx[a]) = pf(a);
        }

        auto try_direction = [&](const VectorXd& dir) {
            double t = 1.0;
            for (int k = 0; k < 80; ++k, t *= 0.5) {
                VectorXd zt = clamp_box(z + t * dir, lo, hi);
                const double vt = fun(zt, nullptr, nullptr);
                if (std::isfinite(vt) && vt <= val + 1e-4 * g.dot(zt - z)) {
                    z = std::move(zt);
                    return true;
                }
            }
            return false;
        };
        if (!try_direction(p) && !try_direction(-g)) break;
        val = fun(z, &g, &H);
    }
    res.z = z;
    res.value = val;
    if (!res.converged) {
        res.residual = n == 0 ? 0.0 : (z - clamp_box(z - g, lo, hi)).cwiseAbs().maxCoeff();
        res.converged = res.residual <= tol;
    }
    return res;
}

} // namespace mkl::detail
