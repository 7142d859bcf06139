#include "mkl/conjcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mkl/detail/projected_newton.hpp"

namespace mkl {

std::vector<double> GridSpec::nodes() const {
    require(lo > 0.0 && hi > lo && points >= 2, "invalid grid specification");
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    std::vector<double> out(static_cast<std::size_t>(points));
    // Exponent computed as a + (b - a) * i / (n - 1) so decades land on exact powers of ten.
    for (int i = 0; i < points; ++i) out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
    return out;
}

namespace {

bool better(double cand, double best, Extremum ext) { return ext == Extremum::Inf ? cand < best : cand > best; }

double worst(Extremum ext) { return ext == Extremum::Inf ? kInf : -kInf; }

// x * y with 0 * inf = 0.
double safe_product(double x, double y) { return (x == 0.0 || y == 0.0) ? 0.0 : x * y; }

} // namespace

double numeric_conjugate_g(const ScalarFn& h, const Vector& x, const GridSpec& grid, Extremum ext) {
    const auto nodes = grid.nodes();
    double total = 0.0;
    for (Index m = 0; m < x.size(); ++m) {
        require(x(m) >= 0.0, "numeric_conjugate_g: x must be nonnegative");
        double best = worst(ext);
        auto consider = [&](double y) {
            const double v = safe_product(x(m), y) + h(1.0 / y);
            if (!std::isnan(v) && better(v, best, ext)) best = v;
        };
        consider(0.0);  // d = +inf
        for (double y : nodes) consider(y);
        if (ext == Extremum::Inf) consider(kInf);  // d = 0
        if (!std::isfinite(best))
            throw NumericalError("numeric_conjugate_g: objective is not finite anywhere on the grid");
        total += best;
    }
    return 0.5 * total;
}

double numeric_conjugate_h(const ScalarFn& g, const Vector& d, const GridSpec& grid, Extremum ext) {
    const auto nodes = grid.nodes();
    double total = 0.0;
    for (Index m = 0; m < d.size(); ++m) {
        require(d(m) >= 0.0, "numeric_conjugate_h: d must be nonnegative");
        const double slope = d(m) > 0.0 ? 1.0 / (2.0 * d(m)) : kInf;
        auto objective = [&](double x) { return safe_product(x, slope) - g(x); };
        double best = objective(0.0);
        std::size_t best_idx = 0;  // 0 is the x = 0 point
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double v = objective(nodes[i]);
            if (!std::isnan(v) && better(v, best, ext)) {
                best = v;
                best_idx = i + 1;
            }
        }
        if (best_idx == nodes.size())
            throw NumericalError("numeric_conjugate_h: inner problem unbounded on the grid (d = " +
                                 std::to_string(d(m)) + ")");
        total += best;
    }
    return -2.0 * total;
}

namespace {

// Tensor-grid search over log-spaced axes with successive zooming around the
// incumbent. `with_zero` adds the point 0 on every axis.
template <typename Objective>
double zoom_search(Objective&& objective, Index dim, const GridSpec& grid, Extremum ext, bool with_zero,
                   bool* hit_upper_edge) {
    require(dim >= 1 && dim <= 3, "joint conjugates support 1 to 3 coordinates");
    require(grid.joint_points >= 3, "joint grid needs at least 3 points per axis");
    const double log_lo = std::log(grid.lo);
    const double log_hi = std::log(grid.hi);
    std::vector<double> center(static_cast<std::size_t>(dim), 0.5 * (log_lo + log_hi));
    std::vector<double> half(static_cast<std::size_t>(dim), 0.5 * (log_hi - log_lo));
    const int n = grid.joint_points;
    const int axis_len = n + (with_zero ? 1 : 0);
    double best = worst(ext);
    if (hit_upper_edge) *hit_upper_edge = false;

    for (int level = 0; level <= grid.zoom_levels; ++level) {
        std::vector<std::vector<double>> axes(static_cast<std::size_t>(dim));
        for (Index k = 0; k < dim; ++k) {
            auto& ax = axes[static_cast<std::size_t>(k)];
            if (with_zero) ax.push_back(0.0);
            const double a = std::max(log_lo, center[k] - half[k]);
            const double b = std::min(log_hi, center[k] + half[k]);
            for (int i = 0; i < n; ++i) ax.push_back(std::exp(a + (b - a) * i / (n - 1)));
        }
        Index total = 1;
        for (Index k = 0; k < dim; ++k) total *= axis_len;
        Vector pt(dim);
        std::vector<int> best_idx(static_cast<std::size_t>(dim), -1);
        double level_best = worst(ext);
        for (Index flat = 0; flat < total; ++flat) {
            Index rem = flat;
            std::vector<int> idx(static_cast<std::size_t>(dim));
            for (Index k = 0; k < dim; ++k) {
                idx[k] = static_cast<int>(rem % axis_len);
                rem /= axis_len;
                pt(k) = axes[k][static_cast<std::size_t>(idx[k])];
            }
            const double v = objective(pt);
            if (!std::isnan(v) && better(v, level_best, ext)) {
                level_best = v;
                best_idx = idx;
            }
        }
        if (best_idx.front() < 0) break;
        if (better(level_best, best, ext) || level_best == best) best = level_best;
        if (level == 0 && hit_upper_edge)
            for (Index k = 0; k < dim; ++k)
                if (best_idx[k] == axis_len - 1) *hit_upper_edge = true;
        for (Index k = 0; k < dim; ++k) {
            const double x = axes[k][static_cast<std::size_t>(best_idx[k])];
            if (x > 0.0) center[k] = std::log(x);
            half[k] *= 0.5;
        }
    }
    return best;
}

} // namespace

double numeric_conjugate_g_joint(const VectorFn& h, const Vector& x, const GridSpec& grid, Extremum ext) {
    for (Index m = 0; m < x.size(); ++m) require(x(m) >= 0.0, "numeric_conjugate_g_joint: x must be nonnegative");
    auto objective = [&](const Vector& y) { return x.dot(y) + h(y.cwiseInverse()); };
    const double best = zoom_search(objective, x.size(), grid, ext, false, nullptr);
    if (!std::isfinite(best))
        throw NumericalError("numeric_conjugate_g_joint: objective is not finite anywhere on the grid");
    return 0.5 * best;
}

double numeric_conjugate_h_joint(const VectorFn& g, const Vector& d, const GridSpec& grid, Extremum ext) {
    for (Index m = 0; m < d.size(); ++m) require(d(m) > 0.0, "numeric_conjugate_h_joint: d must be positive");
    const Vector slope = (2.0 * d).cwiseInverse();
    auto objective = [&](const Vector& x) { return x.dot(slope) - g(x); };
    bool edge = false;
    const double best = zoom_search(objective, d.size(), grid, ext, true, &edge);
    if (edge) throw NumericalError("numeric_conjugate_h_joint: inner problem unbounded on the grid");
    return -2.0 * best;
}

// ---------------------------------------------------------------------------
// Wedge
// ---------------------------------------------------------------------------

WedgeResult wedge_g_numeric(const Vector& x, double tol, int max_iter) {
    const Index M = x.size();
    for (Index m = 0; m < M; ++m) require(x(m) >= 0.0 && std::isfinite(x(m)), "wedge: x must be nonnegative");
    WedgeResult res;
    res.eta = Vector::Zero(std::max<Index>(M - 1, 0));
    if (M == 0) return res;

    // A zero x_m only adds d_m, so it is pooled into its successor; this
    // leaves a reduced problem with weights w_j in place of the 1s.
    std::vector<double> xr, wr;
    std::vector<Index> where;  // original index of each reduced coordinate
    int zeros = 0;
    for (Index m = 0; m < M; ++m) {
        if (x(m) > 0.0) {
            xr.push_back(x(m));
            wr.push_back(1.0 + zeros);
            where.push_back(m);
            zeros = 0;
        } else {
            ++zeros;
        }
    }
    const Index J = static_cast<Index>(xr.size());
    if (J == 0) return res;

    Vector zeta = Vector::Zero(J - 1);
    if (J == 1) {
        res.value = std::sqrt(wr[0] * xr[0]);
    } else {
        auto neg_dual = [&](const Vector& z, Vector* grad, Matrix* hess) {
            Vector c(J), d1(J), d2(J);
            double val = 0.0;
            for (Index j = 0; j < J; ++j) {
                const double prev = j > 0 ? z(j - 1) : 0.0;
                const double next = j + 1 < J ? z(j) : 0.0;
                c(j) = wr[j] + prev - next;
                if (!(c(j) > 0.0)) return kInf;
                const double sx = std::sqrt(xr[j]);
                const double sc = std::sqrt(c(j));
                val -= sx * sc;
                d1(j) = sx / (2.0 * sc);
                d2(j) = -sx / (4.0 * c(j) * sc);
            }
            if (grad) {
                grad->resize(J - 1);
                for (Index k = 0; k < J - 1; ++k) (*grad)(k) = d1(k) - d1(k + 1);
            }
            if (hess) {
                hess->setZero(J - 1, J - 1);
                for (Index k = 0; k < J - 1; ++k) {
                    (*hess)(k, k) = -(d2(k) + d2(k + 1));
                    if (k + 1 < J - 1) {
                        (*hess)(k, k + 1) = d2(k + 1);
                        (*hess)(k + 1, k) = d2(k + 1);
                    }
                }
            }
            return val;
        };
        const Vector lo = Vector::Zero(J - 1);
        const Vector hi = Vector::Constant(J - 1, kInf);
        auto sol = detail::projected_newton(neg_dual, zeta, lo, hi, tol, max_iter);
        if (sol.residual > 1e-6)
            throw NumericalError("wedge_g_numeric: no convergence, KKT residual " + std::to_string(sol.residual));
        zeta = sol.z;
        res.value = -sol.value;
        res.kkt_residual = sol.residual;
        res.iterations = sol.iterations;
    }

    // Map reduced multipliers back: boundary after a pooled zero has s_m = 0.
    Vector eta_full = Vector::Zero(M + 1);
    Index j = 0;
    for (Index m = 0; m < M; ++m) {
        if (x(m) > 0.0) {
            eta_full(m + 1) = j + 1 < J ? zeta(j) : 0.0;
            ++j;
        } else if (j < J) {
            eta_full(m + 1) = eta_full(m) + 1.0;
        } else {
            eta_full(m + 1) = 0.0;
        }
    }
    res.eta = eta_full.segment(1, M - 1);
    return res;
}

Vector wedge_weight_step(const Vector& x) {
    const Index M = x.size();
    const WedgeResult res = wedge_g_numeric(x);
    Vector eta_full = Vector::Zero(M + 1);
    if (M > 1) eta_full.segment(1, M - 1) = res.eta;
    Vector d = Vector::Zero(M);
    for (Index m = M - 1; m >= 0; --m) {
        if (x(m) > 0.0) {
            const double s = 1.0 + eta_full(m) - eta_full(m + 1);
            d(m) = std::sqrt(x(m) / s);
            // Pooled entries agree only to solver tolerance; keep the order exact.
            if (m + 1 < M) d(m) = std::max(d(m), d(m + 1));
        } else {
            d(m) = m + 1 < M ? d(m + 1) : 0.0;
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Variational norm
// ---------------------------------------------------------------------------

VariationalNorm variational_norm(const KernelBank& bank, const Vector& d, const Vector& fbar) {
    require(d.size() == bank.num_kernels(), "variational_norm: weight length mismatch");
    require(fbar.size() == bank.num_samples(), "variational_norm: fbar length mismatch");
    const Matrix Kd = weighted_gram(bank, d);
    VariationalNorm out;
    Vector alpha;
    Eigen::LLT<Matrix> llt(Kd);
    const double fnorm = std::max(1.0, fbar.norm());
    bool ok = false;
    if (llt.info() == Eigen::Success) {
        alpha = llt.solve(fbar);
        ok = alpha.allFinite() && (Kd * alpha - fbar).norm() <= 1e-9 * fnorm;
    }
    if (!ok) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(Kd);
        const Vector& lam = es.eigenvalues();
        const double cutoff = 1e-10 * std::max(lam.cwiseAbs().maxCoeff(), 0.0);
        Vector inv = Vector::Zero(lam.size());
        for (Index i = 0; i < lam.size(); ++i)
            if (lam(i) > cutoff) inv(i) = 1.0 / lam(i);
        alpha = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * fbar;
        if ((Kd * alpha - fbar).norm() > 1e-9 * fnorm)
            throw ValidationError("variational_norm: fbar is outside the range of the combined Gram");
        out.pseudo_inverse = true;
    }
    out.parts = Matrix::Zero(fbar.size(), bank.num_kernels());
    for (Index m = 0; m < bank.num_kernels(); ++m) {
        if (d(m) <= 0.0) continue;
        const Vector Ka = bank.gram(m) * alpha;
        out.parts.col(m) = d(m) * Ka;
        out.value += d(m) * alpha.dot(Ka);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bayesian block norm
// ---------------------------------------------------------------------------

BayesBlockNorm bayes_g_numeric(const KernelBank& bank, double noise_variance, const Vector& x) {
    require(noise_variance > 0.0, "bayes_g_numeric: noise variance must be positive");
    const Index M = bank.num_kernels();
    const Index N = bank.num_samples();
    require(x.size() == M, "bayes_g_numeric: x length mismatch");
    for (Index m = 0; m < M; ++m) require(x(m) >= 0.0, "bayes_g_numeric: x must be nonnegative");

    auto objective = [&](const Vector& eta, Vector* grad, Matrix* hess) {
        Matrix Kbar = Matrix::Identity(N, N) * noise_variance;
        for (Index m = 0; m < M; ++m) Kbar += std::exp(eta(m)) * bank.gram(m);
        Eigen::LLT<Matrix> llt(Kbar);
        if (llt.info() != Eigen::Success) return kInf;
        double val = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        for (Index m = 0; m < M; ++m) val += x(m) * std::exp(-eta(m));
        if (grad || hess) {
            std::vector<Matrix> A(static_cast<std::size_t>(M));
            Vector tr(M);
            for (Index m = 0; m < M; ++m) {
                A[m] = llt.solve(bank.gram(m));
                tr(m) = A[m].trace();
            }
            if (grad) {
                grad->resize(M);
                for (Index m = 0; m < M; ++m) (*grad)(m) = -x(m) * std::exp(-eta(m)) + std::exp(eta(m)) * tr(m);
            }
            if (hess) {
                hess->resize(M, M);
                for (Index m = 0; m < M; ++m)
                    for (Index k = m; k < M; ++k) {
                        const double cross = (A[m].transpose().cwiseProduct(A[k])).sum();
                        double v = -std::exp(eta(m) + eta(k)) * cross;
                        if (k == m) v += x(m) * std::exp(-eta(m)) + std::exp(eta(m)) * tr(m);
                        (*hess)(m, k) = v;
                        (*hess)(k, m) = v;
                    }
            }
        }
        return val;
    };

    const Vector lo = Vector::Constant(M, kEtaMin);
    const Vector hi = Vector::Constant(M, kEtaMax);
    Vector start = Vector::Zero(M);
    for (Index m = 0; m < M; ++m)
        if (x(m) == 0.0) start(m) = kEtaMin;
    auto sol = detail::projected_newton(objective, start, lo, hi, 1e-10, 500);
    BayesBlockNorm out;
    out.eta = sol.z;
    out.value = 0.5 * sol.value;
    out.iterations = sol.iterations;
    Vector g;
    objective(sol.z, &g, nullptr);
    out.grad_norm = (sol.z - detail::clamp_box(sol.z - g, lo, hi)).norm();
    for (Index m = 0; m < M; ++m)
        if (sol.z(m) <= kEtaMin || sol.z(m) >= kEtaMax) out.clamped = true;
    if (out.grad_norm > 1e-7)
        throw NumericalError("bayes_g_numeric: projected gradient norm " + std::to_string(out.grad_norm));
    return out;
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
    if (analytic == numeric) return 0.0;
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) return kInf;
    return std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-12);
}

namespace {

std::string family_id(const RegularizerSpec& s) {
    std::ostringstream os;
    os << to_string(s.family);
    const auto pn = param_name(s.family);
    if (!pn.empty()) os << "(" << pn << "=" << s.param << ")";
    return os.str();
}

RegularizerSpec make(Family f, double param, Side side) {
    RegularizerSpec s;
    s.family = f;
    s.param = param;
    s.side = side;
    return s;
}

void finish(ConjugateReport& r) {
    r.max_rel_error = 0.0;
    for (Index i = 0; i < r.analytic.size(); ++i)
        r.max_rel_error = std::max(r.max_rel_error, relative_error(r.analytic(i), r.numeric(i)));
    r.passed = r.max_rel_error <= r.tolerance;
}

// Upper end of the sampling interval for d inside the family's domain.
double weight_domain_cap(const RegularizerSpec& s) {
    switch (s.family) {
    case Family::UniformWeight: return 0.95;
    case Family::ElasticNet: return s.param > 0.0 ? 0.95 / s.param : 10.0;
    default: return 10.0;
    }
}

} // namespace

std::vector<ConjugateReport> run_conjugate_suite(const SuiteOptions& opts) {
    require(opts.samples >= 1 && opts.dimension >= 1, "suite needs at least one sample and coordinate");
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, unif(rng)); };
    auto wanted = [&](Family f) { return opts.family_filter.empty() || opts.family_filter == to_string(f); };

    std::vector<ConjugateReport> reports;
    const std::vector<std::pair<Family, double>> separable = {
        {Family::BlockOneNorm, 0.0},   {Family::LpNormTikhonov, 0.5}, {Family::LpNormTikhonov, 1.0},
        {Family::LpNormTikhonov, 2.0}, {Family::LpNormTikhonov, 3.0}, {Family::UniformWeight, 0.0},
        {Family::BlockQNorm, 3.0},     {Family::BlockQNorm, 4.0},     {Family::ElasticNet, 0.2},
        {Family::ElasticNet, 0.5},     {Family::ElasticNet, 0.8},
    };
    const Index M = opts.dimension;

    for (const auto& [fam, param] : separable) {
        if (!wanted(fam)) continue;
        const RegularizerSpec hs = make(fam, param, Side::KernelWeight);
        const RegularizerSpec gs = conjugate_pair(hs);
        const Extremum ext = conjugate_extremum(fam);

        ConjugateReport fwd;
        fwd.family_id = family_id(hs);
        fwd.direction = "g_from_h";
        fwd.tolerance = opts.tolerance;
        fwd.grid = opts.grid;
        fwd.samples.resize(opts.samples, M);
        fwd.analytic.resize(opts.samples);
        fwd.numeric.resize(opts.samples);
        for (int i = 0; i < opts.samples; ++i) {
            Vector x(M);
            for (Index m = 0; m < M; ++m) x(m) = log_uniform(1e-2, 1e2);
            fwd.samples.row(i) = x.transpose();
            fwd.analytic(i) = g_value(gs, x);
            fwd.numeric(i) = numeric_conjugate_g([&](double d) { return h_scalar(hs, d); }, x, opts.grid, ext);
        }
        finish(fwd);
        reports.push_back(std::move(fwd));

        ConjugateReport bwd;
        bwd.family_id = family_id(hs);
        bwd.direction = "h_from_g";
        bwd.tolerance = opts.tolerance;
        bwd.grid = opts.grid;
        bwd.samples.resize(opts.samples, M);
        bwd.analytic.resize(opts.samples);
        bwd.numeric.resize(opts.samples);
        const double cap = weight_domain_cap(hs);
        for (int i = 0; i < opts.samples; ++i) {
            Vector d(M);
            for (Index m = 0; m < M; ++m) d(m) = log_uniform(0.1 * std::min(cap, 1.0), cap);
            bwd.samples.row(i) = d.transpose();
            bwd.analytic(i) = h_value(hs, d);
            bwd.numeric(i) = numeric_conjugate_h([&](double x) { return g_scalar(gs, x); }, d, opts.grid, ext);
        }
        finish(bwd);
        reports.push_back(std::move(bwd));
    }

    // Non-separable constraint families on a small joint grid.
    const std::vector<std::pair<Family, double>> joint = {
        {Family::LpNormIvanov, 1.0}, {Family::LpNormIvanov, 2.0}, {Family::MultiTaskIvanov, 1.0}};
    const Index Mj = std::min<Index>(M, 2);
    for (const auto& [fam, param] : joint) {
        if (!wanted(fam)) continue;
        const RegularizerSpec hs = make(fam, param, Side::KernelWeight);
        const RegularizerSpec gs = conjugate_pair(hs);
        ConjugateReport fwd;
        fwd.family_id = family_id(hs);
        fwd.direction = "g_from_h";
        fwd.tolerance = opts.tolerance;
        fwd.grid = opts.grid;
        const int n = opts.samples;
        fwd.samples.resize(n, Mj);
        fwd.analytic.resize(n);
        fwd.numeric.resize(n);
        for (int i = 0; i < n; ++i) {
            Vector x(Mj);
            for (Index m = 0; m < Mj; ++m) x(m) = log_uniform(1e-1, 1e1);
            fwd.samples.row(i) = x.transpose();
            fwd.analytic(i) = g_value(gs, x);
            fwd.numeric(i) = numeric_conjugate_g_joint([&](const Vector& d) { return h_value(hs, d); }, x, opts.grid);
        }
        finish(fwd);
        reports.push_back(std::move(fwd));

        // h is the indicator of sum_m d_m^p <= 1: zero inside, +inf outside.
        ConjugateReport bwd;
        bwd.family_id = family_id(hs);
        bwd.direction = "h_from_g";
        bwd.tolerance = opts.tolerance;
        bwd.grid = opts.grid;
        bwd.samples.resize(n, Mj);
        bwd.analytic.resize(n);
        bwd.numeric.resize(n);
        const double p = fam == Family::MultiTaskIvanov ? 1.0 : param;
        for (int i = 0; i < n; ++i) {
            Vector d(Mj);
            for (Index m = 0; m < Mj; ++m) d(m) = log_uniform(1e-1, 1.0);
            const double level = i % 2 == 0 ? 0.3 + 0.65 * unif(rng) : 1.1 + 2.0 * unif(rng);
            d *= std::pow(level / d.array().pow(p).sum(), 1.0 / p);
            bwd.samples.row(i) = d.transpose();
            bwd.analytic(i) = h_value(hs, d);
            try {
                bwd.numeric(i) = numeric_conjugate_h_joint([&](const Vector& x) { return g_value(gs, x); }, d,
                                                           opts.grid);
            } catch (const NumericalError&) {
                bwd.numeric(i) = kInf;
            }
        }
        finish(bwd);
        reports.push_back(std::move(bwd));
    }

    if (wanted(Family::Wedge)) {
        ConjugateReport w;
        w.family_id = "wedge";
        w.direction = "duality";
        w.tolerance = std::min(opts.tolerance, 1e-5);
        w.grid = opts.grid;
        const Index Mw = 5;
        w.samples = Matrix::Zero(opts.samples, Mw);
        w.analytic.resize(opts.samples);
        w.numeric.resize(opts.samples);
        for (int i = 0; i < opts.samples; ++i) {
            const Index dim = 1 + i % Mw;
            Vector x(dim);
            for (Index m = 0; m < dim; ++m) x(m) = log_uniform(1e-2, 1e2);
            w.samples.row(i).head(dim) = x.transpose();
            const Vector d = wedge_weight_step(x);
            double primal = 0.0;
            for (Index m = 0; m < dim; ++m) primal += (d(m) > 0.0 ? x(m) / d(m) : 0.0) + d(m);
            w.analytic(i) = 2.0 * wedge_g_numeric(x).value;
            w.numeric(i) = primal;
        }
        finish(w);
        reports.push_back(std::move(w));
    }
    return reports;
}

} // namespace mkl
