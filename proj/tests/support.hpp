#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mkl/gram.hpp"
#include "mkl/regfam.hpp"

namespace support {

using mkl::Index;
using mkl::Matrix;
using mkl::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix A(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) A(i, j) = n01(rng);
    return A;
}

inline Vector random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

inline Vector random_positive(Index n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = std::exp(u(rng));
    return v;
}

/// A A' / cols + ridge I
inline Matrix random_spd(Index n, Index rank, double ridge, std::mt19937_64& rng) {
    const Matrix A = random_matrix(n, rank, rng);
    Matrix K = A * A.transpose() / static_cast<double>(rank);
    K.diagonal().array() += ridge;
    return K;
}

/// M Gaussian kernels of different widths on N random 2-D points.
inline mkl::KernelBank random_bank(Index n, Index M, std::mt19937_64& rng) {
    mkl::DataMatrix data;
    data.X = random_matrix(n, 2, rng);
    std::vector<mkl::KernelDescriptor> descs;
    for (Index m = 0; m < M; ++m) {
        mkl::KernelDescriptor d;
        d.family = m % 3 == 2 ? mkl::KernelFamily::Linear : mkl::KernelFamily::Gaussian;
        d.gamma = 0.5 + static_cast<double>(m);
        d.columns = m % 2 == 0 ? std::vector<Index>{0} : std::vector<Index>{0, 1};
        descs.push_back(d);
    }
    return mkl::build_bank(data, descs);
}

inline mkl::KernelBank bank_of(const std::vector<Matrix>& Ks) {
    std::vector<mkl::GramMatrix> g;
    for (std::size_t m = 0; m < Ks.size(); ++m) {
        mkl::KernelDescriptor d;
        d.family = mkl::KernelFamily::Precomputed;
        d.name = "K" + std::to_string(m);
        g.push_back({Ks[m], d});
    }
    return mkl::KernelBank(std::move(g));
}

/// Signal feature in column 0, pure noise in column 1; y = sin(x0) + small noise.
struct SignalNoise {
    mkl::DataMatrix data;
    Vector y;
    mkl::KernelBank bank;
};

inline SignalNoise signal_noise_problem(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::normal_distribution<double> noise(0.0, 0.1);
    SignalNoise p;
    p.data.X.resize(n, 2);
    p.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        p.data.X(i, 0) = u(rng);
        p.data.X(i, 1) = u(rng);
        p.y(i) = std::sin(p.data.X(i, 0)) + noise(rng);
    }
    std::vector<mkl::KernelDescriptor> descs(2);
    for (Index m = 0; m < 2; ++m) {
        descs[m].family = mkl::KernelFamily::Gaussian;
        descs[m].gamma = 1.0;
        descs[m].columns = {m};
    }
    p.bank = mkl::build_bank(p.data, descs);
    return p;
}

/// Pool-adjacent-violators solution of min sum_m (x_m / d_m + d_m) over d_1 >= ... >= d_M >= 0.
/// A pooled block shares d = sqrt(mean x).
inline Vector pav_wedge(const Vector& x) {
    struct Block {
        double sum;
        int count;
    };
    std::vector<Block> blocks;
    for (Index m = 0; m < x.size(); ++m) {
        blocks.push_back({x(m), 1});
        while (blocks.size() > 1) {
            const Block& b = blocks.back();
            const Block& a = blocks[blocks.size() - 2];
            if (a.sum / a.count >= b.sum / b.count) break;
            Block merged{a.sum + b.sum, a.count + b.count};
            blocks.pop_back();
            blocks.back() = merged;
        }
    }
    Vector d(x.size());
    Index m = 0;
    for (const auto& b : blocks)
        for (int k = 0; k < b.count; ++k) d(m++) = std::sqrt(b.sum / b.count);
    return d;
}

inline double wedge_primal(const Vector& x, const Vector& d) {
    double s = 0.0;
    for (Index m = 0; m < x.size(); ++m) s += (d(m) > 0.0 ? x(m) / d(m) : (x(m) > 0.0 ? HUGE_VAL : 0.0)) + d(m);
    return s;
}

/// Argmin of f over a uniform grid on [lo, hi], refined by golden-section search.
inline double grid_argmin(const std::function<double(double)>& f, double lo, double hi, int points = 20001) {
    double best_t = lo, best = f(lo);
    const double h = (hi - lo) / (points - 1);
    for (int i = 1; i < points; ++i) {
        const double t = lo + h * i;
        const double v = f(t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    double a = std::max(lo, best_t - h), b = std::min(hi, best_t + h);
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double c = b - r * (b - a), e = a + r * (b - a);
        if (f(c) < f(e))
            b = e;
        else
            a = c;
    }
    return 0.5 * (a + b);
}

/// Closed-form kernel ridge with an unpenalized bias: min (1/(2 s2)) |y - K a - b|^2 + (C/2) a' K a.
inline Vector ridge_scores(const Matrix& K, const Vector& y, double C, double s2, bool bias) {
    const Index n = y.size();
    Matrix A = K;
    A.diagonal().array() += C * s2;
    const Eigen::LLT<Matrix> llt(A);
    double b = 0.0;
    Vector alpha;
    if (bias) {
        const Vector Ay = llt.solve(y), A1 = llt.solve(Vector::Ones(n));
        b = Ay.sum() / A1.sum();
        alpha = Ay - b * A1;
    } else {
        alpha = llt.solve(y);
    }
    return K * alpha + Vector::Constant(n, b);
}

/// Minimizes sum_i (y_i - sum_m f_m(x_i) - b)^2 / (2 s2) + C sum_m phi(||f_m||^2) directly over the
/// functions, by accelerated proximal gradient in whitened coordinates f_m = V_m w_m (K_m = V_m V_m').
/// The bias is eliminated by centering. `radial_prox(v_norm, t)` returns argmin_r 1/2 (r - v_norm)^2 + t phi(r^2).
struct BlockNormMinimum {
    double value = 0.0;
    std::vector<Vector> w;
};

inline BlockNormMinimum block_norm_minimize(const std::vector<Matrix>& Ks, const Vector& y, double C, double s2,
                                            const std::function<double(double)>& phi,
                                            const std::function<double(double, double)>& radial_prox,
                                            int iterations = 60000) {
    const Index n = y.size();
    const Index M = static_cast<Index>(Ks.size());
    std::vector<Matrix> V;
    Matrix stacked(n, 0);
    for (const auto& K : Ks) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(K);
        const Vector ev = es.eigenvalues().cwiseMax(0.0);
        V.push_back(es.eigenvectors() * ev.cwiseSqrt().asDiagonal());
    }
    const Matrix P = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
    Matrix Ksum = Matrix::Zero(n, n);
    for (const auto& K : Ks) Ksum += K;
    const double L = Eigen::SelfAdjointEigenSolver<Matrix>(P * Ksum * P).eigenvalues().maxCoeff() / s2;
    const double t = 1.0 / L;
    const Vector yc = P * y;

    auto objective = [&](const std::vector<Vector>& w) {
        Vector r = yc;
        double pen = 0.0;
        for (Index m = 0; m < M; ++m) {
            r -= P * (V[m] * w[m]);
            pen += phi(w[m].squaredNorm());
        }
        return 0.5 * r.squaredNorm() / s2 + C * pen;
    };

    std::vector<Vector> w(M, Vector::Zero(n)), z = w, w_prev = w;
    double tk = 1.0;
    double f_prev = objective(w);
    for (int it = 0; it < iterations; ++it) {
        Vector r = yc;
        for (Index m = 0; m < M; ++m) r -= P * (V[m] * z[m]);
        for (Index m = 0; m < M; ++m) {
            const Vector v = z[m] + t * (V[m].transpose() * r) / s2;
            const double nv = v.norm();
            const double rad = nv > 0.0 ? radial_prox(nv, t * C) : 0.0;
            w[m] = nv > 0.0 ? Vector(v * (rad / nv)) : Vector::Zero(n);
        }
        const double f = objective(w);
        if (f > f_prev) {
            // Restart the momentum when the objective goes up.
            tk = 1.0;
            z = w_prev;
            w = w_prev;
            continue;
        }
        const double tk1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        for (Index m = 0; m < M; ++m) z[m] = w[m] + ((tk - 1.0) / tk1) * (w[m] - w_prev[m]);
        w_prev = w;
        tk = tk1;
        f_prev = f;
    }
    return {objective(w_prev), w_prev};
}

/// Bisection for r - v + t psi'(r) = 0 on [0, v], psi increasing-derivative and psi'(0) >= 0.
inline double radial_bisect(double v, double t, const std::function<double(double)>& dpsi) {
    if (v - t * dpsi(0.0) <= 0.0) return 0.0;
    double lo = 0.0, hi = v;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid - v + t * dpsi(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace support
