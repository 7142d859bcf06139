#include "mkl/bayes.hpp"

#include <algorithm>
#include <cmath>

namespace mkl {

namespace {

// Square-root-free Cholesky (LDL').
Eigen::LDLT<Matrix> factor(const KernelBank& bank, const Vector& d, double noise_variance) {
    require(noise_variance > 0.0, "noise variance must be positive");
    Eigen::LDLT<Matrix> ldlt(combine(bank, d, noise_variance).K);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        throw NumericalError("Cholesky of the marginal covariance failed");
    return ldlt;
}

double log_det(const Eigen::LDLT<Matrix>& ldlt) { return ldlt.vectorD().array().log().sum(); }

} // namespace

double neg_log_marginal(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& y) {
    require(y.size() == bank.num_samples(), "label length mismatch");
    const auto ldlt = factor(bank, d, noise_variance);
    return 0.5 * y.dot(ldlt.solve(y)) + 0.5 * log_det(ldlt);
}

double bayes_h_value(const KernelBank& bank, const Vector& d, double noise_variance) {
    return log_det(factor(bank, d, noise_variance));
}

BayesFStep mackay_f_step(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& y) {
    require(y.size() == bank.num_samples(), "label length mismatch");
    const auto ldlt = factor(bank, d, noise_variance);
    BayesFStep out;
    out.beta = ldlt.solve(y);
    const Index M = bank.num_kernels();
    out.parts = Matrix::Zero(bank.num_samples(), M);
    out.block_norms = Vector::Zero(M);
    for (Index m = 0; m < M; ++m) {
        if (!(d(m) > 0.0)) continue;
        const Vector Kb = bank.gram(m) * out.beta;
        out.parts.col(m) = d(m) * Kb;
        out.block_norms(m) = std::max(0.0, d(m) * d(m) * out.beta.dot(Kb));
    }
    return out;
}

Vector mackay_d_step(const KernelBank& bank, const Vector& d, double noise_variance, const Vector& x) {
    require(x.size() == bank.num_kernels() && d.size() == bank.num_kernels(), "weight length mismatch");
    const auto ldlt = factor(bank, d, noise_variance);
    Vector out = Vector::Zero(d.size());
    for (Index m = 0; m < d.size(); ++m) {
        require(d(m) >= 0.0 && x(m) >= 0.0, "mackay_d_step: weights and norms must be nonnegative");
        if (d(m) == 0.0 || x(m) == 0.0) continue;
        const double den = d(m) * ldlt.solve(bank.gram(m)).trace();
        if (den > 0.0) out(m) = x(m) / den;
    }
    return out;
}

double bayes_bracket(const Vector& y, const Matrix& parts, const Vector& norms, const Vector& d,
                     double noise_variance) {
    const Vector r = y - parts.rowwise().sum();
    double s = 0.5 * r.squaredNorm() / noise_variance;
    for (Index m = 0; m < d.size(); ++m) {
        if (d(m) > 0.0)
            s += 0.5 * norms(m) / d(m);
        else if (norms(m) > 0.0)
            return kInf;
    }
    return s;
}

BayesFit fit_bayes(const KernelBank& bank, const Vector& y, double noise_variance, const BayesOptions& opts) {
    require(noise_variance > 0.0, "noise variance must be positive");
    require(y.size() == bank.num_samples(), "label length mismatch");
    const Index M = bank.num_kernels();
    Vector d = Vector::Constant(M, 1.0 / static_cast<double>(M));
    if (opts.initial_weights) {
        require(opts.initial_weights->size() == M, "initial weight length mismatch");
        d = *opts.initial_weights;
    }

    BayesState st;
    st.noise_variance = noise_variance;
    double nll = neg_log_marginal(bank, d, noise_variance, y);
    st.nll_trace.push_back(nll);
    st.weight_trace.push_back(d);
    double best_nll = nll;
    Vector best_d = d;
    int rising = 0;

    for (int it = 1; it <= opts.max_iter; ++it) {
        const BayesFStep fs = mackay_f_step(bank, d, noise_variance, y);
        const Vector d_new = mackay_d_step(bank, d, noise_variance, fs.block_norms);
        const double change = (d_new - d).cwiseAbs().maxCoeff() / std::max(1.0, d.cwiseAbs().maxCoeff());
        d = d_new;
        const double nll_new = neg_log_marginal(bank, d, noise_variance, y);
        if (!std::isfinite(nll_new)) throw NumericalError("fit_bayes: NLL is not finite");
        st.nll_trace.push_back(nll_new);
        st.weight_trace.push_back(d);
        st.iterations = it;
        rising = nll_new > nll + opts.increase_slack ? rising + 1 : 0;
        nll = nll_new;
        if (nll < best_nll) {
            best_nll = nll;
            best_d = d;
        }
        if (change <= opts.tol) {
            st.converged = true;
            break;
        }
        if (rising >= opts.increase_patience) {
            st.diverged = true;
            d = best_d;
            break;
        }
    }

    const BayesFStep fs = mackay_f_step(bank, d, noise_variance, y);
    st.weights = d;
    st.parts = fs.parts;

    BayesFit out;
    out.state = st;
    MklModel& model = out.model;
    model.alpha = fs.beta;
    model.bias = 0.0;
    model.weights = d;
    model.loss = LossSpec{LossKind::Squared, noise_variance};
    model.kernels = bank.descriptors();
    model.method = "empirical_bayes";
    model.in_sample_scores = kernel_expansion(weighted_gram(bank, d), fs.beta, 0.0);
    model.metadata["final_nll"] = neg_log_marginal(bank, d, noise_variance, y);
    return out;
}

} // namespace mkl
