#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkl/error.hpp"

namespace mkl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Kernel functions. These are written as explicit scalar loops so that
// k(q, r) and k(r, q) are bitwise identical and a cross-Gram evaluated on the
// training points reproduces the training Gram exactly.
// ---------------------------------------------------------------------------

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar linear_kernel(const Eigen::MatrixBase<DerivedA>& q,
                                        const Eigen::MatrixBase<DerivedB>& r) {
    using Scalar = typename DerivedA::Scalar;
    require(q.size() == r.size(), "linear_kernel: length mismatch");
    Scalar s(0);
    for (Index j = 0; j < q.size(); ++j) s += q(j) * r(j);
    return s;
}

/// exp(-|q - r|^2 / (2 gamma^2))
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar gaussian_kernel(const Eigen::MatrixBase<DerivedA>& q,
                                          const Eigen::MatrixBase<DerivedB>& r,
                                          typename DerivedA::Scalar gamma) {
    using Scalar = typename DerivedA::Scalar;
    require(q.size() == r.size(), "gaussian_kernel: length mismatch");
    require(gamma > Scalar(0), "gaussian_kernel: gamma must be positive");
    Scalar s(0);
    for (Index j = 0; j < q.size(); ++j) {
        const Scalar diff = q(j) - r(j);
        s += diff * diff;
    }
    using std::exp;
    return exp(-s / (Scalar(2) * gamma * gamma));
}

/// exp(-gamma^2 * sum_j (q_j - r_j)^2 / (q_j + r_j)) on nonnegative histograms.
/// Bins where both entries are zero contribute nothing.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar chi2_kernel(const Eigen::MatrixBase<DerivedA>& q,
                                      const Eigen::MatrixBase<DerivedB>& r,
                                      typename DerivedA::Scalar gamma) {
    using Scalar = typename DerivedA::Scalar;
    require(q.size() == r.size(), "chi2_kernel: length mismatch");
    require(gamma > Scalar(0), "chi2_kernel: gamma must be positive");
    Scalar s(0);
    for (Index j = 0; j < q.size(); ++j) {
        require(q(j) >= Scalar(0) && r(j) >= Scalar(0), "chi2_kernel: negative histogram entry");
        const Scalar den = q(j) + r(j);
        if (den == Scalar(0)) continue;
        const Scalar diff = q(j) - r(j);
        s += diff * diff / den;
    }
    using std::exp;
    return exp(-gamma * gamma * s);
}

// ---------------------------------------------------------------------------
// Data and kernel descriptors
// ---------------------------------------------------------------------------

enum class KernelFamily { Linear, Gaussian, Chi2, Precomputed };
enum class Normalization { None, Trace, Diagonal };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);
std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct KernelDescriptor {
    KernelFamily family = KernelFamily::Linear;
    double gamma = 1.0;
    /// Feature subset (0-based). Empty selects every column.
    std::vector<Index> columns;
    /// When positive, entries are kept only for pairs whose task labels both equal it.
    int task = 0;
    Normalization normalization = Normalization::None;
    /// Divisor fixed by trace normalization at build time; reused for cross-Grams.
    double scale = 1.0;
    /// Free-form label; the file path for precomputed kernels.
    std::string name;

    std::string label() const;
};

/// N samples by D features, with optional 1-based task labels.
struct DataMatrix {
    Matrix X;
    std::vector<int> tasks;

    Index rows() const { return X.rows(); }
    Index cols() const { return X.cols(); }
    bool has_tasks() const { return !tasks.empty(); }

    void validate() const;
    DataMatrix subset(const std::vector<Index>& rows) const;
};

struct GramMatrix {
    Matrix K;
    KernelDescriptor source;

    Index size() const { return K.rows(); }
    bool is_symmetric() const;
    /// Smallest eigenvalue >= -tol * largest eigenvalue.
    bool is_psd(double tol = 1e-8) const;
};

/// M Gram matrices over the same N samples.
class KernelBank {
public:
    KernelBank() = default;
    explicit KernelBank(std::vector<GramMatrix> grams);

    Index num_kernels() const { return static_cast<Index>(grams_.size()); }
    Index num_samples() const { return grams_.empty() ? 0 : grams_.front().size(); }
    bool empty() const { return grams_.empty(); }

    const GramMatrix& operator[](Index m) const { return grams_[static_cast<std::size_t>(m)]; }
    const Matrix& gram(Index m) const { return (*this)[m].K; }
    auto begin() const { return grams_.begin(); }
    auto end() const { return grams_.end(); }

    std::vector<KernelDescriptor> descriptors() const;
    /// Restrict every Gram to the given rows and columns.
    KernelBank slice(const std::vector<Index>& rows) const;

private:
    std::vector<GramMatrix> grams_;
};

struct CombinedKernel {
    Matrix K;
    Vector weights;
    double noise_variance = 0.0;
};

double evaluate_kernel(const KernelDescriptor& desc, const Eigen::Ref<const Vector>& a,
                       const Eigen::Ref<const Vector>& b);

GramMatrix build_gram(const DataMatrix& data, KernelDescriptor desc);

/// Rows index `test`, columns index `train`; same masking and normalization as build_gram.
Matrix cross_gram(const DataMatrix& test, const DataMatrix& train, const KernelDescriptor& desc);

KernelBank build_bank(const DataMatrix& data, const std::vector<KernelDescriptor>& descs);

/// Linear kernels restricted to (possibly overlapping) column groups.
KernelBank build_overlap_linear_kernels(const DataMatrix& data,
                                        const std::vector<std::vector<Index>>& groups);

/// n task-masked copies of the base kernel followed by the unmasked base kernel.
KernelBank build_multitask_bank(const KernelDescriptor& base, const DataMatrix& data, int num_tasks);

/// acc += w * K, element by element in a fixed order.
void add_scaled(Matrix& acc, double w, const Matrix& K);

/// sum_m d_m K_m over kernels with d_m > 0.
Matrix weighted_gram(const KernelBank& bank, const Vector& d);

/// sigma2 * I + sum_m d_m K_m
CombinedKernel combine(const KernelBank& bank, const Vector& d, double noise_variance);

} // namespace mkl
