#include "mkl/gram.hpp"

#include <algorithm>
#include <sstream>

namespace mkl {

std::string to_string(KernelFamily f) {
    switch (f) {
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Chi2: return "chi2";
    case KernelFamily::Precomputed: return "precomputed";
    }
    return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& s) {
    if (s == "linear") return KernelFamily::Linear;
    if (s == "gaussian" || s == "rbf") return KernelFamily::Gaussian;
    if (s == "chi2") return KernelFamily::Chi2;
    if (s == "precomputed") return KernelFamily::Precomputed;
    throw ValidationError("unknown kernel family '" + s + "'");
}

std::string to_string(Normalization n) {
    switch (n) {
    case Normalization::None: return "none";
    case Normalization::Trace: return "trace";
    case Normalization::Diagonal: return "diagonal";
    }
    return "unknown";
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "none") return Normalization::None;
    if (s == "trace") return Normalization::Trace;
    if (s == "diagonal") return Normalization::Diagonal;
    throw ValidationError("unknown normalization '" + s + "'");
}

std::string KernelDescriptor::label() const {
    if (!name.empty()) return name;
    std::ostringstream os;
    os << to_string(family);
    if (family == KernelFamily::Gaussian || family == KernelFamily::Chi2) os << "(gamma=" << gamma << ")";
    if (!columns.empty()) {
        os << "[";
        for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
        os << "]";
    }
    if (task > 0) os << "{task=" << task << "}";
    return os.str();
}

void DataMatrix::validate() const {
    require(X.allFinite(), "data matrix contains non-finite entries");
    require(tasks.empty() || static_cast<Index>(tasks.size()) == X.rows(),
            "task label count does not match the number of rows");
}

DataMatrix DataMatrix::subset(const std::vector<Index>& rows) const {
    DataMatrix out;
    out.X.resize(static_cast<Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.X.row(static_cast<Index>(i)) = X.row(rows[i]);
    if (has_tasks()) {
        out.tasks.reserve(rows.size());
        for (Index r : rows) out.tasks.push_back(tasks[static_cast<std::size_t>(r)]);
    }
    return out;
}

bool GramMatrix::is_symmetric() const {
    if (K.rows() != K.cols()) return false;
    for (Index j = 0; j < K.cols(); ++j)
        for (Index i = j + 1; i < K.rows(); ++i)
            if (std::abs(K(i, j) - K(j, i)) > 1e-12 * std::max(1.0, std::abs(K(i, j)))) return false;
    return true;
}

bool GramMatrix::is_psd(double tol) const {
    if (K.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    return lmin >= -tol * std::max(lmax, 0.0);
}

KernelBank::KernelBank(std::vector<GramMatrix> grams) : grams_(std::move(grams)) {
    require(!grams_.empty(), "kernel bank must contain at least one kernel");
    const Index n = grams_.front().size();
    for (const auto& g : grams_) {
        require(g.K.rows() == g.K.cols(), "Gram matrix '" + g.source.label() + "' is not square");
        require(g.size() == n, "Gram matrix '" + g.source.label() + "' has inconsistent size");
    }
}

std::vector<KernelDescriptor> KernelBank::descriptors() const {
    std::vector<KernelDescriptor> out;
    out.reserve(grams_.size());
    for (const auto& g : grams_) out.push_back(g.source);
    return out;
}

KernelBank KernelBank::slice(const std::vector<Index>& rows) const {
    std::vector<GramMatrix> out;
    out.reserve(grams_.size());
    const auto idx = Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(rows.data(), static_cast<Index>(rows.size()));
    for (const auto& g : grams_) out.push_back({g.K(idx, idx), g.source});
    return KernelBank(std::move(out));
}

namespace {

Vector select_columns(const DataMatrix& data, Index i, const std::vector<Index>& cols) {
    if (cols.empty()) return data.X.row(i).transpose();
    Vector v(static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) v(static_cast<Index>(k)) = data.X(i, cols[k]);
    return v;
}

void check_descriptor(const DataMatrix& data, const KernelDescriptor& desc) {
    require(desc.family != KernelFamily::Precomputed,
            "precomputed kernel '" + desc.label() + "' cannot be evaluated from features");
    for (Index c : desc.columns)
        require(c >= 0 && c < data.cols(), "kernel '" + desc.label() + "': column index out of range");
    if (desc.family == KernelFamily::Gaussian || desc.family == KernelFamily::Chi2)
        require(desc.gamma > 0.0, "kernel '" + desc.label() + "': gamma must be positive");
    if (desc.task > 0)
        require(data.has_tasks(), "kernel '" + desc.label() + "' needs task labels");
    if (desc.family == KernelFamily::Chi2) {
        if (desc.columns.empty()) {
            require((data.X.array() >= 0.0).all(), "chi2 kernel requires nonnegative features");
        } else {
            for (Index c : desc.columns)
                require((data.X.col(c).array() >= 0.0).all(), "chi2 kernel requires nonnegative features");
        }
    }
}

bool task_match(const DataMatrix& a, Index i, const DataMatrix& b, Index j, int task) {
    if (task <= 0) return true;
    return a.tasks[static_cast<std::size_t>(i)] == task && b.tasks[static_cast<std::size_t>(j)] == task;
}

double raw_entry(const KernelDescriptor& desc, const DataMatrix& a, Index i, const DataMatrix& b, Index j) {
    if (!task_match(a, i, b, j, desc.task)) return 0.0;
    return evaluate_kernel(desc, select_columns(a, i, desc.columns), select_columns(b, j, desc.columns));
}

} // namespace

double evaluate_kernel(const KernelDescriptor& desc, const Eigen::Ref<const Vector>& a,
                       const Eigen::Ref<const Vector>& b) {
    switch (desc.family) {
    case KernelFamily::Linear: return linear_kernel(a, b);
    case KernelFamily::Gaussian: return gaussian_kernel(a, b, desc.gamma);
    case KernelFamily::Chi2: return chi2_kernel(a, b, desc.gamma);
    case KernelFamily::Precomputed: break;
    }
    throw ValidationError("precomputed kernels have no feature-space evaluation");
}

GramMatrix build_gram(const DataMatrix& data, KernelDescriptor desc) {
    data.validate();
    check_descriptor(data, desc);
    const Index n = data.rows();
    Matrix K(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = j; i < n; ++i) {
            const double v = raw_entry(desc, data, i, data, j);
            K(i, j) = v;
            K(j, i) = v;
        }

    switch (desc.normalization) {
    case Normalization::None: desc.scale = 1.0; break;
    case Normalization::Trace: {
        const double mean_diag = n > 0 ? K.trace() / static_cast<double>(n) : 0.0;
        desc.scale = mean_diag > 0.0 ? mean_diag : 1.0;
        K /= desc.scale;
        break;
    }
    case Normalization::Diagonal: {
        const Vector diag = K.diagonal();
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                const double den = std::sqrt(diag(i) * diag(j));
                K(i, j) = den > 0.0 ? K(i, j) / den : 0.0;
            }
        break;
    }
    }
    return {std::move(K), std::move(desc)};
}

Matrix cross_gram(const DataMatrix& test, const DataMatrix& train, const KernelDescriptor& desc) {
    test.validate();
    train.validate();
    require(test.cols() == train.cols(), "cross_gram: feature count mismatch");
    check_descriptor(train, desc);
    check_descriptor(test, desc);
    Matrix K(test.rows(), train.rows());
    for (Index j = 0; j < train.rows(); ++j)
        for (Index i = 0; i < test.rows(); ++i) K(i, j) = raw_entry(desc, test, i, train, j);

    switch (desc.normalization) {
    case Normalization::None: break;
    case Normalization::Trace: K /= desc.scale; break;
    case Normalization::Diagonal: {
        Vector self_test(test.rows()), self_train(train.rows());
        for (Index i = 0; i < test.rows(); ++i) self_test(i) = raw_entry(desc, test, i, test, i);
        for (Index j = 0; j < train.rows(); ++j) self_train(j) = raw_entry(desc, train, j, train, j);
        for (Index j = 0; j < train.rows(); ++j)
            for (Index i = 0; i < test.rows(); ++i) {
                const double den = std::sqrt(self_test(i) * self_train(j));
                K(i, j) = den > 0.0 ? K(i, j) / den : 0.0;
            }
        break;
    }
    }
    return K;
}

KernelBank build_bank(const DataMatrix& data, const std::vector<KernelDescriptor>& descs) {
    std::vector<GramMatrix> grams;
    grams.reserve(descs.size());
    for (const auto& d : descs) grams.push_back(build_gram(data, d));
    return KernelBank(std::move(grams));
}

KernelBank build_overlap_linear_kernels(const DataMatrix& data,
                                        const std::vector<std::vector<Index>>& groups) {
    require(!groups.empty(), "at least one group is required");
    std::vector<KernelDescriptor> descs;
    for (const auto& g : groups) {
        require(!g.empty(), "overlap group must be nonempty");
        for (Index c : g) require(c >= 0 && c < data.cols(), "overlap group index out of range");
        KernelDescriptor d;
        d.family = KernelFamily::Linear;
        d.columns = g;
        descs.push_back(std::move(d));
    }
    return build_bank(data, descs);
}

KernelBank build_multitask_bank(const KernelDescriptor& base, const DataMatrix& data, int num_tasks) {
    require(num_tasks >= 1, "multitask bank needs at least one task");
    require(data.has_tasks(), "multitask bank needs task labels");
    for (int t : data.tasks)
        require(t >= 1 && t <= num_tasks, "task label " + std::to_string(t) + " out of range 1.." +
                                              std::to_string(num_tasks));
    std::vector<KernelDescriptor> descs;
    for (int m = 1; m <= num_tasks; ++m) {
        KernelDescriptor d = base;
        d.task = m;
        descs.push_back(std::move(d));
    }
    KernelDescriptor shared = base;
    shared.task = 0;
    descs.push_back(std::move(shared));
    return build_bank(data, descs);
}

void add_scaled(Matrix& acc, double w, const Matrix& K) {
    require(acc.rows() == K.rows() && acc.cols() == K.cols(), "add_scaled: shape mismatch");
    for (Index j = 0; j < K.cols(); ++j)
        for (Index i = 0; i < K.rows(); ++i) acc(i, j) += w * K(i, j);
}

Matrix weighted_gram(const KernelBank& bank, const Vector& d) {
    require(d.size() == bank.num_kernels(), "weight vector length does not match kernel count");
    const Index n = bank.num_samples();
    Matrix K = Matrix::Zero(n, n);
    for (Index m = 0; m < bank.num_kernels(); ++m) {
        require(d(m) >= 0.0, "kernel weights must be nonnegative");
        if (d(m) > 0.0) add_scaled(K, d(m), bank.gram(m));
    }
    return K;
}

CombinedKernel combine(const KernelBank& bank, const Vector& d, double noise_variance) {
    require(noise_variance >= 0.0, "noise variance must be nonnegative");
    CombinedKernel out;
    out.K = weighted_gram(bank, d);
    out.K.diagonal().array() += noise_variance;
    out.weights = d;
    out.noise_variance = noise_variance;
    return out;
}

} // namespace mkl
