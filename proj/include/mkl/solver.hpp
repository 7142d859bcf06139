#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mkl/gram.hpp"
#include "mkl/regfam.hpp"

namespace mkl {

enum class LossKind { Squared, Logistic };

/// Squared: (y - z)^2 / (2 sigma2). Logistic: log(1 + exp(-y z)) with y in {-1, +1}.
struct LossSpec {
    LossKind kind = LossKind::Squared;
    double noise_variance = 1.0;

    void validate() const;
    double value(double y, double z) const;
    double sum(const Vector& y, const Vector& scores) const;
    bool operator==(const LossSpec&) const = default;
};

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct FStepOptions {
    bool fit_bias = true;
    double prune_threshold = 1e-10;
    double newton_tol = 1e-8;
    int newton_max_iter = 100;
};

struct FStepResult {
    Vector alpha;
    double bias = 0.0;
    /// x_m = d_m^2 alpha' K_m alpha, the squared RKHS norm of f_m.
    Vector block_norms;
    Vector fitted;
    int inner_iterations = 0;
};

/// Learning with the kernel combination held fixed at d.
FStepResult f_step(const KernelBank& bank, const Vector& d, const LossSpec& loss, double C, const Vector& y,
                   const FStepOptions& opts = {});

/// b + K alpha, accumulated in a fixed order so train and predict paths agree bitwise.
Vector kernel_expansion(const Matrix& K, const Vector& alpha, double bias);

struct FitOptions {
    int max_outer = 200;
    double weight_tol = 1e-6;
    double monotone_slack = 1e-9;
    /// Overrides the 1/M (or all-ones for UniformWeight) starting point.
    std::optional<Vector> initial_weights;
    FStepOptions fstep;
};

struct TraceRow {
    int iteration = 0;
    double objective = 0.0;
    Vector weights;
    int inner_iterations = 0;
    double max_weight_change = 0.0;
};

struct FitTrace {
    std::vector<TraceRow> rows;
    bool converged = false;
    int clamped_weights = 0;
};

struct MklModel {
    Vector alpha;
    double bias = 0.0;
    Vector weights;
    /// Absent for empirical-Bayes models.
    std::optional<RegularizerSpec> spec;
    LossSpec loss;
    std::vector<KernelDescriptor> kernels;
    std::string method = "alternating";
    std::uint64_t data_fingerprint = 0;
    Vector in_sample_scores;
    std::map<std::string, double> metadata;
};

struct FitResult {
    MklModel model;
    FitTrace trace;
};

/// Alternates f_step and the closed-form weight update until max |delta d| <= weight_tol.
FitResult fit(const KernelBank& bank, const Vector& y, RegularizerSpec spec, const LossSpec& loss,
              const FitOptions& opts = {});

/// sum_i loss(y_i, z_i) + C/2 (sum_m ||f_m||^2 / d_m + h(d)).
double kernel_weight_objective(const KernelBank& bank, const Vector& y, const RegularizerSpec& spec,
                               const LossSpec& loss, const Vector& alpha, double bias, const Vector& d);

/// Per-kernel squared norms d_m^2 alpha' K_m alpha of a trained model.
Vector block_norms(const MklModel& model, const KernelBank& bank);

/// Column m holds f_m = d_m K_m alpha at the training points.
Matrix component_functions(const MklModel& model, const KernelBank& bank);

/// sum_i loss(y_i, score_i) + C g(x) on the block-norm side.
double block_norm_objective(const MklModel& model, const KernelBank& bank, const Vector& y);

/// Scores from cross-Grams (test rows by training columns), one per kernel.
Vector predict(const MklModel& model, const std::vector<Matrix>& cross_grams);

/// Scores computed from feature data using the model's kernel descriptors.
Vector predict(const MklModel& model, const DataMatrix& train, const DataMatrix& test);

} // namespace mkl
