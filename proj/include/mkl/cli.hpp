#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mkl/io.hpp"

namespace mkl {

struct ExperimentConfig {
    std::filesystem::path data;
    bool header = true;
    /// Precomputed Grams; when set, `data` only supplies labels and task ids.
    std::filesystem::path gram_manifest;
    std::vector<KernelDescriptor> kernels;
    std::vector<std::vector<Index>> overlap_groups;
    std::optional<KernelDescriptor> multitask_base;
    int multitask_tasks = 0;

    RegularizerSpec regularizer;
    LossSpec loss;
    std::vector<double> C_grid;
    std::vector<double> lambda_grid;
    /// Train runs cross-validated selection over the grids.
    bool select = false;
    int folds = 4;
    int repeats = 2;
    std::uint64_t seed = 1;

    int max_outer = 200;
    double weight_tol = 1e-6;
    bool fit_bias = true;
    int bayes_max_iter = 500;
    double bayes_tol = 1e-6;

    void validate() const;
};

std::vector<double> default_C_grid();
std::vector<double> default_lambda_grid();

/// `base` resolves relative paths inside the config.
ExperimentConfig parse_config(const json& j, const std::filesystem::path& base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct Problem {
    Dataset dataset;
    KernelBank bank;
    std::uint64_t fingerprint = 0;
};

Problem load_problem(const ExperimentConfig& cfg);

/// Fold index per sample, one vector per repeat. Classes are spread evenly over
/// folds when `stratified` is set.
std::vector<std::vector<int>> cv_assignments(const Vector& y, int folds, int repeats, std::uint64_t seed,
                                             bool stratified);

struct CvCell {
    double C = 0.0;
    double lambda = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> fold_scores;
};

struct CvResult {
    std::string metric;  // "rmse" or "accuracy"
    bool higher_is_better = false;
    std::vector<CvCell> cells;
    std::size_t best = 0;
};

/// Cross-validates every (C, lambda) cell; lambda only varies for ElasticNet.
CvResult cross_validate(const KernelBank& bank, const Vector& y, const ExperimentConfig& cfg,
                        const std::vector<double>& C_grid, const std::vector<double>& lambda_grid);

void write_cv_table(std::ostream& out, const CvResult& r);

/// Per-kernel weights with ranks, nonzero count and group sums keyed on descriptor fields
/// ("family", "gamma", "columns", "task", "normalization").
json weight_report(const MklModel& model, const std::vector<std::string>& group_keys);

/// Runs a subcommand. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mkl
