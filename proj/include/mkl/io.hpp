#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mkl/bayes.hpp"
#include "mkl/conjcheck.hpp"
#include "mkl/gram.hpp"
#include "mkl/regfam.hpp"
#include "mkl/solver.hpp"

namespace mkl {

using json = nlohmann::json;

/// Features, optional task column and optional label column read from CSV.
struct Dataset {
    DataMatrix data;
    Vector y;
    bool has_labels = false;
    std::vector<std::string> feature_names;
};

/// With a header, columns named `y` and `task` are the label and task columns.
/// Without one, the last column is the label when `labels_last` is set.
Dataset read_dataset(std::istream& in, bool header = true, bool labels_last = true);
Dataset read_dataset(const std::filesystem::path& path, bool header = true, bool labels_last = true);

Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(std::ostream& out, const Matrix& M);
void write_vector_csv(std::ostream& out, const Vector& v, const std::string& column);

/// FNV-1a over the bytes of the features and task labels.
std::uint64_t fingerprint(const DataMatrix& data);
std::uint64_t fingerprint(const KernelBank& bank);

/// {"kernels": [{"path": "...", "name": "..."}, ...]}; paths are relative to the manifest.
std::vector<Matrix> read_gram_manifest(const std::filesystem::path& path, std::vector<std::string>* names = nullptr);

json to_json(const KernelDescriptor& d);
KernelDescriptor descriptor_from_json(const json& j);

json to_json(const RegularizerSpec& s);
RegularizerSpec regularizer_from_json(const json& j);

json to_json(const LossSpec& l);
LossSpec loss_from_json(const json& j);

json to_json(const MklModel& m);
MklModel model_from_json(const json& j);

void save_model(const MklModel& m, const std::filesystem::path& path);
MklModel load_model(const std::filesystem::path& path);

void write_trace_csv(std::ostream& out, const FitTrace& trace);
void write_bayes_trace_csv(std::ostream& out, const BayesState& state);

json to_json(const ConjugateReport& r);
json suite_to_json(const std::vector<ConjugateReport>& reports);

/// Parses JSON text, turning syntax errors into ValidationError with line and column.
json parse_json(const std::string& text, const std::string& origin);
json read_json_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace mkl
