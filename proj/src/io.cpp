#include "mkl/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mkl {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ValidationError(where + ": '" + s + "' is not a number");
    }
    if (pos != s.size()) throw ValidationError(where + ": '" + s + "' is not a number");
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    return v;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    return in;
}

json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw ValidationError("expected a number, got " + j.dump());
}

json vec(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

Vector vec_from(const json& j, const std::string& key) {
    if (!j.is_array()) throw ValidationError("'" + key + "' must be an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_from(j[i]);
    return v;
}

const json& field(const json& j, const std::string& key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError("missing field '" + key + "'");
    return j.at(key);
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
}

} // namespace

Dataset read_dataset(std::istream& in, bool header, bool labels_last) {
    Dataset ds;
    std::string line;
    int line_no = 0;
    int label_col = -1, task_col = -1;
    std::size_t width = 0;
    std::vector<std::vector<double>> rows;

    if (header) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!trim(line).empty()) break;
        }
        const auto names = split_csv(line);
        require(!names.empty() && !trim(line).empty(), "CSV header is empty");
        width = names.size();
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (names[c] == "y") {
                require(label_col < 0, "CSV header names 'y' twice");
                label_col = static_cast<int>(c);
            } else if (names[c] == "task") {
                require(task_col < 0, "CSV header names 'task' twice");
                task_col = static_cast<int>(c);
            } else {
                ds.feature_names.push_back(names[c]);
            }
        }
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line)[0] == '#') continue;
        const auto cells = split_csv(line);
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                  " columns, found " + std::to_string(cells.size()));
        std::vector<double> r;
        r.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            r.push_back(parse_number(cells[c], "line " + std::to_string(line_no) + ", column " + std::to_string(c + 1)));
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), "CSV contains no data rows");
    if (!header && labels_last) label_col = static_cast<int>(width) - 1;

    const Index n = static_cast<Index>(rows.size());
    Index nf = static_cast<Index>(width) - (label_col >= 0) - (task_col >= 0);
    ds.data.X.resize(n, nf);
    ds.has_labels = label_col >= 0;
    if (ds.has_labels) ds.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        Index f = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (static_cast<int>(c) == label_col) {
                ds.y(i) = r[c];
            } else if (static_cast<int>(c) == task_col) {
                const double t = r[c];
                require(t >= 1.0 && t == std::floor(t), "task labels must be positive integers");
                ds.data.tasks.push_back(static_cast<int>(t));
            } else {
                ds.data.X(i, f++) = r[c];
            }
        }
    }
    if (!header)
        for (Index f = 0; f < nf; ++f) ds.feature_names.push_back("x" + std::to_string(f));
    return ds;
}

Dataset read_dataset(const fs::path& path, bool header, bool labels_last) {
    auto in = open_in(path);
    try {
        return read_dataset(in, header, labels_last);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

Matrix read_matrix_csv(const fs::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line)[0] == '#') continue;
        const auto cells = split_csv(line);
        std::vector<double> r;
        for (std::size_t c = 0; c < cells.size(); ++c)
            r.push_back(parse_number(cells[c], path.string() + ":" + std::to_string(line_no)));
        if (!rows.empty() && r.size() != rows.front().size())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), path.string() + ": empty matrix");
    Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return M;
}

void write_matrix_csv(std::ostream& out, const Matrix& M) {
    out << std::setprecision(17);
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) out << (j ? "," : "") << M(i, j);
        out << "\n";
    }
}

void write_vector_csv(std::ostream& out, const Vector& v, const std::string& column) {
    out << column << "\n" << std::setprecision(17);
    for (Index i = 0; i < v.size(); ++i) out << v(i) << "\n";
}

std::uint64_t fingerprint(const DataMatrix& data) {
    std::uint64_t h = 14695981039346656037ULL;
    const std::int64_t dims[2] = {static_cast<std::int64_t>(data.rows()), static_cast<std::int64_t>(data.cols())};
    hash_bytes(h, dims, sizeof dims);
    for (Index i = 0; i < data.rows(); ++i)
        for (Index j = 0; j < data.cols(); ++j) {
            const double v = data.X(i, j);
            hash_bytes(h, &v, sizeof v);
        }
    for (int t : data.tasks) hash_bytes(h, &t, sizeof t);
    return h;
}

std::uint64_t fingerprint(const KernelBank& bank) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& g : bank) {
        const std::int64_t n = g.size();
        hash_bytes(h, &n, sizeof n);
        hash_bytes(h, g.K.data(), sizeof(double) * static_cast<std::size_t>(g.K.size()));
    }
    return h;
}

std::vector<Matrix> read_gram_manifest(const fs::path& path, std::vector<std::string>* names) {
    const json j = read_json_file(path);
    const json& ks = field(j, "kernels");
    require(ks.is_array() && !ks.empty(), path.string() + ": 'kernels' must be a nonempty array");
    std::vector<Matrix> out;
    for (const auto& k : ks) {
        const fs::path p = path.parent_path() / field(k, "path").get<std::string>();
        out.push_back(read_matrix_csv(p));
        if (names) names->push_back(k.value("name", p.filename().string()));
    }
    return out;
}

json to_json(const KernelDescriptor& d) {
    json j;
    j["family"] = to_string(d.family);
    j["gamma"] = d.gamma;
    j["columns"] = d.columns;
    j["task"] = d.task;
    j["normalization"] = to_string(d.normalization);
    j["scale"] = d.scale;
    j["name"] = d.name;
    return j;
}

KernelDescriptor descriptor_from_json(const json& j) {
    KernelDescriptor d;
    d.family = kernel_family_from_string(field(j, "family").get<std::string>());
    d.gamma = j.value("gamma", 1.0);
    if (j.contains("columns")) d.columns = j.at("columns").get<std::vector<Index>>();
    d.task = j.value("task", 0);
    d.normalization = normalization_from_string(j.value("normalization", std::string("none")));
    d.scale = j.value("scale", 1.0);
    d.name = j.value("name", std::string());
    return d;
}

json to_json(const RegularizerSpec& s) {
    json j;
    j["family"] = to_string(s.family);
    j["param"] = s.param;
    j["side"] = to_string(s.side);
    j["C"] = s.C;
    return j;
}

RegularizerSpec regularizer_from_json(const json& j) {
    RegularizerSpec s;
    s.family = family_from_string(field(j, "family").get<std::string>());
    const std::string pn = param_name(s.family);
    if (j.contains("param"))
        s.param = j.at("param").get<double>();
    else if (!pn.empty() && j.contains(pn))
        s.param = j.at(pn).get<double>();
    if (j.contains("side")) s.side = side_from_string(j.at("side").get<std::string>());
    s.C = j.value("C", 1.0);
    s.validate();
    return s;
}

json to_json(const LossSpec& l) {
    json j;
    j["kind"] = to_string(l.kind);
    if (l.kind == LossKind::Squared) j["noise_variance"] = l.noise_variance;
    return j;
}

LossSpec loss_from_json(const json& j) {
    LossSpec l;
    l.kind = loss_kind_from_string(field(j, "kind").get<std::string>());
    l.noise_variance = j.value("noise_variance", 1.0);
    l.validate();
    return l;
}

json to_json(const MklModel& m) {
    json j;
    j["method"] = m.method;
    j["alpha"] = vec(m.alpha);
    j["bias"] = m.bias;
    j["weights"] = vec(m.weights);
    j["spec"] = m.spec ? to_json(*m.spec) : json(nullptr);
    j["loss"] = to_json(m.loss);
    json ks = json::array();
    for (const auto& k : m.kernels) ks.push_back(to_json(k));
    j["kernels"] = ks;
    std::ostringstream fp;
    fp << std::hex << std::setw(16) << std::setfill('0') << m.data_fingerprint;
    j["data_fingerprint"] = fp.str();
    j["in_sample_scores"] = vec(m.in_sample_scores);
    json meta = json::object();
    for (const auto& [k, v] : m.metadata) meta[k] = number(v);
    j["metadata"] = meta;
    return j;
}

MklModel model_from_json(const json& j) {
    try {
        MklModel m;
        m.method = j.value("method", std::string("alternating"));
        m.alpha = vec_from(field(j, "alpha"), "alpha");
        m.bias = field(j, "bias").get<double>();
        m.weights = vec_from(field(j, "weights"), "weights");
        if (j.contains("spec") && !j.at("spec").is_null()) m.spec = regularizer_from_json(j.at("spec"));
        m.loss = loss_from_json(field(j, "loss"));
        for (const auto& k : field(j, "kernels")) m.kernels.push_back(descriptor_from_json(k));
        require(static_cast<Index>(m.kernels.size()) == m.weights.size(), "kernel and weight counts differ");
        for (Index i = 0; i < m.weights.size(); ++i)
            require(m.weights(i) >= 0.0, "negative kernel weight");
        const std::string fp = j.value("data_fingerprint", std::string("0"));
        m.data_fingerprint = std::stoull(fp, nullptr, 16);
        if (j.contains("in_sample_scores")) m.in_sample_scores = vec_from(j.at("in_sample_scores"), "in_sample_scores");
        if (j.contains("metadata"))
            for (const auto& [k, v] : j.at("metadata").items()) m.metadata[k] = number_from(v);
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("corrupt model: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw ValidationError("corrupt model: bad fingerprint");
    }
}

void save_model(const MklModel& m, const fs::path& path) { write_text_file(path, to_json(m).dump(2) + "\n"); }

MklModel load_model(const fs::path& path) {
    try {
        return model_from_json(read_json_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_trace_csv(std::ostream& out, const FitTrace& trace) {
    out << std::setprecision(17) << "iteration,objective,max_weight_change,inner_iterations";
    const Index M = trace.rows.empty() ? 0 : trace.rows.front().weights.size();
    for (Index m = 0; m < M; ++m) out << ",d" << m;
    out << "\n";
    for (const auto& r : trace.rows) {
        out << r.iteration << "," << r.objective << "," << r.max_weight_change << "," << r.inner_iterations;
        for (Index m = 0; m < r.weights.size(); ++m) out << "," << r.weights(m);
        out << "\n";
    }
}

void write_bayes_trace_csv(std::ostream& out, const BayesState& st) {
    out << std::setprecision(17) << "iteration,nll";
    const Index M = st.weight_trace.empty() ? 0 : st.weight_trace.front().size();
    for (Index m = 0; m < M; ++m) out << ",d" << m;
    out << "\n";
    for (std::size_t i = 0; i < st.nll_trace.size(); ++i) {
        out << i << "," << st.nll_trace[i];
        for (Index m = 0; m < M; ++m) out << "," << st.weight_trace[i](m);
        out << "\n";
    }
}

json to_json(const ConjugateReport& r) {
    json j;
    j["family"] = r.family_id;
    j["direction"] = r.direction;
    json samples = json::array();
    for (Index i = 0; i < r.samples.rows(); ++i) samples.push_back(vec(r.samples.row(i).transpose()));
    j["samples"] = samples;
    j["analytic"] = vec(r.analytic);
    j["numeric"] = vec(r.numeric);
    j["max_rel_error"] = number(r.max_rel_error);
    j["tolerance"] = r.tolerance;
    j["grid"] = {{"lo", r.grid.lo},
                 {"hi", r.grid.hi},
                 {"points", r.grid.points},
                 {"joint_points", r.grid.joint_points},
                 {"zoom_levels", r.grid.zoom_levels}};
    j["passed"] = r.passed;
    return j;
}

json suite_to_json(const std::vector<ConjugateReport>& reports) {
    json j;
    json arr = json::array();
    bool all = true;
    for (const auto& r : reports) {
        arr.push_back(to_json(r));
        all = all && r.passed;
    }
    j["reports"] = arr;
    j["passed"] = all;
    return j;
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ValidationError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                              ": invalid JSON");
    }
}

json read_json_file(const fs::path& path) { return parse_json(read_text_file(path), path.string()); }

std::string read_text_file(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

} // namespace mkl
