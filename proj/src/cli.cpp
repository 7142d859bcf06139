#include "mkl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

namespace mkl {

namespace fs = std::filesystem;

std::vector<double> default_C_grid() { return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}; }

std::vector<double> default_lambda_grid() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

void ExperimentConfig::validate() const {
    require(!data.empty(), "config: 'data' is required");
    require(!gram_manifest.empty() || !kernels.empty() || !overlap_groups.empty() || multitask_base.has_value(),
            "config: no kernels configured");
    regularizer.validate();
    loss.validate();
    require(folds >= 2, "config: 'folds' must be at least 2");
    require(repeats >= 1, "config: 'repeats' must be at least 1");
    for (double c : C_grid) require(c > 0.0, "config: 'C_grid' entries must be positive");
    for (double l : lambda_grid) require(l >= 0.0 && l <= 1.0, "config: 'lambda_grid' entries must lie in [0, 1]");
    require(max_outer >= 1, "config: 'max_outer' must be positive");
    require(weight_tol > 0.0 && bayes_tol > 0.0, "config: tolerances must be positive");
}

namespace {

template <typename T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: '" + path + "' has the wrong type (" + j.dump() + ")");
    }
}

std::vector<double> number_list(const json& j, const std::string& path) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array() || j.empty()) throw ValidationError("config: '" + path + "' must be a nonempty number list");
    return get_as<std::vector<double>>(j, path);
}

std::vector<std::vector<Index>> column_sets(const json& j, const std::string& path, Index num_cols) {
    if (j.is_string()) {
        require(j.get<std::string>() == "each", "config: '" + path + "' accepts only the string \"each\"");
        require(num_cols > 0, "config: '" + path + "' = \"each\" needs feature columns");
        std::vector<std::vector<Index>> out;
        for (Index c = 0; c < num_cols; ++c) out.push_back({c});
        return out;
    }
    if (!j.is_array()) throw ValidationError("config: '" + path + "' must be an array");
    if (j.empty()) return {{}};
    if (j.front().is_array()) return get_as<std::vector<std::vector<Index>>>(j, path);
    return {get_as<std::vector<Index>>(j, path)};
}

const std::vector<std::string> kConfigKeys = {
    "data", "header", "gram_manifest", "kernels", "overlap_groups", "multitask", "regularizer", "loss",
    "C_grid", "lambda_grid", "select", "folds", "repeats", "seed", "max_outer", "tol", "fit_bias",
    "bayes"};

} // namespace

ExperimentConfig parse_config(const json& j, const fs::path& base) {
    require(j.is_object(), "config: top level must be an object");
    for (const auto& [k, v] : j.items()) {
        (void)v;
        require(std::find(kConfigKeys.begin(), kConfigKeys.end(), k) != kConfigKeys.end(),
                "config: unknown key '" + k + "'");
    }
    ExperimentConfig cfg;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() || base.empty() ? fs::path(p) : base / p; };
    if (j.contains("data")) cfg.data = resolve(get_as<std::string>(j.at("data"), "data"));
    if (j.contains("header")) cfg.header = get_as<bool>(j.at("header"), "header");
    if (j.contains("gram_manifest"))
        cfg.gram_manifest = resolve(get_as<std::string>(j.at("gram_manifest"), "gram_manifest"));

    if (j.contains("kernels")) {
        const json& ks = j.at("kernels");
        require(ks.is_array(), "config: 'kernels' must be an array");
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const std::string path = "kernels[" + std::to_string(i) + "]";
            const json& k = ks[i];
            require(k.is_object() && k.contains("family"), "config: '" + path + ".family' is required");
            KernelDescriptor proto;
            proto.family = kernel_family_from_string(get_as<std::string>(k.at("family"), path + ".family"));
            require(proto.family != KernelFamily::Precomputed,
                    "config: '" + path + "': use 'gram_manifest' for precomputed kernels");
            if (k.contains("normalization"))
                proto.normalization =
                    normalization_from_string(get_as<std::string>(k.at("normalization"), path + ".normalization"));
            if (k.contains("task")) proto.task = get_as<int>(k.at("task"), path + ".task");
            std::vector<double> gammas = {1.0};
            if (k.contains("gamma")) gammas = number_list(k.at("gamma"), path + ".gamma");
            for (double g : gammas) require(g > 0.0, "config: '" + path + ".gamma' entries must be positive");
            // "each" needs the column count, which is only known once data is read.
            json cols = k.contains("columns") ? k.at("columns") : json::array();
            if (cols.is_string()) {
                require(cols.get<std::string>() == "each", "config: '" + path + ".columns' accepts only \"each\"");
                proto.name = "__each__";
                for (double g : gammas) {
                    KernelDescriptor d = proto;
                    d.gamma = g;
                    cfg.kernels.push_back(d);
                }
                continue;
            }
            for (const auto& set : column_sets(cols, path + ".columns", 0))
                for (double g : gammas) {
                    KernelDescriptor d = proto;
                    d.gamma = g;
                    d.columns = set;
                    cfg.kernels.push_back(d);
                }
        }
    }
    if (j.contains("overlap_groups"))
        cfg.overlap_groups = column_sets(j.at("overlap_groups"), "overlap_groups", 0);
    if (j.contains("multitask")) {
        const json& mt = j.at("multitask");
        require(mt.is_object() && mt.contains("tasks"), "config: 'multitask.tasks' is required");
        cfg.multitask_tasks = get_as<int>(mt.at("tasks"), "multitask.tasks");
        require(cfg.multitask_tasks >= 1, "config: 'multitask.tasks' must be positive");
        KernelDescriptor base_k;
        if (mt.contains("family"))
            base_k.family = kernel_family_from_string(get_as<std::string>(mt.at("family"), "multitask.family"));
        if (mt.contains("gamma")) base_k.gamma = get_as<double>(mt.at("gamma"), "multitask.gamma");
        if (mt.contains("columns")) base_k.columns = get_as<std::vector<Index>>(mt.at("columns"), "multitask.columns");
        cfg.multitask_base = base_k;
    }

    if (j.contains("regularizer")) {
        try {
            cfg.regularizer = regularizer_from_json(j.at("regularizer"));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config: 'regularizer': ") + e.what());
        } catch (const json::exception&) {
            throw ValidationError("config: 'regularizer' has the wrong type");
        }
    }
    if (j.contains("loss")) {
        try {
            cfg.loss = loss_from_json(j.at("loss"));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config: 'loss': ") + e.what());
        } catch (const json::exception&) {
            throw ValidationError("config: 'loss' has the wrong type");
        }
    }
    if (j.contains("C_grid")) cfg.C_grid = number_list(j.at("C_grid"), "C_grid");
    if (j.contains("lambda_grid")) cfg.lambda_grid = number_list(j.at("lambda_grid"), "lambda_grid");
    cfg.select = j.contains("C_grid") || j.contains("lambda_grid");
    if (j.contains("select")) cfg.select = get_as<bool>(j.at("select"), "select");
    if (j.contains("folds")) cfg.folds = get_as<int>(j.at("folds"), "folds");
    if (j.contains("repeats")) cfg.repeats = get_as<int>(j.at("repeats"), "repeats");
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j.at("seed"), "seed");
    if (j.contains("max_outer")) cfg.max_outer = get_as<int>(j.at("max_outer"), "max_outer");
    if (j.contains("tol")) cfg.weight_tol = get_as<double>(j.at("tol"), "tol");
    if (j.contains("fit_bias")) cfg.fit_bias = get_as<bool>(j.at("fit_bias"), "fit_bias");
    if (j.contains("bayes")) {
        const json& b = j.at("bayes");
        if (b.contains("max_iter")) cfg.bayes_max_iter = get_as<int>(b.at("max_iter"), "bayes.max_iter");
        if (b.contains("tol")) cfg.bayes_tol = get_as<double>(b.at("tol"), "bayes.tol");
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    const json j = read_json_file(path);
    try {
        return parse_config(j, path.parent_path());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

Problem load_problem(const ExperimentConfig& cfg) {
    cfg.validate();
    Problem p;
    p.dataset = read_dataset(cfg.data, cfg.header, true);
    require(p.dataset.has_labels, cfg.data.string() + ": no label column 'y'");
    p.dataset.data.validate();
    const DataMatrix& data = p.dataset.data;

    std::vector<GramMatrix> grams;
    if (!cfg.gram_manifest.empty()) {
        std::vector<std::string> names;
        auto mats = read_gram_manifest(cfg.gram_manifest, &names);
        for (std::size_t m = 0; m < mats.size(); ++m) {
            require(mats[m].rows() == data.rows(),
                    "Gram '" + names[m] + "' has " + std::to_string(mats[m].rows()) + " rows, data has " +
                        std::to_string(data.rows()));
            KernelDescriptor d;
            d.family = KernelFamily::Precomputed;
            d.name = names[m];
            grams.push_back({std::move(mats[m]), d});
        }
    }
    std::vector<KernelDescriptor> descs;
    for (const auto& k : cfg.kernels) {
        if (k.name == "__each__") {
            for (Index c = 0; c < data.cols(); ++c) {
                KernelDescriptor d = k;
                d.name.clear();
                d.columns = {c};
                descs.push_back(d);
            }
        } else {
            descs.push_back(k);
        }
    }
    if (!descs.empty())
        for (const auto& g : build_bank(data, descs)) grams.push_back(g);
    if (!cfg.overlap_groups.empty())
        for (const auto& g : build_overlap_linear_kernels(data, cfg.overlap_groups)) grams.push_back(g);
    if (cfg.multitask_base)
        for (const auto& g : build_multitask_bank(*cfg.multitask_base, data, cfg.multitask_tasks)) grams.push_back(g);
    p.bank = KernelBank(std::move(grams));

    const bool precomputed_only = !cfg.gram_manifest.empty() && descs.empty() && cfg.overlap_groups.empty() &&
                                  !cfg.multitask_base;
    p.fingerprint = precomputed_only ? fingerprint(p.bank) : fingerprint(data);
    if (cfg.loss.kind == LossKind::Logistic)
        for (Index i = 0; i < p.dataset.y.size(); ++i)
            require(p.dataset.y(i) == 1.0 || p.dataset.y(i) == -1.0, "logistic loss needs labels in {-1, +1}");
    return p;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

namespace {

std::vector<int> assign_once(const Vector& y, int folds, std::uint64_t seed, bool stratified) {
    const Index n = y.size();
    std::mt19937_64 rng(seed);
    std::vector<int> fold(static_cast<std::size_t>(n), 0);
    std::map<double, std::vector<Index>> groups;
    for (Index i = 0; i < n; ++i) groups[stratified ? y(i) : 0.0].push_back(i);
    int next = 0;
    for (auto& [label, idx] : groups) {
        (void)label;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (Index i : idx) {
            fold[static_cast<std::size_t>(i)] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

bool training_parts_have_both_classes(const Vector& y, const std::vector<int>& fold, int folds) {
    for (int f = 0; f < folds; ++f) {
        bool pos = false, neg = false;
        for (Index i = 0; i < y.size(); ++i)
            if (fold[static_cast<std::size_t>(i)] != f) (y(i) > 0 ? pos : neg) = true;
        if (!pos || !neg) return false;
    }
    return true;
}

double metric(LossKind kind, const Vector& y, const Vector& scores) {
    if (kind == LossKind::Logistic) {
        Index correct = 0;
        for (Index i = 0; i < y.size(); ++i) correct += (scores(i) > 0.0 ? 1.0 : -1.0) == y(i);
        return static_cast<double>(correct) / static_cast<double>(y.size());
    }
    return std::sqrt((y - scores).squaredNorm() / static_cast<double>(y.size()));
}

std::vector<Index> indices_where(const std::vector<int>& fold, int f, bool equal) {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if ((fold[i] == f) == equal) out.push_back(static_cast<Index>(i));
    return out;
}

} // namespace

std::vector<std::vector<int>> cv_assignments(const Vector& y, int folds, int repeats, std::uint64_t seed,
                                             bool stratified) {
    require(folds >= 2, "cross-validation needs at least 2 folds");
    require(y.size() >= folds, "fewer samples than folds");
    std::vector<std::vector<int>> out;
    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
        auto fold = assign_once(y, folds, s, stratified);
        if (stratified && !training_parts_have_both_classes(y, fold, folds)) {
            fold = assign_once(y, folds, s + 1000003ULL, stratified);
            require(training_parts_have_both_classes(y, fold, folds),
                    "cross-validation: a training fold has a single class even after resampling");
        }
        out.push_back(std::move(fold));
    }
    return out;
}

CvResult cross_validate(const KernelBank& bank, const Vector& y, const ExperimentConfig& cfg,
                        const std::vector<double>& C_grid, const std::vector<double>& lambda_grid) {
    require(!C_grid.empty(), "cross-validation: empty C grid");
    const bool classify = cfg.loss.kind == LossKind::Logistic;
    const bool vary_lambda = cfg.regularizer.family == Family::ElasticNet && !lambda_grid.empty();
    std::vector<double> Cs = C_grid, lambdas = vary_lambda ? lambda_grid : std::vector<double>{cfg.regularizer.param};
    std::sort(Cs.begin(), Cs.end());
    std::sort(lambdas.begin(), lambdas.end());

    const auto assignments = cv_assignments(y, cfg.folds, cfg.repeats, cfg.seed, classify);
    CvResult res;
    res.metric = classify ? "accuracy" : "rmse";
    res.higher_is_better = classify;

    FitOptions fo;
    fo.max_outer = cfg.max_outer;
    fo.weight_tol = cfg.weight_tol;
    fo.fstep.fit_bias = cfg.fit_bias;

    for (double C : Cs)
        for (double lam : lambdas) {
            CvCell cell;
            cell.C = C;
            cell.lambda = vary_lambda ? lam : 0.0;
            RegularizerSpec spec = cfg.regularizer;
            spec.C = C;
            if (vary_lambda) spec.param = lam;
            for (const auto& fold : assignments)
                for (int f = 0; f < cfg.folds; ++f) {
                    const auto train = indices_where(fold, f, false);
                    const auto test = indices_where(fold, f, true);
                    if (test.empty()) continue;
                    const KernelBank sub = bank.slice(train);
                    const Vector ytr = y(train);
                    const FitResult fr = fit(sub, ytr, spec, cfg.loss, fo);
                    std::vector<Matrix> cross;
                    for (Index m = 0; m < bank.num_kernels(); ++m) cross.push_back(bank.gram(m)(test, train));
                    const Vector scores = predict(fr.model, cross);
                    cell.fold_scores.push_back(metric(cfg.loss.kind, y(test), scores));
                }
            const double n = static_cast<double>(cell.fold_scores.size());
            cell.mean = std::accumulate(cell.fold_scores.begin(), cell.fold_scores.end(), 0.0) / n;
            double ss = 0.0;
            for (double s : cell.fold_scores) ss += (s - cell.mean) * (s - cell.mean);
            cell.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
            res.cells.push_back(std::move(cell));
        }
    for (std::size_t i = 1; i < res.cells.size(); ++i) {
        const double a = res.cells[i].mean, b = res.cells[res.best].mean;
        if (res.higher_is_better ? a > b : a < b) res.best = i;
    }
    return res;
}

void write_cv_table(std::ostream& out, const CvResult& r) {
    out << std::setprecision(17) << "C,lambda," << r.metric << "_mean," << r.metric << "_std";
    const std::size_t nf = r.cells.empty() ? 0 : r.cells.front().fold_scores.size();
    for (std::size_t f = 0; f < nf; ++f) out << ",fold" << f;
    out << ",selected\n";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        out << c.C << "," << c.lambda << "," << c.mean << "," << c.stddev;
        for (double s : c.fold_scores) out << "," << s;
        out << "," << (i == r.best ? 1 : 0) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Weight report
// ---------------------------------------------------------------------------

namespace {

std::string group_value(const KernelDescriptor& d, const std::string& key) {
    std::ostringstream os;
    if (key == "family")
        os << to_string(d.family);
    else if (key == "gamma")
        os << d.gamma;
    else if (key == "normalization")
        os << to_string(d.normalization);
    else if (key == "task")
        os << d.task;
    else if (key == "columns") {
        os << "[";
        for (std::size_t i = 0; i < d.columns.size(); ++i) os << (i ? "," : "") << d.columns[i];
        os << "]";
    } else
        throw ValidationError("unknown grouping key '" + key + "'");
    return os.str();
}

} // namespace

json weight_report(const MklModel& model, const std::vector<std::string>& group_keys) {
    const Index M = model.weights.size();
    std::vector<Index> order(static_cast<std::size_t>(M));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return model.weights(a) > model.weights(b); });
    std::vector<int> rank(static_cast<std::size_t>(M));
    for (std::size_t r = 0; r < order.size(); ++r) rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;

    json kernels = json::array();
    int nonzero = 0;
    double total = 0.0;
    for (Index m : order) {
        const auto& d = model.kernels[static_cast<std::size_t>(m)];
        json k = to_json(d);
        k["index"] = m;
        k["label"] = d.label();
        k["weight"] = model.weights(m);
        k["rank"] = rank[static_cast<std::size_t>(m)];
        kernels.push_back(k);
    }
    for (Index m = 0; m < M; ++m) {
        total += model.weights(m);
        nonzero += model.weights(m) >= 1e-10;
    }

    json groups = json::object();
    for (const auto& key : group_keys) {
        std::map<std::string, std::tuple<double, int, int>> acc;
        for (Index m = 0; m < M; ++m) {
            auto& [sum, count, nz] = acc[group_value(model.kernels[static_cast<std::size_t>(m)], key)];
            sum += model.weights(m);
            ++count;
            nz += model.weights(m) >= 1e-10;
        }
        json g = json::object();
        for (const auto& [value, t] : acc)
            g[value] = {{"sum", std::get<0>(t)}, {"count", std::get<1>(t)}, {"nonzero", std::get<2>(t)}};
        groups[key] = g;
    }

    json j;
    j["method"] = model.method;
    j["kernels"] = kernels;
    j["num_kernels"] = M;
    j["nonzero"] = nonzero;
    j["total_weight"] = total;
    j["groups"] = groups;
    return j;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace {

struct Overrides {
    std::string data;
    std::optional<double> C;
    std::string family;
    std::optional<double> param;
    std::string loss;
    std::optional<double> noise_variance;
    std::optional<std::uint64_t> seed;
    std::optional<int> folds;
    std::optional<int> repeats;
    std::optional<int> max_outer;
    bool no_bias = false;

    void add_to(CLI::App* app) {
        app->add_option("--data", data, "Training CSV (overrides the config)");
        app->add_option("--C", C, "Regularization constant");
        app->add_option("--family", family, "Regularizer family");
        app->add_option("--param", param, "Family parameter (p, q or lambda)");
        app->add_option("--loss", loss, "squared or logistic");
        app->add_option("--noise-variance", noise_variance, "sigma_y^2 for the squared loss");
        app->add_option("--seed", seed, "Seed for fold assignment");
        app->add_option("--folds", folds, "CV folds");
        app->add_option("--repeats", repeats, "CV repeats");
        app->add_option("--max-outer", max_outer, "Outer iteration cap");
        app->add_flag("--no-bias", no_bias, "Fit without the bias term");
    }

    void apply(ExperimentConfig& cfg) const {
        if (!data.empty()) cfg.data = data;
        if (!family.empty()) {
            cfg.regularizer.family = family_from_string(family);
            cfg.regularizer.side = Side::KernelWeight;
        }
        if (C) cfg.regularizer.C = *C;
        if (param) cfg.regularizer.param = *param;
        if (!loss.empty()) cfg.loss.kind = loss_kind_from_string(loss);
        if (noise_variance) cfg.loss.noise_variance = *noise_variance;
        if (seed) cfg.seed = *seed;
        if (folds) cfg.folds = *folds;
        if (repeats) cfg.repeats = *repeats;
        if (max_outer) cfg.max_outer = *max_outer;
        if (no_bias) cfg.fit_bias = false;
        cfg.validate();
    }
};

FitOptions fit_options(const ExperimentConfig& cfg) {
    FitOptions fo;
    fo.max_outer = cfg.max_outer;
    fo.weight_tol = cfg.weight_tol;
    fo.fstep.fit_bias = cfg.fit_bias;
    return fo;
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-")
        out << text;
    else
        write_text_file(path, text);
}

int cmd_train(const std::string& config_path, const Overrides& ov, const std::string& model_out,
              const std::string& trace_out, std::ostream& out) {
    ExperimentConfig cfg = load_config(config_path);
    ov.apply(cfg);
    const Problem p = load_problem(cfg);
    const Vector& y = p.dataset.y;

    RegularizerSpec spec = cfg.regularizer;
    std::map<std::string, double> meta;
    if (cfg.select) {
        const auto Cs = cfg.C_grid.empty() ? std::vector<double>{spec.C} : cfg.C_grid;
        const auto lams = spec.family == Family::ElasticNet
                              ? (cfg.lambda_grid.empty() ? default_lambda_grid() : cfg.lambda_grid)
                              : std::vector<double>{};
        ExperimentConfig cv_cfg = cfg;
        cv_cfg.regularizer = spec;
        const CvResult cv = cross_validate(p.bank, y, cv_cfg, Cs, lams);
        const CvCell& best = cv.cells[cv.best];
        spec.C = best.C;
        meta["selected_C"] = best.C;
        if (spec.family == Family::ElasticNet) {
            spec.param = best.lambda;
            meta["selected_lambda"] = best.lambda;
        }
        meta["cv_" + cv.metric] = best.mean;
    }

    FitResult fr = fit(p.bank, y, spec, cfg.loss, fit_options(cfg));
    fr.model.data_fingerprint = p.fingerprint;
    for (const auto& [k, v] : meta) fr.model.metadata[k] = v;
    fr.model.metadata["converged"] = fr.trace.converged ? 1.0 : 0.0;
    fr.model.metadata["outer_iterations"] = static_cast<double>(fr.trace.rows.size() - 1);

    write_or_print(model_out, to_json(fr.model).dump(2) + "\n", out);
    if (!trace_out.empty()) {
        std::ostringstream os;
        write_trace_csv(os, fr.trace);
        write_text_file(trace_out, os.str());
    }
    if (!model_out.empty() && model_out != "-") {
        out << "trained " << to_string(spec.family) << " C=" << spec.C;
        if (!param_name(spec.family).empty()) out << " " << param_name(spec.family) << "=" << spec.param;
        out << " iterations=" << fr.trace.rows.size() - 1 << (fr.trace.converged ? "" : " (not converged)")
            << "\n";
    }
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& train_path, const std::string& data_path,
                const std::string& cross_path, bool header, const std::string& out_path, std::ostream& out) {
    const MklModel model = load_model(model_path);
    Vector scores;
    if (!cross_path.empty()) {
        const auto cross = read_gram_manifest(cross_path);
        require(static_cast<Index>(cross.size()) == model.weights.size(),
                "cross-Gram manifest lists " + std::to_string(cross.size()) + " kernels, model has " +
                    std::to_string(model.weights.size()));
        scores = predict(model, cross);
    } else {
        require(!train_path.empty(), "predict needs --train (or --cross for precomputed kernels)");
        require(!data_path.empty(), "predict needs --data");
        Dataset train = read_dataset(train_path, header, true);
        require(fingerprint(train.data) == model.data_fingerprint,
                "training data does not match the model fingerprint");
        Dataset test = read_dataset(data_path, header, false);
        if (!header && test.data.cols() == train.data.cols() + 1)
            test.data.X.conservativeResize(Eigen::NoChange, train.data.cols());
        require(test.data.cols() == train.data.cols(), "test data has " + std::to_string(test.data.cols()) +
                                                           " feature columns, training data has " +
                                                           std::to_string(train.data.cols()));
        scores = predict(model, train.data, test.data);
    }
    std::ostringstream os;
    os << std::setprecision(17);
    const bool classify = model.loss.kind == LossKind::Logistic;
    os << (classify ? "score,label\n" : "score\n");
    for (Index i = 0; i < scores.size(); ++i) {
        os << scores(i);
        if (classify) os << "," << (scores(i) > 0.0 ? 1 : -1);
        os << "\n";
    }
    write_or_print(out_path, os.str(), out);
    return 0;
}

int cmd_cv(const std::string& config_path, const Overrides& ov, const std::string& out_path, std::ostream& out) {
    ExperimentConfig cfg = load_config(config_path);
    ov.apply(cfg);
    const Problem p = load_problem(cfg);
    const auto Cs = cfg.C_grid.empty() ? default_C_grid() : cfg.C_grid;
    const auto lams = cfg.regularizer.family == Family::ElasticNet
                          ? (cfg.lambda_grid.empty() ? default_lambda_grid() : cfg.lambda_grid)
                          : std::vector<double>{};
    const CvResult r = cross_validate(p.bank, p.dataset.y, cfg, Cs, lams);
    std::ostringstream os;
    write_cv_table(os, r);
    write_or_print(out_path, os.str(), out);
    const CvCell& b = r.cells[r.best];
    std::ostringstream summary;
    summary << std::setprecision(6) << "selected C=" << b.C;
    if (cfg.regularizer.family == Family::ElasticNet) summary << " lambda=" << b.lambda;
    summary << " " << r.metric << "=" << b.mean << " +- " << b.stddev << "\n";
    if (!out_path.empty() && out_path != "-") out << summary.str();
    return 0;
}

int cmd_weights(const std::string& model_path, const std::string& group_by, const std::string& out_path,
                std::ostream& out) {
    const MklModel model = load_model(model_path);
    std::vector<std::string> keys;
    std::istringstream is(group_by);
    for (std::string k; std::getline(is, k, ',');)
        if (!k.empty()) keys.push_back(k);
    write_or_print(out_path, weight_report(model, keys).dump(2) + "\n", out);
    return 0;
}

int cmd_bayes(const std::string& config_path, const Overrides& ov, std::optional<int> max_iter,
              std::optional<double> tol, const std::string& model_out, const std::string& trace_out,
              std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = load_config(config_path);
    ov.apply(cfg);
    require(cfg.loss.kind == LossKind::Squared, "empirical Bayes needs the squared loss");
    const Problem p = load_problem(cfg);
    BayesOptions bo;
    bo.max_iter = max_iter.value_or(cfg.bayes_max_iter);
    bo.tol = tol.value_or(cfg.bayes_tol);
    require(bo.max_iter >= 1 && bo.tol > 0.0, "bayes: bad iteration settings");
    BayesFit bf = fit_bayes(p.bank, p.dataset.y, cfg.loss.noise_variance, bo);
    bf.model.data_fingerprint = p.fingerprint;
    bf.model.metadata["converged"] = bf.state.converged ? 1.0 : 0.0;
    bf.model.metadata["iterations"] = bf.state.iterations;
    if (bf.state.diverged) {
        bf.model.metadata["diverged"] = 1.0;
        err << "warning: NLL kept increasing; returning the best state seen\n";
    }
    write_or_print(model_out, to_json(bf.model).dump(2) + "\n", out);
    if (!trace_out.empty()) {
        std::ostringstream os;
        write_bayes_trace_csv(os, bf.state);
        write_text_file(trace_out, os.str());
    }
    if (!model_out.empty() && model_out != "-")
        out << std::setprecision(10) << "empirical Bayes: iterations=" << bf.state.iterations
            << " nll=" << bf.state.nll_trace.back() << "\n";
    return 0;
}

int cmd_check(const SuiteOptions& so, const std::string& out_path, std::ostream& out) {
    const auto reports = run_conjugate_suite(so);
    require(!reports.empty(), "no conjugate checks match family '" + so.family_filter + "'");
    bool all = true;
    for (const auto& r : reports) {
        out << (r.passed ? "PASS " : "FAIL ") << r.family_id << " " << r.direction << " max_rel_error="
            << std::setprecision(3) << r.max_rel_error << " tol=" << r.tolerance << "\n";
        all = all && r.passed;
    }
    if (!out_path.empty()) write_text_file(out_path, suite_to_json(reports).dump(2) + "\n");
    return all ? 0 : 3;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiple kernel learning with kernel-weight and block-norm regularizers", "mkl"};
    app.require_subcommand(1);

    std::string config, model_out, trace_out, out_path, model_in, train_path, data_path, cross_path, group_by;
    bool no_header = false;
    Overrides ov;

    auto* train = app.add_subcommand("train", "Fit a model by alternating f-step and weight updates");
    train->add_option("--config", config, "Experiment config JSON")->required();
    train->add_option("--out", model_out, "Model JSON output")->required();
    train->add_option("--trace", trace_out, "Trace CSV output");
    ov.add_to(train);

    auto* pred = app.add_subcommand("predict", "Score new data with a trained model");
    pred->add_option("--model", model_in, "Model JSON")->required();
    pred->add_option("--train", train_path, "Training CSV the model was fit on");
    pred->add_option("--data", data_path, "CSV of points to score");
    pred->add_option("--cross", cross_path, "Manifest of cross-Grams (test rows by training columns)");
    pred->add_flag("--no-header", no_header, "CSV files have no header row");
    pred->add_option("--out", out_path, "Scores CSV output (default stdout)");

    auto* cv = app.add_subcommand("cv", "Repeated k-fold cross-validation over C and lambda");
    cv->add_option("--config", config, "Experiment config JSON")->required();
    cv->add_option("--out", out_path, "CV table CSV output (default stdout)");
    ov.add_to(cv);

    auto* wts = app.add_subcommand("weights", "Report kernel weights of a trained model");
    wts->add_option("--model", model_in, "Model JSON")->required();
    wts->add_option("--group-by", group_by, "Comma-separated descriptor fields")->default_val("family");
    wts->add_option("--out", out_path, "Report JSON output (default stdout)");

    std::optional<int> max_iter;
    std::optional<double> tol;
    auto* bay = app.add_subcommand("bayes", "Empirical Bayesian MKL with MacKay updates");
    bay->add_option("--config", config, "Experiment config JSON")->required();
    bay->add_option("--out", model_out, "Model JSON output")->required();
    bay->add_option("--trace", trace_out, "NLL trace CSV output");
    bay->add_option("--max-iter", max_iter, "Iteration cap");
    bay->add_option("--tol", tol, "Relative weight-change tolerance");
    ov.add_to(bay);

    SuiteOptions so;
    auto* chk = app.add_subcommand("check-conjugate", "Verify the h <-> g correspondences numerically");
    chk->add_option("--tolerance", so.tolerance, "Relative tolerance")->default_val(so.tolerance);
    chk->add_option("--samples", so.samples, "Random points per check")->default_val(so.samples);
    chk->add_option("--dimension", so.dimension, "Number of kernels M")->default_val(so.dimension);
    chk->add_option("--seed", so.seed, "Sampling seed")->default_val(so.seed);
    chk->add_option("--grid-points", so.grid.points, "Points of the 1-D conjugate grid")->default_val(so.grid.points);
    chk->add_option("--family", so.family_filter, "Only run this family");
    chk->add_option("--out", out_path, "Report JSON output");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(config, ov, model_out, trace_out, out);
        if (pred->parsed()) return cmd_predict(model_in, train_path, data_path, cross_path, !no_header, out_path, out);
        if (cv->parsed()) return cmd_cv(config, ov, out_path, out);
        if (wts->parsed()) return cmd_weights(model_in, group_by, out_path, out);
        if (bay->parsed()) return cmd_bayes(config, ov, max_iter, tol, model_out, trace_out, out, err);
        if (chk->parsed()) {
            require(so.tolerance > 0.0 && so.samples >= 1 && so.dimension >= 1, "check-conjugate: bad options");
            return cmd_check(so, out_path, out);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace mkl
