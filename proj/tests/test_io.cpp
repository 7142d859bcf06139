#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "mkl/io.hpp"
#include "support.hpp"

using namespace mkl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mkl_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("read_dataset with a header") {
    std::istringstream in("a, y ,b\n1,2,3\n\n# note\n4,5,6\n");
    const Dataset ds = read_dataset(in);
    CHECK(ds.has_labels);
    CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(ds.data.X.rows() == 2);
    CHECK(ds.data.X(1, 0) == 4.0);
    CHECK(ds.data.X(1, 1) == 6.0);
    CHECK(ds.y(0) == 2.0);
    CHECK_FALSE(ds.data.has_tasks());
}

TEST_CASE("read_dataset with a task column") {
    std::istringstream in("task,x,y\n1,0.5,1\n2,0.25,-1\n");
    const Dataset ds = read_dataset(in);
    CHECK(ds.data.tasks == std::vector<int>{1, 2});
    CHECK(ds.data.X.cols() == 1);
    std::istringstream bad("task,x,y\n0,0.5,1\n");
    CHECK_THROWS_AS(read_dataset(bad), ValidationError);
}

TEST_CASE("read_dataset without a header") {
    std::istringstream in("1,2,3\n4,5,6\n");
    const Dataset ds = read_dataset(in, false);
    CHECK(ds.data.X.cols() == 2);
    CHECK(ds.y(1) == 6.0);
    std::istringstream again("1,2,3\n4,5,6\n");
    const Dataset feats = read_dataset(again, false, false);
    CHECK_FALSE(feats.has_labels);
    CHECK(feats.data.X.cols() == 3);
}

TEST_CASE("read_dataset reports the offending cell") {
    std::istringstream ragged("x,y\n1,2\n3\n");
    CHECK(error_of([&] { read_dataset(ragged); }).find("line 3") != std::string::npos);
    std::istringstream word("x,y\n1,2\n3,abc\n");
    const std::string msg = error_of([&] { read_dataset(word); });
    CHECK(msg.find("line 3, column 2") != std::string::npos);
    std::istringstream inf("x,y\n1,inf\n");
    CHECK_THROWS_AS(read_dataset(inf), ValidationError);
    std::istringstream empty("x,y\n");
    CHECK_THROWS_AS(read_dataset(empty), ValidationError);
    CHECK_THROWS_AS(read_dataset(fs::path("/nonexistent/data.csv")), ValidationError);
}

TEST_CASE("matrix CSV round trip") {
    const fs::path dir = scratch_dir("matrix");
    std::mt19937_64 rng(191);
    const Matrix A = support::random_matrix(4, 3, rng);
    {
        std::ostringstream os;
        write_matrix_csv(os, A);
        write_text_file(dir / "a.csv", os.str());
    }
    CHECK(read_matrix_csv(dir / "a.csv") == A);
    write_text_file(dir / "bad.csv", "1,2\n3\n");
    CHECK_THROWS_AS(read_matrix_csv(dir / "bad.csv"), ValidationError);
}

TEST_CASE("gram manifest") {
    const fs::path dir = scratch_dir("manifest");
    fs::create_directories(dir / "k");
    write_text_file(dir / "k" / "a.csv", "1,0\n0,1\n");
    write_text_file(dir / "k" / "b.csv", "2,1\n1,2\n");
    write_text_file(dir / "m.json", R"({"kernels": [{"path": "k/a.csv", "name": "eye"}, {"path": "k/b.csv"}]})");
    std::vector<std::string> names;
    const auto Ks = read_gram_manifest(dir / "m.json", &names);
    REQUIRE(Ks.size() == 2);
    CHECK(Ks[0] == Matrix::Identity(2, 2));
    CHECK(Ks[1](0, 1) == 1.0);
    CHECK(names[0] == "eye");
    write_text_file(dir / "empty.json", R"({"kernels": []})");
    CHECK_THROWS_AS(read_gram_manifest(dir / "empty.json"), ValidationError);
}

TEST_CASE("JSON syntax errors carry line and column") {
    const std::string msg = error_of([] { parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "cfg.json"); });
    CHECK(msg.find("cfg.json:3:") != std::string::npos);
    CHECK(parse_json("{\"a\": 2}", "x")["a"] == 2);
}

TEST_CASE("fingerprints") {
    std::mt19937_64 rng(193);
    DataMatrix a;
    a.X = support::random_matrix(5, 2, rng);
    DataMatrix b = a;
    CHECK(fingerprint(a) == fingerprint(b));
    b.X(2, 1) += 1e-15;
    CHECK(fingerprint(a) != fingerprint(b));
    DataMatrix c = a;
    c.tasks = {1, 1, 2, 2, 1};
    CHECK(fingerprint(a) != fingerprint(c));
    const KernelBank k1 = support::bank_of({Matrix::Identity(3, 3)});
    const KernelBank k2 = support::bank_of({2.0 * Matrix::Identity(3, 3)});
    CHECK(fingerprint(k1) != fingerprint(k2));
}

TEST_CASE("spec and descriptor JSON") {
    RegularizerSpec s;
    s.family = Family::ElasticNet;
    s.param = 0.3;
    s.side = Side::BlockNorm;
    s.C = 0.01;
    CHECK(regularizer_from_json(to_json(s)) == s);
    CHECK(to_json(s)["param"] == 0.3);
    CHECK(regularizer_from_json(json::parse(R"({"family": "elastic_net", "lambda": 0.4})")).param == 0.4);
    const RegularizerSpec alt = regularizer_from_json(json::parse(R"({"family": "lp_tikhonov", "param": 2})"));
    CHECK(alt.family == Family::LpNormTikhonov);
    CHECK(alt.param == 2.0);
    CHECK_THROWS_AS(regularizer_from_json(json::parse(R"({"family": "nope"})")), ValidationError);

    KernelDescriptor d;
    d.family = KernelFamily::Chi2;
    d.gamma = 0.123456789012345678;
    d.columns = {0, 3};
    d.task = 2;
    d.normalization = Normalization::Trace;
    d.scale = 1.0 / 3.0;
    d.name = "c";
    const KernelDescriptor r = descriptor_from_json(to_json(d));
    CHECK(r.family == d.family);
    CHECK(r.gamma == d.gamma);
    CHECK(r.columns == d.columns);
    CHECK(r.task == d.task);
    CHECK(r.normalization == d.normalization);
    CHECK(r.scale == d.scale);
    CHECK(r.name == d.name);

    LossSpec l;
    l.kind = LossKind::Logistic;
    CHECK(loss_from_json(to_json(l)) == l);
}

TEST_CASE("model JSON round trip is exact") {
    const auto p = support::signal_noise_problem(20, 5);
    RegularizerSpec s;
    s.family = Family::LpNormTikhonov;
    s.param = 1.5;
    LossSpec l;
    l.noise_variance = 0.37;
    FitResult r = fit(p.bank, p.y, s, l);
    r.model.data_fingerprint = fingerprint(p.data);
    r.model.metadata["selected_C"] = 0.1;
    r.model.metadata["odd"] = kInf;

    const fs::path dir = scratch_dir("model");
    save_model(r.model, dir / "m.json");
    const MklModel back = load_model(dir / "m.json");
    CHECK(back.alpha == r.model.alpha);
    CHECK(back.bias == r.model.bias);
    CHECK(back.weights == r.model.weights);
    CHECK(*back.spec == *r.model.spec);
    CHECK(back.loss == r.model.loss);
    CHECK(back.data_fingerprint == r.model.data_fingerprint);
    CHECK(back.in_sample_scores == r.model.in_sample_scores);
    CHECK(back.metadata == r.model.metadata);
    CHECK(back.kernels.size() == 2);
    CHECK(predict(back, p.data, p.data) == predict(r.model, p.data, p.data));

    const BayesFit b = fit_bayes(p.bank, p.y, 0.37);
    save_model(b.model, dir / "b.json");
    const MklModel bb = load_model(dir / "b.json");
    CHECK_FALSE(bb.spec.has_value());
    CHECK(bb.method == "empirical_bayes");

    write_text_file(dir / "bad.json", R"({"alpha": [1]})");
    CHECK_THROWS_AS(load_model(dir / "bad.json"), ValidationError);
}

TEST_CASE("trace CSV") {
    FitTrace t;
    Vector d(2);
    d << 0.5, 0.25;
    t.rows.push_back({0, 1.5, d, 3, 0.0});
    std::ostringstream os;
    write_trace_csv(os, t);
    const std::string s = os.str();
    CHECK(s.rfind("iteration,objective,max_weight_change,inner_iterations,d0,d1\n", 0) == 0);
    CHECK(s.find("0,1.5,0,3,0.5,0.25") != std::string::npos);
}

TEST_CASE("suite report JSON") {
    SuiteOptions so;
    so.samples = 3;
    so.family_filter = "uniform";
    const json j = suite_to_json(run_conjugate_suite(so));
    CHECK(j["passed"] == true);
    REQUIRE(j["reports"].is_array());
    CHECK(j["reports"].size() >= 1);
    CHECK(j["reports"][0].contains("max_rel_error"));
}
