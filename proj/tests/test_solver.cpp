#include <doctest.h>

#include <cmath>
#include <random>

#include "mkl/solver.hpp"
#include "support.hpp"

using namespace mkl;

namespace {

RegularizerSpec spec(Family f, double param = 0.0, double C = 1.0) {
    RegularizerSpec s;
    s.family = f;
    s.param = param;
    s.C = C;
    return s;
}

LossSpec squared(double s2) {
    LossSpec l;
    l.noise_variance = s2;
    return l;
}

LossSpec logistic() {
    LossSpec l;
    l.kind = LossKind::Logistic;
    return l;
}

double sample_variance(const Vector& y) {
    return (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
}

/// Fixed-d minimum of the squared-loss objective over (alpha, b) from the bordered KKT system.
struct Profile {
    Vector alpha;
    double bias;
    double value;
};

Profile squared_profile(const KernelBank& bank, const Vector& d, const Vector& y, double C, double s2) {
    const Index n = y.size();
    Matrix Kd = Matrix::Zero(n, n);
    for (Index m = 0; m < d.size(); ++m) Kd += d(m) * bank.gram(m);
    Matrix A = Matrix::Zero(n + 1, n + 1);
    A.topLeftCorner(n, n) = Kd + C * s2 * Matrix::Identity(n, n);
    A.topRightCorner(n, 1).setOnes();
    A.bottomLeftCorner(1, n).setOnes();
    Vector rhs = Vector::Zero(n + 1);
    rhs.head(n) = y;
    const Vector sol = A.fullPivLu().solve(rhs);
    Profile p{sol.head(n), sol(n), 0.0};
    const Vector r = y - Kd * p.alpha - Vector::Constant(n, p.bias);
    p.value = 0.5 * r.squaredNorm() / s2 + 0.5 * C * p.alpha.dot(Kd * p.alpha);
    return p;
}

} // namespace

TEST_CASE("loss values") {
    CHECK(squared(2.0).value(3.0, 1.0) == doctest::Approx(1.0));
    CHECK(logistic().value(1.0, 0.0) == doctest::Approx(std::log(2.0)));
    CHECK(logistic().value(-1.0, 800.0) == doctest::Approx(800.0));
    CHECK(logistic().value(1.0, 800.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(squared(0.0).validate(), ValidationError);
    CHECK(loss_kind_from_string("logit") == LossKind::Logistic);
    CHECK_THROWS_AS(loss_kind_from_string("hinge"), ValidationError);
}

TEST_CASE("f_step scalar case") {
    Matrix one(1, 1);
    one << 1.0;
    FStepOptions no_bias;
    no_bias.fit_bias = false;
    Vector y(1);
    y << 2.0;
    const FStepResult r = f_step(support::bank_of({one}), Vector::Ones(1), squared(1.0), 1.0, y, no_bias);
    CHECK(r.alpha(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.fitted(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.block_norms(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("f_step with all weights zero is the mean") {
    std::mt19937_64 rng(101);
    const KernelBank bank = support::random_bank(9, 3, rng);
    const Vector y = support::random_vector(9, rng);
    const FStepResult r = f_step(bank, Vector::Zero(3), squared(0.7), 2.0, y);
    CHECK(r.bias == doctest::Approx(y.mean()).epsilon(1e-12));
    for (Index i = 0; i < 9; ++i) CHECK(r.fitted(i) == doctest::Approx(y.mean()).epsilon(1e-12));
    CHECK(r.block_norms.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("f_step matches the bordered system") {
    std::mt19937_64 rng(103);
    for (int t = 0; t < 10; ++t) {
        const KernelBank bank = support::random_bank(12, 3, rng);
        const Vector y = support::random_vector(12, rng);
        const Vector d = support::random_positive(3, 0.1, 3.0, rng);
        const FStepResult r = f_step(bank, d, squared(0.5), 0.3, y);
        const Profile p = squared_profile(bank, d, y, 0.3, 0.5);
        CHECK((r.alpha - p.alpha).norm() <= 1e-8 * p.alpha.norm());
        CHECK(r.bias == doctest::Approx(p.bias).epsilon(1e-8));
    }
}

TEST_CASE("logistic f_step on separable points") {
    DataMatrix data;
    data.X.resize(2, 1);
    data.X << -1.0, 1.0;
    KernelDescriptor lin;
    const KernelBank bank = build_bank(data, {lin});
    Vector y(2);
    y << -1.0, 1.0;
    for (double C : {0.01, 1.0, 100.0}) {
        const FStepResult r = f_step(bank, Vector::Ones(1), logistic(), C, y);
        CHECK(r.fitted(0) < 0.0);
        CHECK(r.fitted(1) > 0.0);
        // Stationarity: gradient of the combined objective vanishes.
        Vector s(2);
        for (Index i = 0; i < 2; ++i) s(i) = -y(i) / (1.0 + std::exp(y(i) * r.fitted(i)));
        const Matrix& K = bank.gram(0);
        CHECK((K * s + C * K * r.alpha).norm() <= 1e-7);
        CHECK(std::abs(s.sum()) <= 1e-7);
    }
}

TEST_CASE("logistic f_step on random data") {
    std::mt19937_64 rng(107);
    for (int t = 0; t < 10; ++t) {
        const KernelBank bank = support::random_bank(20, 3, rng);
        Vector y = support::random_vector(20, rng).array().sign();
        const Vector d = support::random_positive(3, 0.1, 3.0, rng);
        const double C = 0.05;
        const FStepResult r = f_step(bank, d, logistic(), C, y);
        Matrix Kd = Matrix::Zero(20, 20);
        for (Index m = 0; m < 3; ++m) Kd += d(m) * bank.gram(m);
        Vector s(20);
        for (Index i = 0; i < 20; ++i) s(i) = -y(i) / (1.0 + std::exp(y(i) * r.fitted(i)));
        CHECK((Kd * (s + C * r.alpha)).norm() <= 1e-6);
        CHECK(std::abs(s.sum()) <= 1e-7);
    }
}

TEST_CASE("UniformWeight runs a single f-step") {
    std::mt19937_64 rng(109);
    const KernelBank bank = support::random_bank(10, 3, rng);
    const Vector y = support::random_vector(10, rng);
    const FitResult r = fit(bank, y, spec(Family::UniformWeight), squared(1.0));
    CHECK(r.trace.rows.size() == 1);
    CHECK(r.trace.converged);
    CHECK(r.model.weights == Vector::Ones(3));
    const FStepResult fs = f_step(bank, Vector::Ones(3), squared(1.0), 1.0, y);
    CHECK(r.model.alpha == fs.alpha);
}

TEST_CASE("ElasticNet endpoints") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        std::mt19937_64 rng(seed);
        const KernelBank bank = support::random_bank(15, 3, rng);
        const Vector y = support::random_vector(15, rng);
        const FitResult en1 = fit(bank, y, spec(Family::ElasticNet, 1.0), squared(1.0));
        const FitResult uni = fit(bank, y, spec(Family::UniformWeight), squared(1.0));
        CHECK((en1.model.alpha - uni.model.alpha).cwiseAbs().maxCoeff() <= 1e-8);
        const FitResult en0 = fit(bank, y, spec(Family::ElasticNet, 0.0), squared(1.0));
        const FitResult one = fit(bank, y, spec(Family::BlockOneNorm), squared(1.0));
        CHECK((en0.model.alpha - one.model.alpha).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("BlockOneNorm switches off the noise kernel") {
    const auto p = support::signal_noise_problem(30, 1);
    const double s2 = sample_variance(p.y);
    const FitResult r = fit(p.bank, p.y, spec(Family::BlockOneNorm), squared(s2));
    const Vector d = r.model.weights;
    CHECK(d(1) <= 0.05 * d(0));

    // Profile objective minimized over a dense grid of weight pairs.
    auto J = [&](double d1, double d2) {
        Vector w(2);
        w << d1, d2;
        return squared_profile(p.bank, w, p.y, 1.0, s2).value + 0.5 * (d1 + d2);
    };
    double best = HUGE_VAL, g1 = 0.0, g2 = 0.0;
    const double top = 2.0 * d(0);
    for (int i = 1; i <= 80; ++i)
        for (int j = 0; j <= 80; ++j) {
            const double d1 = top * i / 80.0, d2 = top * j / 80.0;
            const double v = J(d1, d2);
            if (v < best) {
                best = v;
                g1 = d1;
                g2 = d2;
            }
        }
    CHECK(g2 <= 0.05 * g1);
    CHECK(r.trace.rows.back().objective <= best * (1.0 + 1e-6));
}

TEST_CASE("predict reproduces the training fit") {
    const auto p = support::signal_noise_problem(25, 3);
    for (Family f : {Family::BlockOneNorm, Family::UniformWeight, Family::LpNormTikhonov}) {
        const FitResult r = fit(p.bank, p.y, spec(f, 2.0), squared(0.5));
        const Vector z = predict(r.model, p.data, p.data);
        CHECK(z == r.model.in_sample_scores);
        const FStepResult fs = f_step(p.bank, r.model.weights, squared(0.5), 1.0, p.y);
        CHECK((z - fs.fitted).cwiseAbs().maxCoeff() <= 1e-9);
        const Matrix F = component_functions(r.model, p.bank);
        const Vector sum = F.rowwise().sum() + Vector::Constant(25, r.model.bias);
        CHECK((sum - z).cwiseAbs().maxCoeff() <= 1e-9);
    }
    MklModel zero;
    zero.alpha = Vector::Zero(25);
    zero.bias = 0.4;
    zero.weights = Vector::Zero(2);
    zero.kernels = p.bank.descriptors();
    CHECK(predict(zero, p.data, p.data) == Vector::Constant(25, 0.4));
    MklModel pre = zero;
    pre.weights = Vector::Ones(2);
    pre.kernels[0].family = KernelFamily::Precomputed;
    CHECK_THROWS_AS(predict(pre, p.data, p.data), ValidationError);
}

TEST_CASE("single linear kernel is ridge regression") {
    DataMatrix train;
    train.X.resize(5, 2);
    train.X << 0.5, 1.0, -1.0, 0.3, 2.0, -0.7, 0.1, 0.1, -0.4, 1.5;
    Vector y(5);
    y << 1.0, -0.5, 2.2, 0.3, 0.9;
    KernelDescriptor lin;
    const KernelBank bank = build_bank(train, {lin});
    const double C = 0.8, s2 = 0.6;
    const FitResult r = fit(bank, y, spec(Family::UniformWeight, 0.0, C), squared(s2));

    // Primal ridge on centered data.
    const Vector mean = train.X.colwise().mean();
    const Matrix Xc = train.X.rowwise() - mean.transpose();
    const Vector w = (Xc.transpose() * Xc + C * s2 * Matrix::Identity(2, 2)).ldlt().solve(Xc.transpose() * (y.array() - y.mean()).matrix());
    const double b = y.mean() - mean.dot(w);

    DataMatrix test;
    test.X.resize(3, 2);
    test.X << 1.0, 1.0, -2.0, 0.5, 0.0, 0.0;
    const Vector z = predict(r.model, train, test);
    for (Index i = 0; i < 3; ++i) CHECK(z(i) == doctest::Approx(test.X.row(i).dot(w) + b).epsilon(1e-8));
    for (Index i = 0; i < 5; ++i)
        CHECK(r.model.in_sample_scores(i) == doctest::Approx(train.X.row(i).dot(w) + b).epsilon(1e-8));
}

TEST_CASE("block-norm objective") {
    std::mt19937_64 rng(113);
    const KernelBank bank = support::random_bank(18, 3, rng);
    const Vector y = support::random_vector(18, rng);
    for (auto [f, prm] : std::vector<std::pair<Family, double>>{{Family::BlockOneNorm, 0.0},
                                                                {Family::LpNormTikhonov, 2.0},
                                                                {Family::ElasticNet, 0.5},
                                                                {Family::UniformWeight, 0.0},
                                                                {Family::LpNormIvanov, 1.5}}) {
        const FitResult r = fit(bank, y, spec(f, prm), squared(1.0));
        const Vector x = block_norms(r.model, bank);
        const Vector dopt = optimal_weights(*r.model.spec, x);
        const double kw = kernel_weight_objective(bank, y, *r.model.spec, r.model.loss, r.model.alpha, r.model.bias,
                                                  r.model.weights);
        const double bn = block_norm_objective(r.model, bank, y);
        CHECK(bn == doctest::Approx(kw).epsilon(1e-6));
        if (f != Family::LpNormIvanov) {
            // Evaluating the kernel-weight side at the closed-form weights of the same functions.
            double ratio = 0.0;
            for (Index m = 0; m < 3; ++m)
                if (dopt(m) > 0.0) ratio += x(m) / dopt(m);
            const double env = r.model.loss.sum(y, r.model.in_sample_scores) +
                               0.5 * r.model.spec->C * (ratio + h_value(*r.model.spec, dopt));
            CHECK(bn == doctest::Approx(env).epsilon(1e-6));
        }
    }

    MklModel zero;
    zero.alpha = Vector::Zero(18);
    zero.bias = 0.25;
    zero.weights = Vector::Zero(3);
    zero.spec = spec(Family::BlockOneNorm, 0.0, 3.0);
    zero.loss = squared(1.0);
    double expect = 0.0;
    for (Index i = 0; i < 18; ++i) expect += 0.5 * (y(i) - 0.25) * (y(i) - 0.25);
    CHECK(block_norm_objective(zero, bank, y) == doctest::Approx(expect).epsilon(1e-14));

    const KernelBank single = support::bank_of({bank.gram(0)});
    MklModel one;
    one.alpha = support::random_vector(18, rng);
    one.bias = -0.1;
    one.weights = Vector::Constant(1, 0.7);
    one.spec = spec(Family::BlockOneNorm, 0.0, 2.0);
    one.loss = squared(1.0);
    const Vector f1 = 0.7 * (bank.gram(0) * one.alpha);
    const double norm = std::sqrt(0.49 * one.alpha.dot(bank.gram(0) * one.alpha));
    double loss = 0.0;
    for (Index i = 0; i < 18; ++i) loss += 0.5 * std::pow(y(i) - f1(i) + 0.1, 2);
    CHECK(block_norm_objective(one, single, y) == doctest::Approx(loss + 2.0 * norm).epsilon(1e-10));
}

TEST_CASE("alternating fit descends monotonically") {
    std::vector<RegularizerSpec> specs = {spec(Family::BlockOneNorm),         spec(Family::LpNormTikhonov, 2.0),
                                          spec(Family::LpNormTikhonov, 1.5),  spec(Family::UniformWeight),
                                          spec(Family::ElasticNet, 0.5),      spec(Family::LpNormIvanov, 1.0),
                                          spec(Family::LpNormIvanov, 2.0),    spec(Family::Wedge),
                                          spec(Family::LpNormTikhonov, 0.5)};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        const KernelBank bank = support::random_bank(20, 3, rng);
        Vector y = support::random_vector(20, rng);
        const bool logit = seed % 2 == 1;
        if (logit) y = y.array().sign();
        const LossSpec loss = logit ? logistic() : squared(1.0);
        for (const auto& s : specs) {
            if (!has_convex_h(s)) continue;
            FitResult r;
            REQUIRE_NOTHROW(r = fit(bank, y, s, loss));
            for (std::size_t k = 1; k < r.trace.rows.size(); ++k) {
                const double prev = r.trace.rows[k - 1].objective;
                CHECK(r.trace.rows[k].objective <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
            }
        }
    }
}

TEST_CASE("alternating fit matches direct block-norm minimization") {
    std::mt19937_64 rng(127);
    const KernelBank bank = support::random_bank(20, 3, rng);
    const Vector y = support::random_vector(20, rng);
    const std::vector<Matrix> Ks = {bank.gram(0), bank.gram(1), bank.gram(2)};
    const double C = 1.0, s2 = 1.0;

    struct Case {
        RegularizerSpec s;
        std::function<double(double)> phi;
        std::function<double(double)> dpsi;  // derivative of r -> phi(r^2)
    };
    const std::vector<Case> cases = {
        {spec(Family::BlockOneNorm), [](double x) { return std::sqrt(x); }, [](double) { return 1.0; }},
        {spec(Family::LpNormTikhonov, 2.0), [](double x) { return 0.75 * std::pow(x, 2.0 / 3.0); },
         [](double r) { return std::cbrt(r); }},
        {spec(Family::ElasticNet, 0.5), [](double x) { return 0.5 * std::sqrt(x) + 0.25 * x; },
         [](double r) { return 0.5 + 0.5 * r; }},
    };
    for (const auto& c : cases) {
        const FitResult r = fit(bank, y, c.s, squared(s2));
        const double ours = block_norm_objective(r.model, bank, y);
        const auto direct = support::block_norm_minimize(
            Ks, y, C, s2, c.phi, [&](double v, double t) { return support::radial_bisect(v, t, c.dpsi); });
        CHECK(ours == doctest::Approx(direct.value).epsilon(1e-4));
        CHECK(ours <= direct.value * (1.0 + 1e-4));
    }
}

TEST_CASE("multitask fit keeps tasks apart") {
    std::mt19937_64 rng(131);
    DataMatrix data;
    data.X = support::random_matrix(16, 2, rng);
    for (Index i = 0; i < 16; ++i) data.tasks.push_back(1 + static_cast<int>(i % 3 == 0));
    KernelDescriptor base;
    base.family = KernelFamily::Gaussian;
    const KernelBank bank = build_multitask_bank(base, data, 2);
    const Vector y = support::random_vector(16, rng);
    const FitResult r = fit(bank, y, spec(Family::MultiTaskIvanov, 1.0), squared(1.0));
    const Matrix F = component_functions(r.model, bank);
    for (Index i = 0; i < 16; ++i) {
        const Index own = data.tasks[i] - 1;
        CHECK(F(i, 1 - own) == 0.0);
        CHECK(F(i, own) + F(i, 2) + r.model.bias == doctest::Approx(r.model.in_sample_scores(i)).epsilon(1e-12));
    }
}

TEST_CASE("UniformWeight scale relation") {
    std::mt19937_64 rng(137);
    const KernelBank bank = support::random_bank(12, 2, rng);
    const Vector y = support::random_vector(12, rng);
    const double c = 3.7;
    const KernelBank scaled = support::bank_of({c * bank.gram(0), c * bank.gram(1)});
    const FitResult a = fit(bank, y, spec(Family::UniformWeight, 0.0, 0.4), squared(1.0));
    const FitResult b = fit(scaled, y, spec(Family::UniformWeight, 0.0, 0.4 * c), squared(1.0));
    CHECK((a.model.in_sample_scores - b.model.in_sample_scores).norm() <= 1e-10 * a.model.in_sample_scores.norm());
    const Vector xa = block_norms(a.model, bank), xb = block_norms(b.model, scaled);
    CHECK((xb - xa / c).norm() <= 1e-10 * xa.norm());
}

TEST_CASE("fit rejects malformed input") {
    std::mt19937_64 rng(139);
    const KernelBank bank = support::random_bank(6, 2, rng);
    CHECK_THROWS_AS(fit(bank, Vector::Zero(5), spec(Family::BlockOneNorm), squared(1.0)), ValidationError);
    CHECK_THROWS_AS(fit(bank, Vector::Zero(6), spec(Family::LpNormTikhonov, -1.0), squared(1.0)), ValidationError);
    CHECK_THROWS_AS(fit(bank, Vector::Zero(6), spec(Family::BlockOneNorm, 0.0, 0.0), squared(1.0)), ValidationError);
    FitOptions o;
    o.initial_weights = Vector::Ones(3);
    CHECK_THROWS_AS(fit(bank, Vector::Zero(6), spec(Family::BlockOneNorm), squared(1.0), o), ValidationError);
}
