#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "iotad/dataset.hpp"
#include "iotad/errors.hpp"
#include "iotad/ocsvm.hpp"
#include "oracles.hpp"

using namespace iotad;
using namespace iotad::ocsvm;

namespace {

OcSvmParams params_with(double nu, double gamma) {
    OcSvmParams p;
    p.nu = nu;
    p.gamma = gamma;
    return p;
}

// Feasibility plus the maximal KKT pair violation over the whole training set.
double kkt_violation(const FitDiagnostics& diag, double bound) {
    double up = -INFINITY, low = INFINITY;
    for (std::size_t i = 0; i < diag.alphas.size(); ++i) {
        const double g = diag.decision_values[i];
        if (diag.alphas[i] < bound) up = std::max(up, -g);
        if (diag.alphas[i] > 0.0) low = std::min(low, -g);
    }
    return up - low;
}

}  // namespace

TEST_CASE("rbf kernel") {
    const std::vector<double> x{1.0, 2.0};
    CHECK(rbf_kernel(x, x, 3.0) == 1.0);
    CHECK(rbf_kernel(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0}, 1.0) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(rbf_kernel(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0}, 0.5) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    const std::vector<double> far{100.0, 0.0};
    CHECK(rbf_kernel(std::vector<double>{0.0, 0.0}, far, 1.0) == 0.0);
}

TEST_CASE("gamma scale resolution") {
    const Matrix m{{0.0, 0.0}, {2.0, 4.0}};  // variances 1 and 4
    CHECK(resolve_gamma(m, {}) == doctest::Approx(1.0 / (2.0 * 2.5)));
    CHECK(resolve_gamma(m, params_with(0.5, 0.7)) == 0.7);
    CHECK(resolve_gamma(Matrix{{1.0}, {1.0}}, {}) == 1.0);
}

TEST_CASE("two points with nu one are pinned at the bound") {
    const Matrix x{{0.0}, {1.0}};
    FitDiagnostics diag;
    const auto model = fit_ocsvm(x, params_with(1.0, 1.0), &diag);
    CHECK(diag.alphas[0] == doctest::Approx(0.5));
    CHECK(diag.alphas[1] == doctest::Approx(0.5));
    CHECK(model.support_vectors.rows() == 2);
    CHECK(model.rho == doctest::Approx(0.5 * (1.0 + std::exp(-1.0))));
}

TEST_CASE("mirror points share the mass equally") {
    const Matrix x{{-1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}};
    FitDiagnostics diag;
    fit_ocsvm(x, params_with(0.5, 0.5), &diag);
    CHECK(diag.alphas[0] == doctest::Approx(diag.alphas[1]).epsilon(1e-6));
    CHECK(std::accumulate(diag.alphas.begin(), diag.alphas.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("brute force oracle on closed-form cases") {
    // Identical points: K is all ones, every feasible point has objective 1/2.
    const Matrix same{{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}};
    const auto a = brute_force_dual(same, params_with(1.0, 2.0), 60);
    CHECK(oracle::rbf_dual_objective(same, a, 2.0) == doctest::Approx(0.5));

    // Equilateral triangle: the symmetric point a = 1/3 is optimal.
    const double s = std::sqrt(3.0) / 2.0;
    const Matrix tri{{0.0, 0.0}, {1.0, 0.0}, {0.5, s}};
    const auto t = brute_force_dual(tri, params_with(0.5, 1.0), 60);
    for (double v : t) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    CHECK_THROWS(brute_force_dual(Matrix(7, 1), params_with(1.0, 1.0), 10));
}

TEST_CASE("solver matches the brute force oracle on small problems") {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + gen() % 5;
        const std::size_t d = 1 + gen() % 3;
        const Matrix x = oracle::random_matrix(gen, n, d);
        const double nu = trial % 2 ? 1.0 : 0.5;
        auto p = params_with(nu, 0.5 + static_cast<double>(gen() % 40) / 10.0);
        p.tolerance = 1e-9;
        FitDiagnostics diag;
        fit_ocsvm(x, p, &diag);
        const auto reference = brute_force_dual(x, p, 40);
        CHECK(oracle::rbf_dual_objective(x, diag.alphas, *p.gamma) <=
              oracle::rbf_dual_objective(x, reference, *p.gamma) + 1e-6);
        CHECK(diag.objective == doctest::Approx(oracle::rbf_dual_objective(x, diag.alphas, *p.gamma)).epsilon(1e-12));
    }
}

TEST_CASE("decision values and prediction boundary") {
    const Matrix x{{0.0}, {1.0}};
    const auto model = fit_ocsvm(x, params_with(1.0, 1.0));
    CHECK(decision_value(model, std::vector<double>{0.0}) == doctest::Approx(0.0).scale(1.0));
    CHECK(decision_value(model, std::vector<double>{0.5}) > 0.0);
    CHECK(decision_value(model, std::vector<double>{5.0}) < 0.0);
    CHECK(predict(model, Matrix{{0.5}, {5.0}}) == Labels{0, 1});

    OcSvmModel hand = model;
    hand.rho = decision_value(model, std::vector<double>{0.5}) + hand.rho;  // f(0.5) == 0 exactly
    CHECK(predict(hand, Matrix{{0.5}}) == Labels{0});
}

TEST_CASE("feasibility, KKT and the nu property on synthetic data") {
    SyntheticSpec spec;
    spec.normal_count = 400;
    spec.anomaly_count = 0;
    spec.dimension = 3;
    for (double nu : {0.05, 0.2, 0.5}) {
        const auto frame = generate_synthetic(spec, 3);
        OcSvmParams p;
        p.nu = nu;
        FitDiagnostics diag;
        const auto model = fit_ocsvm(frame.features, p, &diag);
        const double bound = model.alpha_bound();
        REQUIRE(diag.converged);
        double sum = 0.0;
        std::size_t at_bound = 0, nonzero = 0;
        for (double a : diag.alphas) {
            CHECK(a >= 0.0);
            CHECK(a <= bound);
            sum += a;
            at_bound += a == bound;
            nonzero += a > 0.0;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(kkt_violation(diag, bound) <= p.tolerance + 1e-12);
        CHECK(diag.max_violation <= p.tolerance);
        CHECK(model.support_vectors.rows() == nonzero);
        const double n = 400.0;
        CHECK(static_cast<double>(at_bound) / n <= nu + 1e-9);
        CHECK(static_cast<double>(nonzero) / n >= nu - 1e-9);

        // Fraction of training outliers is at most nu, up to the tolerance band.
        std::size_t outside = 0;
        for (double f : diag.decision_values) outside += f < -p.tolerance;
        CHECK(static_cast<double>(outside) / n <= nu + 1e-9);
    }
}

TEST_CASE("fit is deterministic") {
    std::mt19937_64 gen(12);
    const Matrix x = oracle::random_matrix(gen, 150, 2);
    const auto a = fit_ocsvm(x, {});
    const auto b = fit_ocsvm(x, {});
    CHECK(serialize(a) == serialize(b));
}

TEST_CASE("flags separable synthetic anomalies") {
    SyntheticSpec spec;
    spec.normal_count = 100;
    spec.anomaly_count = 10;
    double flagged = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto frame = generate_synthetic(spec, seed);
        const auto model = fit_ocsvm(filter_normal(frame).features, {});
        const auto labels = predict(model, frame.features);
        for (std::size_t i = 100; i < 110; ++i) flagged += labels[i];
    }
    CHECK(flagged / 10.0 >= 8.0);
}

TEST_CASE("fit errors") {
    CHECK_THROWS_AS(fit_ocsvm(Matrix(0, 2), {}), DataError);
    CHECK_THROWS_AS(fit_ocsvm(Matrix{{1.0}, {2.0}}, {}), ConfigError);  // nu * n < 1
    CHECK_THROWS_AS(fit_ocsvm(Matrix{{1.0}, {NAN}}, params_with(1.0, 1.0)), DataError);
    CHECK_THROWS_AS(fit_ocsvm(Matrix{{1.0}, {2.0}}, params_with(0.0, 1.0)), ConfigError);
    CHECK_THROWS_AS(fit_ocsvm(Matrix{{1.0}, {2.0}}, params_with(1.5, 1.0)), ConfigError);
    CHECK_THROWS_AS(fit_ocsvm(Matrix{{1.0}, {2.0}}, params_with(1.0, -1.0)), ConfigError);
    const auto model = fit_ocsvm(Matrix{{1.0}, {2.0}}, params_with(1.0, 1.0));
    CHECK_THROWS_AS(decision_value(model, std::vector<double>{1.0, 2.0}), DataError);
}

TEST_CASE("row cache path agrees with the full kernel path") {
    std::mt19937_64 gen(77);
    const Matrix x = oracle::random_matrix(gen, 4200, 2);
    OcSvmParams p;
    p.nu = 0.3;
    FitDiagnostics diag;
    const auto model = fit_ocsvm(x, p, &diag);
    CHECK(diag.converged);
    CHECK(kkt_violation(diag, model.alpha_bound()) <= p.tolerance + 1e-12);
    CHECK(std::accumulate(diag.alphas.begin(), diag.alphas.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    // Spot-check stored decision values against direct evaluation.
    for (std::size_t i = 0; i < x.rows(); i += 397) {
        CHECK(diag.decision_values[i] == doctest::Approx(decision_value(model, x.row(i))).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("OSv1 serialization") {
    std::mt19937_64 gen(5);
    const Matrix x = oracle::random_matrix(gen, 200, 3);
    const auto model = fit_ocsvm(x, {});
    const auto bytes = serialize(model);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "OSv1");
    const auto back = deserialize(bytes);
    const Matrix probes = oracle::random_matrix(gen, 50, 3, -1.0, 2.0);
    const auto a = decision_values(model, probes);
    const auto b = decision_values(back, probes);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]));
    CHECK(serialize(back) == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize(bad), DataError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 8);
    CHECK_THROWS_AS(deserialize(truncated), DataError);

    OcSvmParams wide;
    wide.nu = 0.5;
    CHECK(serialize(fit_ocsvm(x, wide)).size() > bytes.size());
}
