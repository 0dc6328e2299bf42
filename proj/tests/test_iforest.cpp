#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"

#include "iotad/errors.hpp"
#include "iotad/iforest.hpp"
#include "oracles.hpp"

using namespace iotad;
using namespace iotad::iforest;

namespace {

// Walks the node graph recursively, summing leaf sizes and checking that each
// split lies strictly inside the range of the rows that reach it.
std::size_t audit_subtree(const IsolationTree& tree, std::size_t index, const Matrix& data,
                          const std::vector<std::size_t>& rows, std::size_t depth, std::size_t& max_depth) {
    const Node& n = tree.nodes[index];
    max_depth = std::max(max_depth, depth);
    if (n.is_leaf()) {
        CHECK(n.size == rows.size());
        return n.size;
    }
    double lo = INFINITY, hi = -INFINITY;
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
        lo = std::min(lo, data(r, n.feature));
        hi = std::max(hi, data(r, n.feature));
        (data(r, n.feature) < n.value ? left : right).push_back(r);
    }
    CHECK(n.value > lo);
    CHECK(n.value < hi);
    return audit_subtree(tree, index + 1, data, left, depth + 1, max_depth) +
           audit_subtree(tree, n.right, data, right, depth + 1, max_depth);
}

IsolationForestModel single_tree_model(IsolationTree tree, std::uint32_t psi, std::uint32_t dim) {
    IsolationForestModel m;
    m.params.tree_count = 1;
    m.subsample_size = psi;
    m.dimension = dim;
    m.trees = {std::move(tree)};
    m.compile();
    return m;
}

}  // namespace

TEST_CASE("expected_path_c closed form") {
    CHECK(expected_path_c(0) == 0.0);
    CHECK(expected_path_c(1) == 0.0);
    // Frozen from an arbitrary-precision evaluation of 2(ln(n-1) + 0.5772156649) - 2(n-1)/n.
    CHECK(expected_path_c(2) == doctest::Approx(0.1544313298).epsilon(1e-12));
    CHECK(expected_path_c(3) == doctest::Approx(1.2073923575865573).epsilon(1e-12));
    CHECK(expected_path_c(5) == doctest::Approx(2.3270200520397812).epsilon(1e-12));
    CHECK(std::abs(expected_path_c(256) - 10.2448) < 1e-3);
    CHECK(expected_path_c(256) == doctest::Approx(10.244770920116852).epsilon(1e-12));
}

TEST_CASE("expected_path_c is nondecreasing from 2") {
    for (std::uint64_t n = 2; n < 10000; ++n) REQUIRE(expected_path_c(n + 1) >= expected_path_c(n));
}

TEST_CASE("build_tree stop rules") {
    Rng rng(1);
    const auto one = build_tree(Matrix{{3.0, 4.0}}, 8, rng);
    REQUIRE(one.nodes.size() == 1);
    CHECK(one.nodes[0].is_leaf());
    CHECK(one.nodes[0].size == 1);

    const auto same = build_tree(Matrix{{1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}}, 8, rng);
    REQUIRE(same.nodes.size() == 1);
    CHECK(same.nodes[0].size == 5);

    const Matrix four{{0.1}, {0.4}, {0.7}, {0.9}};
    const auto tree = build_tree(four, 8, rng);
    std::size_t max_depth = 0;
    CHECK(audit_subtree(tree, 0, four, {0, 1, 2, 3}, 0, max_depth) == 4);

    CHECK_THROWS_AS(build_tree(Matrix(0, 2), 8, rng), DataError);
}

TEST_CASE("build_tree skips constant columns and respects the height limit") {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 30; ++trial) {
        Matrix data = oracle::random_matrix(gen, 1 + gen() % 64, 3);
        for (std::size_t i = 0; i < data.rows(); ++i) data(i, 1) = 0.25;  // constant column
        const std::size_t limit = 1 + gen() % 7;
        Rng rng(gen());
        const auto tree = build_tree(data, limit, rng);
        std::vector<std::size_t> rows(data.rows());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::size_t max_depth = 0;
        CHECK(audit_subtree(tree, 0, data, rows, 0, max_depth) == data.rows());
        CHECK(max_depth <= limit);
        CHECK(tree.height() == max_depth);
        for (const auto& n : tree.nodes) CHECK((n.is_leaf() || n.feature != 1));
    }
}

TEST_CASE("path_length counts edges plus the leaf adjustment") {
    CHECK(path_length(IsolationTree::leaf(1), std::vector<double>{0.0}) == 0.0);
    CHECK(path_length(IsolationTree::leaf(5), std::vector<double>{0.0}) == expected_path_c(5));

    // root: x0 < 0.5 ? (x1 < 0.2 ? leaf(1) : leaf(3)) : leaf(4)
    const auto inner = IsolationTree::join(1, 0.2, IsolationTree::leaf(1), IsolationTree::leaf(3));
    const auto tree = IsolationTree::join(0, 0.5, inner, IsolationTree::leaf(4));
    CHECK(path_length(tree, std::vector<double>{0.1, 0.9}) == doctest::Approx(2.0 + 1.2073923575865573));
    CHECK(path_length(tree, std::vector<double>{0.1, 0.1}) == 2.0);
    CHECK(path_length(tree, std::vector<double>{0.7, 0.1}) == doctest::Approx(1.0 + expected_path_c(4)));
    CHECK(tree.height() == 2);
    CHECK(tree.leaf_size_sum() == 8);

    // The compiled layout and forest scoring agree with the reference walk.
    const auto model = single_tree_model(tree, 8, 2);
    for (const auto& p : {std::vector<double>{0.1, 0.9}, std::vector<double>{0.1, 0.1}, std::vector<double>{0.7, 0.1}}) {
        CHECK(model.compiled[0].path_length(p) == path_length(tree, p));
        CHECK(score(model, p) == score_from_mean_path(path_length(tree, p), 8));
    }
}

TEST_CASE("score from mean path") {
    for (std::uint32_t psi : {2u, 10u, 256u}) {
        const double c = expected_path_c(psi);
        CHECK(score_from_mean_path(c, psi) == 0.5);
        CHECK(score_from_mean_path(0.0, psi) == 1.0);
        CHECK(score_from_mean_path(2.0 * c, psi) == 0.25);
    }
}

TEST_CASE("fit_iforest parameters, caps and determinism") {
    std::mt19937_64 gen(21);
    const Matrix big = oracle::random_matrix(gen, 1000, 3);
    const auto model = fit_iforest(big, {});
    CHECK(model.trees.size() == 100);
    CHECK(model.subsample_size == 256);
    CHECK(model.height_limit() == 8);
    for (const auto& t : model.trees) {
        CHECK(t.leaf_size_sum() == 256);
        CHECK(t.height() <= 8);
    }

    const Matrix small = oracle::random_matrix(gen, 100, 3);
    const auto capped = fit_iforest(small, {});
    CHECK(capped.subsample_size == 100);
    CHECK(capped.height_limit() == 7);
    for (const auto& t : capped.trees) {
        CHECK(t.leaf_size_sum() == 100);
        CHECK(t.height() <= 7);
    }

    IForestParams p;
    p.seed = 77;
    const auto a = fit_iforest(small, p);
    const auto b = fit_iforest(small, p);
    CHECK(a.trees == b.trees);
    const Matrix probes = oracle::random_matrix(gen, 50, 3, -0.5, 1.5);
    CHECK(score(a, probes) == score(b, probes));

    CHECK_THROWS_AS(fit_iforest(Matrix{{1.0, 2.0}}, {}), DataError);
    p.contamination = 0.6;
    CHECK_THROWS_AS(fit_iforest(small, p), ConfigError);
}

TEST_CASE("scores lie in (0, 1] and batch scoring matches single-point scoring") {
    std::mt19937_64 gen(2);
    const Matrix train = oracle::random_matrix(gen, 300, 4);
    IForestParams p;
    p.tree_count = 37;
    const auto model = fit_iforest(train, p);
    const Matrix probes = oracle::random_matrix(gen, 203, 4, -3.0, 4.0);
    const auto batch = score(model, probes);
    for (std::size_t i = 0; i < probes.rows(); ++i) {
        CHECK(batch[i] > 0.0);
        CHECK(batch[i] <= 1.0);
        CHECK(batch[i] == score(model, probes.row(i)));
        double mean = 0.0;
        for (const auto& t : model.trees) mean += path_length(t, probes.row(i));
        CHECK(batch[i] == doctest::Approx(score_from_mean_path(mean / 37.0, model.subsample_size)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(score(model, std::vector<double>{1.0}), DataError);
}

TEST_CASE("calibrate_threshold quantile rule") {
    std::vector<double> scores;
    for (int i = 1; i <= 10; ++i) scores.push_back(i / 10.0);
    const double t = calibrate_threshold(scores, 0.1);
    CHECK(t == doctest::Approx(oracle::quantile(scores, 0.9)).epsilon(1e-12));
    CHECK(t == doctest::Approx(0.91));
    CHECK(t > 0.9);
    CHECK(t < 1.0);

    const double strict = calibrate_threshold(scores, 0.0);
    for (double s : scores) CHECK(strict > s);

    CHECK(calibrate_threshold(std::vector<double>(7, 0.5), 0.2) == 0.5);
    CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, 0.1), DataError);

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> xs(1 + gen() % 50);
        for (auto& x : xs) x = u(gen);
        const double c = 0.5 * u(gen);
        CHECK(calibrate_threshold(xs, c) == doctest::Approx(oracle::quantile(xs, 1.0 - c)).epsilon(1e-12));
    }
}

TEST_CASE("classify uses a strict threshold") {
    std::mt19937_64 gen(6);
    auto model = fit_iforest(oracle::random_matrix(gen, 64, 2), {});
    const Matrix point{{0.3, 0.6}};
    const double s = score(model, point.row(0));
    model.threshold = s;
    CHECK(classify(model, point) == Labels{0});
    model.threshold = s - 1e-9;
    CHECK(classify(model, point) == Labels{1});
}

TEST_CASE("forest flags separable synthetic anomalies") {
    SyntheticSpec spec;
    spec.normal_count = 100;
    spec.anomaly_count = 10;
    spec.dimension = 4;
    double flagged = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto frame = generate_synthetic(spec, seed);
        IForestParams p;
        p.seed = seed;
        const auto model = fit_iforest(filter_normal(frame).features, p);
        const auto labels = classify(model, frame.features);
        double anomaly_sum = 0.0, normal_sum = 0.0;
        const auto scores = score(model, frame.features);
        for (std::size_t i = 0; i < frame.row_count(); ++i) {
            if (frame.labels[i] == 1) {
                flagged += labels[i];
                anomaly_sum += scores[i];
            } else {
                normal_sum += scores[i];
            }
        }
        CHECK(anomaly_sum / 10.0 > normal_sum / 100.0);
    }
    CHECK(flagged / 10.0 >= 8.0);
}

TEST_CASE("IFv1 serialization") {
    std::mt19937_64 gen(9);
    const Matrix train = oracle::random_matrix(gen, 500, 3);
    IForestParams p;
    p.seed = 5;
    const auto model = fit_iforest(train, p);
    const auto bytes = serialize(model);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "IFv1");

    const auto back = deserialize(bytes);
    const Matrix probes = oracle::random_matrix(gen, 100, 3, -1.0, 2.0);
    const auto s1 = score(model, probes);
    const auto s2 = score(back, probes);
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(std::bit_cast<std::uint64_t>(s1[i]) == std::bit_cast<std::uint64_t>(s2[i]));
    CHECK(back.threshold == model.threshold);
    CHECK(serialize(back) == bytes);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize(truncated), DataError);
    CHECK_THROWS_AS(deserialize(std::span(bytes).first(10)), DataError);
    auto bad_magic = bytes;
    bad_magic[3] = '2';
    CHECK_THROWS_AS(deserialize(bad_magic), DataError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize(trailing), DataError);

    p.tree_count = 200;
    CHECK(serialize(fit_iforest(train, p)).size() > bytes.size());
}
