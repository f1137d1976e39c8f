#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbid/qtransform.hpp"

using namespace kbid;

namespace {

Eigen::MatrixXd column(const std::vector<double>& v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
}

// two-sided Kolmogorov-Smirnov statistic against the uniform distribution
double ks_uniform(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double hi = (static_cast<double>(i) + 1.0) / n - v[i];
        double lo = v[i] - static_cast<double>(i) / n;
        d = std::max(d, std::max(hi, lo));
    }
    return d;
}

Eigen::MatrixXd lognormal_matrix(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = std::exp(0.5 * rng.normal() + 0.1 * j);
    return m;
}

}  // namespace

TEST_CASE("integers 1..100 map their median to one half") {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i + 1.0;
    QuantileModel model = fit_quantile(column(v), 100);

    Eigen::MatrixXd probe(1, 1);
    probe(0, 0) = 50.5;
    CHECK(apply_quantile(model, probe)(0, 0) == doctest::Approx(0.5).epsilon(1e-9));

    // the knot list brackets the median value with probability one half
    bool found = false;
    for (const auto& knot : model.features[0])
        if (std::abs(knot.prob - 0.5) < 1e-9) {
            found = true;
            CHECK(knot.value == doctest::Approx(50.5).epsilon(1e-9));
        }
    CHECK(found);
}

TEST_CASE("boundary behavior") {
    std::vector<double> v{3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 5.8, 7.0, 8.1};
    QuantileModel model = fit_quantile(column(v), 10);

    Eigen::MatrixXd probe(4, 1);
    probe << 1.0, 9.0, 100.0, -5.0;
    Eigen::MatrixXd out = apply_quantile(model, probe);
    CHECK(out(0, 0) == doctest::Approx(0.0));   // training minimum
    CHECK(out(1, 0) == doctest::Approx(1.0));   // training maximum
    CHECK(out(2, 0) == doctest::Approx(1.0));   // above the range clamps
    CHECK(out(3, 0) == doctest::Approx(0.0));   // below the range clamps
}

TEST_CASE("constant feature maps to one half") {
    Eigen::MatrixXd m(5, 2);
    m.col(0).setConstant(7.0);
    m.col(1) << 1, 2, 3, 4, 5;
    QuantileModel model = fit_quantile(m, 5);

    Eigen::MatrixXd probe(3, 2);
    probe << 7.0, 2.0, 0.0, 3.0, 100.0, 4.0;
    Eigen::MatrixXd out = apply_quantile(model, probe);
    CHECK(out(0, 0) == doctest::Approx(0.5));
    CHECK(out(1, 0) == doctest::Approx(0.5));
    CHECK(out(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("quantile count clamps to the row count and reports it") {
    Eigen::MatrixXd m = lognormal_matrix(50, 2, 3);
    bool clamped = false;
    QuantileModel model = fit_quantile(m, 1000, &clamped);
    CHECK(clamped);
    CHECK(model.n_quantiles == 50);

    clamped = true;
    QuantileModel model2 = fit_quantile(m, 20, &clamped);
    CHECK_FALSE(clamped);
    CHECK(model2.n_quantiles == 20);

    // the parameterless overload defaults to min(1000, rows)
    QuantileModel model3 = fit_quantile(m);
    CHECK(model3.n_quantiles == 50);
}

TEST_CASE("self-application is close to uniform") {
    Eigen::MatrixXd m = lognormal_matrix(200, 3, 17);
    QuantileModel model = fit_quantile(m);
    Eigen::MatrixXd out = apply_quantile(model, m);
    for (int j = 0; j < 3; ++j) {
        std::vector<double> col(200);
        for (int i = 0; i < 200; ++i) col[static_cast<std::size_t>(i)] = out(i, j);
        CHECK(ks_uniform(col) <= 0.05);
    }
}

TEST_CASE("output stays in the unit interval and preserves order") {
    Eigen::MatrixXd m = lognormal_matrix(120, 2, 23);
    QuantileModel model = fit_quantile(m);

    Eigen::MatrixXd fresh = lognormal_matrix(80, 2, 24);
    Eigen::MatrixXd out = apply_quantile(model, fresh);
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) {
            CHECK(out(i, j) >= 0.0);
            CHECK(out(i, j) <= 1.0);
        }

    // monotone per feature: sorted inputs produce sorted outputs
    for (int j = 0; j < 2; ++j) {
        std::vector<double> col(static_cast<std::size_t>(fresh.rows()));
        for (int i = 0; i < fresh.rows(); ++i) col[static_cast<std::size_t>(i)] = fresh(i, j);
        std::sort(col.begin(), col.end());
        double prev = -1.0;
        for (double x : col) {
            Eigen::MatrixXd probe(1, 2);
            probe.setZero();
            probe(0, j) = x;
            double y = apply_quantile(model, probe)(0, j);
            CHECK(y >= prev);
            prev = y;
        }
    }
}

TEST_CASE("ranks of training rows survive the transform") {
    Eigen::MatrixXd m = lognormal_matrix(60, 1, 31);
    QuantileModel model = fit_quantile(m);
    Eigen::MatrixXd out = apply_quantile(model, m);
    for (int a = 0; a < 60; ++a)
        for (int b = 0; b < 60; ++b)
            if (m(a, 0) < m(b, 0)) CHECK(out(a, 0) <= out(b, 0));
}

TEST_CASE("fit is deterministic") {
    Eigen::MatrixXd m = lognormal_matrix(90, 4, 5);
    QuantileModel a = fit_quantile(m, 40);
    QuantileModel b = fit_quantile(m, 40);
    REQUIRE(a.features.size() == b.features.size());
    for (std::size_t f = 0; f < a.features.size(); ++f) {
        REQUIRE(a.features[f].size() == b.features[f].size());
        for (std::size_t k = 0; k < a.features[f].size(); ++k) {
            CHECK(a.features[f][k].value == b.features[f][k].value);
            CHECK(a.features[f][k].prob == b.features[f][k].prob);
        }
    }
}

TEST_CASE("row helper matches the matrix path") {
    Eigen::MatrixXd m = lognormal_matrix(40, 3, 8);
    QuantileModel model = fit_quantile(m);
    Eigen::VectorXd row = m.row(7).transpose();
    Eigen::VectorXd via_row = apply_quantile_row(model, row);
    Eigen::MatrixXd via_matrix = apply_quantile(model, m.row(7));
    for (int j = 0; j < 3; ++j) CHECK(via_row(j) == doctest::Approx(via_matrix(0, j)));
}

TEST_CASE("duplicate-heavy features collapse knots but stay monotone") {
    std::vector<double> v{1, 1, 1, 1, 2, 2, 2, 3, 3, 10};
    QuantileModel model = fit_quantile(column(v), 10);
    const auto& knots = model.features[0];
    for (std::size_t i = 1; i < knots.size(); ++i) {
        CHECK(knots[i].value > knots[i - 1].value);
        CHECK(knots[i].prob > knots[i - 1].prob);
    }
    Eigen::MatrixXd probe(3, 1);
    probe << 1.0, 2.0, 10.0;
    Eigen::MatrixXd out = apply_quantile(model, probe);
    CHECK(out(0, 0) < out(1, 0));
    CHECK(out(1, 0) < out(2, 0));
    CHECK(out(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("model round-trips through JSON") {
    Eigen::MatrixXd m = lognormal_matrix(30, 2, 12);
    QuantileModel model = fit_quantile(m, 15);
    QuantileModel back = QuantileModel::from_json(model.to_json());
    REQUIRE(back.features.size() == model.features.size());
    CHECK(back.n_quantiles == model.n_quantiles);
    Eigen::MatrixXd probe = lognormal_matrix(10, 2, 13);
    Eigen::MatrixXd a = apply_quantile(model, probe);
    Eigen::MatrixXd b = apply_quantile(back, probe);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("preconditions") {
    Eigen::MatrixXd empty(0, 2);
    CHECK_THROWS_AS(fit_quantile(empty, 10), std::invalid_argument);
    Eigen::MatrixXd m = lognormal_matrix(10, 2, 2);
    CHECK_THROWS_AS(fit_quantile(m, 0), std::invalid_argument);
    QuantileModel model = fit_quantile(m, 5);
    Eigen::MatrixXd wrong(3, 5);
    wrong.setZero();
    CHECK_THROWS_AS(apply_quantile(model, wrong), std::invalid_argument);
}
