#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbid/unloc.hpp"

using namespace kbid;

namespace {

Eigen::MatrixXd make_anchors(const std::vector<std::pair<double, double>>& pts) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = pts[i].first;
        m(static_cast<Eigen::Index>(i), 1) = pts[i].second;
    }
    return m;
}

// cross-distance matrix from plain geometry, optionally warped by a
// strictly increasing function of the true Euclidean distances
template <typename F>
CrossDistanceMatrix geometric_cross(const Eigen::MatrixXd& anchors, const Eigen::VectorXd& target,
                                    F warp) {
    const int k = static_cast<int>(anchors.rows());
    CrossDistanceMatrix cross;
    cross.known_known.resize(k, k);
    cross.known_test.resize(k);
    for (int l = 0; l < k; ++l) {
        for (int m = 0; m < k; ++m)
            cross.known_known(l, m) = warp((anchors.row(l) - anchors.row(m)).norm());
        cross.known_test(l) = warp((anchors.row(l).transpose() - target).norm());
    }
    return cross;
}

int nearest_anchor(const Eigen::MatrixXd& anchors, const Eigen::VectorXd& pos) {
    int arg = 0;
    double best = (anchors.row(0).transpose() - pos).norm();
    for (int i = 1; i < anchors.rows(); ++i) {
        double d = (anchors.row(i).transpose() - pos).norm();
        if (d < best) {
            best = d;
            arg = i;
        }
    }
    return arg;
}

std::vector<int> ranking(const Eigen::VectorXd& v) {
    std::vector<int> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
    return idx;
}

}  // namespace

TEST_CASE("ordinal_comparisons") {
    SUBCASE("sorted distances encode the full total order") {
        Eigen::MatrixXd d(1, 3);
        d << 1.0, 2.0, 3.0;
        OrdinalData o = ordinal_comparisons(d);
        REQUIRE(o.comparisons.size() == 1);
        CHECK(o.n_entities == 3);
        const auto& c = o.comparisons[0];
        CHECK(c(0, 1) == -1);
        CHECK(c(0, 2) == -1);
        CHECK(c(1, 2) == -1);
        CHECK(c(1, 0) == 1);
        CHECK(c(2, 0) == 1);
        CHECK(c(2, 1) == 1);
        for (int i = 0; i < 3; ++i) CHECK(c(i, i) == 0);
    }

    SUBCASE("equal distances give sign zero for that pair") {
        Eigen::MatrixXd d(1, 3);
        d << 2.0, 2.0, 5.0;
        OrdinalData o = ordinal_comparisons(d);
        CHECK(o.comparisons[0](0, 1) == 0);
        CHECK(o.comparisons[0](1, 0) == 0);
        CHECK(o.comparisons[0](0, 2) == -1);
    }

    SUBCASE("tie tolerance merges near-equal distances") {
        Eigen::MatrixXd d(1, 2);
        d << 1.0, 1.0 + 5e-10;
        OrdinalData tight = ordinal_comparisons(d, 1e-9);
        CHECK(tight.comparisons[0](0, 1) == 0);
        OrdinalData loose = ordinal_comparisons(d, 1e-11);
        CHECK(loose.comparisons[0](0, 1) == -1);
    }

    SUBCASE("three anchors plus a target yield six pairs per reference") {
        Eigen::MatrixXd d(3, 4);
        d << 0.0, 1.0, 2.0, 3.0,
             1.0, 0.0, 2.5, 1.5,
             2.0, 2.5, 0.0, 0.5;
        OrdinalData o = ordinal_comparisons(d);
        REQUIRE(o.comparisons.size() == 3);
        for (const auto& c : o.comparisons) {
            int pairs = 0;
            for (int a = 0; a < 4; ++a)
                for (int b = a + 1; b < 4; ++b) {
                    ++pairs;
                    CHECK(c(a, b) == -c(b, a));  // antisymmetry
                    CHECK(c(a, b) != 0);         // all values distinct here
                }
            CHECK(pairs == 6);
        }
    }

    SUBCASE("antisymmetry holds on random input") {
        Rng rng(7);
        Eigen::MatrixXd d(4, 5);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 5; ++c) d(r, c) = rng.uniform(0.0, 3.0);
        OrdinalData o = ordinal_comparisons(d);
        for (const auto& c : o.comparisons)
            for (int a = 0; a < 5; ++a)
                for (int b = 0; b < 5; ++b) CHECK(c(a, b) == -c(b, a));
    }

    SUBCASE("rejects degenerate shapes") {
        Eigen::MatrixXd one(1, 1);
        one << 1.0;
        CHECK_THROWS_AS(ordinal_comparisons(one), std::invalid_argument);
        Eigen::MatrixXd ok(1, 2);
        ok << 1.0, 2.0;
        CHECK_THROWS_AS(ordinal_comparisons(ok, -1.0), std::invalid_argument);
    }
}

TEST_CASE("rank_aggregate") {
    SUBCASE("consistent order is preserved exactly") {
        Eigen::MatrixXd d(1, 3);
        d << 1.0, 2.0, 3.0;
        ProxyScores s = rank_aggregate(ordinal_comparisons(d));
        CHECK(s.proxies(0, 0) == doctest::Approx(0.0));
        CHECK(s.proxies(0, 1) == doctest::Approx(0.5));
        CHECK(s.proxies(0, 2) == doctest::Approx(1.0));
        CHECK(s.proxies(0, 0) < s.proxies(0, 1));
        CHECK(s.proxies(0, 1) < s.proxies(0, 2));
    }

    SUBCASE("all ties score one half") {
        Eigen::MatrixXd d(2, 4);
        d.setConstant(3.25);
        ProxyScores s = rank_aggregate(ordinal_comparisons(d));
        for (int r = 0; r < 2; ++r)
            for (int e = 0; e < 4; ++e) CHECK(s.proxies(r, e) == doctest::Approx(0.5));
    }

    SUBCASE("score ranking equals distance ranking") {
        Eigen::MatrixXd d(1, 4);
        d << 0.1, 0.4, 0.2, 0.9;
        ProxyScores s = rank_aggregate(ordinal_comparisons(d));
        CHECK(ranking(s.proxies.row(0).transpose()) == ranking(d.row(0).transpose()));
    }

    SUBCASE("proxies are invariant under strictly increasing distance transforms") {
        Rng rng(11);
        for (int inst = 0; inst < 20; ++inst) {
            Eigen::MatrixXd d(3, 5);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 5; ++c) d(r, c) = rng.uniform(0.1, 4.0);
            ProxyScores base = rank_aggregate(ordinal_comparisons(d));
            Eigen::MatrixXd affine = (2.0 * d.array() + 1.0).matrix();
            Eigen::MatrixXd squared = d.array().square().matrix();
            Eigen::MatrixXd expd = d.array().exp().matrix();
            CHECK(rank_aggregate(ordinal_comparisons(affine)).proxies.isApprox(base.proxies, 1e-12));
            CHECK(rank_aggregate(ordinal_comparisons(squared)).proxies.isApprox(base.proxies, 1e-12));
            CHECK(rank_aggregate(ordinal_comparisons(expd)).proxies.isApprox(base.proxies, 1e-12));
        }
    }

    SUBCASE("empty ordinal data is rejected") {
        CHECK_THROWS_AS(rank_aggregate(OrdinalData{}), std::invalid_argument);
    }
}

TEST_CASE("fit_distance_map") {
    SUBCASE("identity pairs fit slope one, intercept zero") {
        std::vector<double> d{0.5, 1.0, 2.0, 3.5, 4.0};
        DistanceMap map = fit_distance_map(d, d);
        CHECK(map.slope == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(map.intercept == doctest::Approx(0.0).epsilon(1e-9));
        CHECK_FALSE(map.slope_clamped);
        CHECK(map.apply(2.7) == doctest::Approx(2.7).epsilon(1e-9));
    }

    SUBCASE("proxies at 2d + 1 invert to slope one half, intercept minus one half") {
        std::vector<double> dists{0.0, 1.0, 2.0, 3.0};
        std::vector<double> proxies;
        for (double d : dists) proxies.push_back(2.0 * d + 1.0);
        DistanceMap map = fit_distance_map(proxies, dists);
        CHECK(map.slope == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(map.intercept == doctest::Approx(-0.5).epsilon(1e-9));
        CHECK(map.apply(5.0) == doctest::Approx(2.0).epsilon(1e-9));
    }

    SUBCASE("all-equal proxies are rejected") {
        std::vector<double> p{1.0, 1.0, 1.0};
        std::vector<double> d{0.0, 1.0, 2.0};
        CHECK_THROWS_AS(fit_distance_map(p, d), std::invalid_argument);
    }

    SUBCASE("negative trend clamps the slope and flags it") {
        std::vector<double> p{0.0, 1.0, 2.0};
        std::vector<double> d{2.0, 1.0, 0.0};
        DistanceMap map = fit_distance_map(p, d);
        CHECK(map.slope > 0.0);
        CHECK(map.slope_clamped);
    }

    SUBCASE("isotonic mode pools adjacent violators into a monotone map") {
        std::vector<double> p{0.0, 1.0, 2.0, 3.0};
        std::vector<double> d{1.0, 3.0, 2.0, 5.0};
        DistanceMap map = fit_distance_map(p, d, true);
        CHECK(map.isotonic);
        REQUIRE(map.knots_dist.size() >= 2);
        for (std::size_t i = 1; i < map.knots_dist.size(); ++i)
            CHECK(map.knots_dist[i] >= map.knots_dist[i - 1]);
        // the 3,2 violation pools to 2.5 at proxy 1.5
        CHECK(map.apply(1.5) == doctest::Approx(2.5).epsilon(1e-9));
        CHECK(map.apply(0.0) == doctest::Approx(1.0).epsilon(1e-9));
        // clamps outside the fitted range
        CHECK(map.apply(-10.0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(map.apply(10.0) == doctest::Approx(5.0).epsilon(1e-9));
    }

    SUBCASE("isotonic mode reproduces already monotone data") {
        std::vector<double> p{0.0, 0.25, 0.5, 1.0};
        std::vector<double> d{0.0, 1.0, 2.0, 4.0};
        DistanceMap map = fit_distance_map(p, d, true);
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(map.apply(p[i]) == doctest::Approx(d[i]).epsilon(1e-9));
        CHECK(map.apply(0.75) == doctest::Approx(3.0).epsilon(1e-9));
    }

    SUBCASE("input validation") {
        std::vector<double> p{0.0, 1.0};
        std::vector<double> d{0.0};
        CHECK_THROWS_AS(fit_distance_map(p, d), std::invalid_argument);
        CHECK_THROWS_AS(fit_distance_map({1.0}, {1.0}), std::invalid_argument);
    }
}

TEST_CASE("unfold") {
    SUBCASE("exact distances recover the target") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {4, 0}, {0, 3}});
        Eigen::VectorXd target(2);
        target << 1.0, 1.0;
        Eigen::VectorXd dists(3);
        for (int m = 0; m < 3; ++m) dists(m) = (anchors.row(m).transpose() - target).norm();
        Rng rng(1);
        LocalizationEstimate est = unfold(anchors, dists, rng);
        CHECK((est.position - target).norm() <= 1e-3);
        CHECK(est.objective <= 1e-6);
        CHECK_FALSE(est.ambiguous);
        CHECK_FALSE(est.single_anchor);
    }

    SUBCASE("zero distances pull the estimate to the anchor centroid") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {4, 0}, {0, 3}, {5, 5}});
        Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4);
        Rng rng(2);
        LocalizationEstimate est = unfold(anchors, zeros, rng);
        Eigen::VectorXd centroid = anchors.colwise().mean().transpose();
        CHECK((est.position - centroid).norm() <= 1e-3);
    }

    SUBCASE("two anchors in the plane are flagged ambiguous") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {4, 0}});
        Eigen::VectorXd dists(2);
        dists << 1.0, 3.0;
        Rng rng(3);
        LocalizationEstimate est = unfold(anchors, dists, rng);
        CHECK(est.ambiguous);
        CHECK_FALSE(est.single_anchor);
    }

    SUBCASE("collinear anchors are flagged ambiguous") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
        Eigen::VectorXd dists(4);
        dists << 1.0, 1.0, 1.0, 1.0;
        Rng rng(4);
        CHECK(unfold(anchors, dists, rng).ambiguous);
    }

    SUBCASE("single anchor returns that anchor") {
        Eigen::MatrixXd anchors = make_anchors({{2, 7}});
        Eigen::VectorXd dists(1);
        dists << 1.5;
        Rng rng(5);
        LocalizationEstimate est = unfold(anchors, dists, rng);
        CHECK(est.single_anchor);
        CHECK(est.ambiguous);
        CHECK(est.position(0) == doctest::Approx(2.0));
        CHECK(est.position(1) == doctest::Approx(7.0));
    }

    SUBCASE("returned objective is the best across restarts") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {4, 0}, {0, 3}, {6, 6}});
        Eigen::VectorXd dists(4);
        dists << 2.0, 3.0, 1.0, 5.0;
        Rng rng(6);
        LocalizationEstimate est = unfold(anchors, dists, rng, 10);
        REQUIRE_FALSE(est.restart_objectives.empty());
        for (double v : est.restart_objectives) CHECK(est.objective <= v + 1e-15);
        double lo = *std::min_element(est.restart_objectives.begin(),
                                      est.restart_objectives.end());
        CHECK(est.objective == doctest::Approx(lo));
    }

    SUBCASE("deterministic for a fixed seed") {
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {4, 0}, {0, 3}, {6, 6}});
        Eigen::VectorXd dists(4);
        dists << 2.0, 3.0, 1.0, 5.0;
        Rng a(42), b(42), c(43);
        Eigen::VectorXd pa = unfold(anchors, dists, a).position;
        Eigen::VectorXd pb = unfold(anchors, dists, b).position;
        CHECK(pa == pb);
        // a different seed may move random starts but not the converged optimum
        Eigen::VectorXd pc = unfold(anchors, dists, c).position;
        CHECK((pa - pc).norm() <= 1e-3);
    }

    SUBCASE("exact recovery holds across 100 random instances") {
        Rng rng(99);
        int hits = 0;
        for (int inst = 0; inst < 100; ++inst) {
            int k = 4 + static_cast<int>(rng.uniform(0.0, 2.999));
            Eigen::MatrixXd anchors(k, 2);
            for (int m = 0; m < k; ++m) {
                anchors(m, 0) = rng.uniform(0.0, 10.0);
                anchors(m, 1) = rng.uniform(0.0, 10.0);
            }
            Eigen::VectorXd target(2);
            target << rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0);
            Eigen::VectorXd dists(k);
            for (int m = 0; m < k; ++m) dists(m) = (anchors.row(m).transpose() - target).norm();
            Rng solver(1000 + inst);
            LocalizationEstimate est = unfold(anchors, dists, solver);
            if ((est.position - target).norm() <= 1e-3) ++hits;
        }
        CHECK(hits == 100);
    }

    SUBCASE("input validation") {
        Eigen::MatrixXd none(0, 2);
        Rng rng(1);
        CHECK_THROWS_AS(unfold(none, Eigen::VectorXd::Zero(0), rng), std::invalid_argument);
        Eigen::MatrixXd anchors = make_anchors({{0, 0}, {1, 0}});
        CHECK_THROWS_AS(unfold(anchors, Eigen::VectorXd::Zero(3), rng), std::invalid_argument);
    }
}

TEST_CASE("localize") {
    const Eigen::MatrixXd anchors = make_anchors({{0, 0}, {8, 1}, {2, 7}, {9, 9}});
    double diameter = 0.0;
    for (int a = 0; a < anchors.rows(); ++a)
        for (int b = 0; b < anchors.rows(); ++b)
            diameter = std::max(diameter, (anchors.row(a) - anchors.row(b)).norm());

    SUBCASE("distances proportional to geometry localize the target") {
        Eigen::VectorXd target(2);
        target << 3.0, 2.5;
        CrossDistanceMatrix cross =
            geometric_cross(anchors, target, [](double d) { return 3.0 * d; });
        Rng rng(21);
        LocalizationEstimate est = localize(anchors, cross, UnlocParams{}, rng);
        CHECK((est.position - target).norm() <= 0.05 * diameter);
    }

    SUBCASE("test equal to a template lands nearest that anchor") {
        for (int m = 0; m < anchors.rows(); ++m) {
            CrossDistanceMatrix cross = geometric_cross(
                anchors, anchors.row(m).transpose(), [](double d) { return d; });
            Rng rng(31 + m);
            LocalizationEstimate est = localize(anchors, cross, UnlocParams{}, rng);
            CHECK(nearest_anchor(anchors, est.position) == m);
        }
    }

    SUBCASE("squared-distance distortion leaves the decision unchanged") {
        Rng pick(55);
        for (int inst = 0; inst < 10; ++inst) {
            Eigen::VectorXd target(2);
            target << pick.uniform(0.0, 9.0), pick.uniform(0.0, 9.0);
            CrossDistanceMatrix plain =
                geometric_cross(anchors, target, [](double d) { return d; });
            CrossDistanceMatrix squared =
                geometric_cross(anchors, target, [](double d) { return d * d; });
            Rng ra(700 + inst), rb(700 + inst);
            int da = nearest_anchor(anchors, localize(anchors, plain, UnlocParams{}, ra).position);
            int db =
                nearest_anchor(anchors, localize(anchors, squared, UnlocParams{}, rb).position);
            CHECK(da == db);
        }
    }

    SUBCASE("anchor order is bookkeeping only") {
        Eigen::VectorXd target(2);
        target << 4.0, 4.0;
        CrossDistanceMatrix cross = geometric_cross(anchors, target, [](double d) { return d; });
        Rng ra(61);
        Eigen::VectorXd base = localize(anchors, cross, UnlocParams{}, ra).position;

        std::vector<int> perm{2, 0, 3, 1};
        Eigen::MatrixXd panchors(anchors.rows(), 2);
        CrossDistanceMatrix pcross;
        pcross.known_known.resize(anchors.rows(), anchors.rows());
        pcross.known_test.resize(anchors.rows());
        for (int i = 0; i < anchors.rows(); ++i) {
            panchors.row(i) = anchors.row(perm[static_cast<std::size_t>(i)]);
            pcross.known_test(i) = cross.known_test(perm[static_cast<std::size_t>(i)]);
            for (int j = 0; j < anchors.rows(); ++j)
                pcross.known_known(i, j) = cross.known_known(perm[static_cast<std::size_t>(i)],
                                                             perm[static_cast<std::size_t>(j)]);
        }
        Rng rb(61);
        Eigen::VectorXd permuted = localize(panchors, pcross, UnlocParams{}, rb).position;
        CHECK((base - permuted).norm() <= 1e-9);
    }

    SUBCASE("single anchor short-circuits") {
        Eigen::MatrixXd one = make_anchors({{3, 4}});
        CrossDistanceMatrix cross;
        cross.known_known = Eigen::MatrixXd::Zero(1, 1);
        cross.known_test = Eigen::VectorXd::Zero(1);
        Rng rng(71);
        nlohmann::json trace;
        LocalizationEstimate est = localize(one, cross, UnlocParams{}, rng, &trace);
        CHECK(est.single_anchor);
        CHECK(est.position(0) == doctest::Approx(3.0));
        CHECK(trace.contains("single_anchor"));
    }

    SUBCASE("trace captures every stage") {
        Eigen::VectorXd target(2);
        target << 5.0, 3.0;
        CrossDistanceMatrix cross = geometric_cross(anchors, target, [](double d) { return d; });
        Rng rng(81);
        nlohmann::json trace;
        localize(anchors, cross, UnlocParams{}, rng, &trace);
        CHECK(trace.contains("ordinal"));
        CHECK(trace.contains("proxies"));
        CHECK(trace.contains("map"));
        CHECK(trace.contains("estimated_distances"));
        CHECK(trace.contains("restart_objectives"));
        CHECK(trace.contains("objective"));
        CHECK(trace.contains("position"));
        CHECK(trace["ordinal"].size() == 4);            // one block per reference
        CHECK(trace["proxies"][0].size() == 5);         // anchors plus the test entity
        CHECK(trace["estimated_distances"].size() == 4);
        CHECK(trace["map"].contains("slope"));
    }

    SUBCASE("shape mismatches are rejected") {
        CrossDistanceMatrix bad;
        bad.known_known = Eigen::MatrixXd::Zero(3, 3);
        bad.known_test = Eigen::VectorXd::Zero(3);
        Rng rng(91);
        CHECK_THROWS_AS(localize(anchors, bad, UnlocParams{}, rng), std::invalid_argument);
        CrossDistanceMatrix bad2;
        bad2.known_known = Eigen::MatrixXd::Zero(4, 4);
        bad2.known_test = Eigen::VectorXd::Zero(3);
        CHECK_THROWS_AS(localize(anchors, bad2, UnlocParams{}, rng), std::invalid_argument);
    }
}
