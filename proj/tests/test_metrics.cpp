#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kbid/metrics.hpp"
#include "test_util.hpp"

using namespace kbid;

namespace {

Eigen::MatrixXd rows2(double a1, double a2, double b1, double b2) {
    Eigen::MatrixXd m(2, 2);
    m << a1, a2, b1, b2;
    return m;
}

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

// pair-counting ARI: walk every unordered pair once, tally co-membership,
// then apply the same adjusted formula the closed form uses
double ari_pair_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    long long together_both = 0, together_a = 0, together_b = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            bool same_a = a[i] == a[j];
            bool same_b = b[i] == b[j];
            together_a += same_a;
            together_b += same_b;
            together_both += same_a && same_b;
        }
    double total = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    double sum_ij = static_cast<double>(together_both);
    double sum_a = static_cast<double>(together_a);
    double sum_b = static_cast<double>(together_b);
    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return max_index == sum_ij ? 1.0 : 0.0;
    return (sum_ij - expected) / (max_index - expected);
}

}  // namespace

TEST_CASE("build_template") {
    SUBCASE("two mirrored samples") {
        UserTemplate t = build_template("u", rows2(0, 0, 2, 2));
        CHECK(t.mean(0) == doctest::Approx(1.0));
        CHECK(t.mean(1) == doctest::Approx(1.0));
        CHECK(t.mad(0) == doctest::Approx(1.0));
        CHECK(t.mad(1) == doctest::Approx(1.0));
        CHECK(t.n_samples == 2u);
        CHECK(t.user_id == "u");
    }

    SUBCASE("single sample floors the deviation") {
        Eigen::MatrixXd m(1, 3);
        m << 5, 6, 7;
        UserTemplate t = build_template("u", m);
        CHECK(t.mean(2) == doctest::Approx(7.0));
        for (int i = 0; i < 3; ++i) CHECK(t.mad(i) == kMadFloor);
    }

    SUBCASE("constant feature floors only that entry") {
        Eigen::MatrixXd m(3, 2);
        m << 1, 4, 1, 6, 1, 8;
        UserTemplate t = build_template("u", m);
        CHECK(t.mad(0) == kMadFloor);
        CHECK(t.mad(1) > 1.0);
    }

    SUBCASE("empty input is an error") {
        Eigen::MatrixXd m(0, 2);
        CHECK_THROWS_AS(build_template("u", m), std::invalid_argument);
    }
}

TEST_CASE("scaled_manhattan") {
    UserTemplate t;
    t.user_id = "u";
    t.mean = vec2(0, 0);
    t.mad = vec2(1, 2);

    SUBCASE("hand-computed case") {
        CHECK(std::abs(scaled_manhattan(t, vec2(2, 2)) - 1.5) <= 1e-12);
    }

    SUBCASE("zero exactly at the template mean") {
        CHECK(scaled_manhattan(t, vec2(0, 0)) == 0.0);
        CHECK(scaled_manhattan(t, vec2(1e-9, 0)) > 0.0);
        CHECK(scaled_manhattan(t, vec2(0, -1e-9)) > 0.0);
    }

    SUBCASE("doubling a deviation halves that feature's contribution") {
        UserTemplate t1 = t, t2 = t;
        t2.mad(0) *= 2.0;
        // isolate feature 0 by matching feature 1 to the mean
        double c1 = scaled_manhattan(t1, vec2(3, 0));
        double c2 = scaled_manhattan(t2, vec2(3, 0));
        CHECK(c2 == doctest::Approx(0.5 * c1).epsilon(1e-12));
    }

    SUBCASE("more hand cases") {
        UserTemplate h;
        h.mean = Eigen::VectorXd(3);
        h.mean << 1, 2, 3;
        h.mad = Eigen::VectorXd(3);
        h.mad << 1, 1, 1;
        Eigen::VectorXd f(3);
        f << 2, 3, 4;
        CHECK(std::abs(scaled_manhattan(h, f) - 1.0) <= 1e-12);
        f << 0, 2, 6;
        CHECK(std::abs(scaled_manhattan(h, f) - (1.0 + 0.0 + 3.0) / 3.0) <= 1e-12);
    }

    SUBCASE("length mismatch is an error") {
        Eigen::VectorXd f(3);
        f.setZero();
        CHECK_THROWS_AS(scaled_manhattan(t, f), std::invalid_argument);
    }
}

TEST_CASE("cross_distances") {
    SUBCASE("identical users give symmetric rows") {
        Eigen::MatrixXd samples = rows2(0, 0, 2, 2);
        std::vector<UserTemplate> ts{build_template("a", samples), build_template("b", samples)};
        auto d = cross_distances(ts, {samples, samples}, vec2(1, 1));
        CHECK(d.known_known(0, 1) == doctest::Approx(d.known_known(1, 0)));
        CHECK(d.known_known(0, 0) == doctest::Approx(d.known_known(1, 1)));
        CHECK(d.known_test(0) == doctest::Approx(d.known_test(1)));
        CHECK(d.user_order == std::vector<std::string>{"a", "b"});
    }

    SUBCASE("test equal to a template mean zeroes that entry") {
        Eigen::MatrixXd sa = rows2(0, 0, 2, 2);   // mean (1,1)
        Eigen::MatrixXd sb = rows2(4, 4, 6, 6);   // mean (5,5)
        std::vector<UserTemplate> ts{build_template("a", sa), build_template("b", sb)};
        auto d = cross_distances(ts, {sa, sb}, vec2(5, 5));
        CHECK(d.known_test(1) == 0.0);
        CHECK(d.known_test(0) > 0.0);
    }

    SUBCASE("three users match hand evaluation") {
        // all mads are exactly 1 by construction
        Eigen::MatrixXd sa = rows2(0, 0, 2, 2);    // mean (1,1)
        Eigen::MatrixXd sb = rows2(4, 0, 6, 2);    // mean (5,1)
        Eigen::MatrixXd sc = rows2(0, 8, 2, 10);   // mean (1,9)
        std::vector<UserTemplate> ts{build_template("a", sa), build_template("b", sb),
                                     build_template("c", sc)};
        Eigen::VectorXd test = vec2(1, 1);
        auto d = cross_distances(ts, {sa, sb, sc}, test);

        // diagonal: mean over own samples of (1/2)(|x1-m1| + |x2-m2|) = 1
        for (int i = 0; i < 3; ++i) CHECK(d.known_known(i, i) == doctest::Approx(1.0));

        // d(a measured by template b): samples (0,0),(2,2) vs mean (5,1), mad (1,1)
        // (1/2)(5+1) = 3 and (1/2)(3+1) = 2, mean 2.5
        CHECK(d.known_known(0, 1) == doctest::Approx(2.5));
        // d(a measured by template c): (1/2)(1+9)=5, (1/2)(1+7)=4, mean 4.5
        CHECK(d.known_known(0, 2) == doctest::Approx(4.5));
        // d(b measured by template a): (1/2)(4+1)=2.5? samples (4,0),(6,2) vs (1,1):
        // (1/2)(3+1)=2, (1/2)(5+1)=3, mean 2.5
        CHECK(d.known_known(1, 0) == doctest::Approx(2.5));
        // d(c measured by template a): (0,8),(2,10) vs (1,1): (1/2)(1+7)=4, (1/2)(1+9)=5
        CHECK(d.known_known(2, 0) == doctest::Approx(4.5));
        // d(b measured by template c): (4,0),(6,2) vs (1,9): (1/2)(3+9)=6, (1/2)(5+7)=6
        CHECK(d.known_known(1, 2) == doctest::Approx(6.0));
        CHECK(d.known_known(2, 1) == doctest::Approx(6.0));

        // test (1,1): zero to a's mean, 2 to b, 4 to c
        CHECK(d.known_test(0) == 0.0);
        CHECK(d.known_test(1) == doctest::Approx(2.0));
        CHECK(d.known_test(2) == doctest::Approx(4.0));
    }

    SUBCASE("row order within a user does not matter") {
        Eigen::MatrixXd sa = rows2(0, 0, 2, 2);
        Eigen::MatrixXd sa_flipped = rows2(2, 2, 0, 0);
        Eigen::MatrixXd sb = rows2(4, 4, 8, 8);
        std::vector<UserTemplate> ts{build_template("a", sa), build_template("b", sb)};
        auto d1 = cross_distances(ts, {sa, sb}, vec2(3, 3));
        auto d2 = cross_distances(ts, {sa_flipped, sb}, vec2(3, 3));
        CHECK((d1.known_known - d2.known_known).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("serializes with user headers and the test column") {
        Eigen::MatrixXd sa = rows2(0, 0, 2, 2);
        std::vector<UserTemplate> ts{build_template("a", sa)};
        auto d = cross_distances(ts, {sa}, vec2(1, 1));
        auto dir = testutil::temp_dir("metrics");
        auto path = testutil::join(dir, "cross.csv");
        d.save_csv(path);
        std::string content = testutil::read_file(path);
        CHECK(content.find("user,a,test") == 0u);
        CHECK(content.find("\na,1,0") != std::string::npos);
    }

    SUBCASE("group count must match template count") {
        Eigen::MatrixXd sa = rows2(0, 0, 2, 2);
        std::vector<UserTemplate> ts{build_template("a", sa), build_template("b", sa)};
        CHECK_THROWS_AS(cross_distances(ts, {sa}, vec2(1, 1)), std::invalid_argument);
    }
}

TEST_CASE("adjusted_rand_index") {
    SUBCASE("identical partitions score one") {
        CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(1.0));
        CHECK(adjusted_rand_index({3, 1, 4, 1, 5}, {3, 1, 4, 1, 5}) == doctest::Approx(1.0));
    }

    SUBCASE("label names do not matter") {
        CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
        CHECK(adjusted_rand_index({0, 1, 2, 0}, {7, 5, 3, 7}) == doctest::Approx(1.0));
    }

    SUBCASE("crossed pairs score minus one half") {
        CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(-0.5));
    }

    SUBCASE("one cluster against four scores zero") {
        std::vector<int> one(8, 0);
        std::vector<int> four{0, 0, 1, 1, 2, 2, 3, 3};
        CHECK(adjusted_rand_index(one, four) == doctest::Approx(0.0));
    }

    SUBCASE("closed form equals the pair-counting oracle") {
        Rng rng(2024);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t n = 2 + rng.below(11);  // 2..12
            int ka = 1 + static_cast<int>(rng.below(4));
            int kb = 1 + static_cast<int>(rng.below(4));
            std::vector<int> a(n), b(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = static_cast<int>(rng.below(static_cast<std::size_t>(ka)));
                b[i] = static_cast<int>(rng.below(static_cast<std::size_t>(kb)));
            }
            CHECK(adjusted_rand_index(a, b) == ari_pair_oracle(a, b));
        }
    }

    SUBCASE("length mismatch and tiny inputs are errors") {
        CHECK_THROWS_AS(adjusted_rand_index({0, 1}, {0}), std::invalid_argument);
        CHECK_THROWS_AS(adjusted_rand_index({0}, {0}), std::invalid_argument);
    }
}

TEST_CASE("identification_accuracy") {
    CHECK(identification_accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(identification_accuracy({1, 2, 3}, {4, 5, 6}) == doctest::Approx(0.0));
    CHECK(identification_accuracy({1, 2, 3, 4}, {1, 2, 3, 9}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(identification_accuracy({1}, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(identification_accuracy({}, {}), std::invalid_argument);
}
