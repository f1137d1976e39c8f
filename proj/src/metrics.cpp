#include "kbid/metrics.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

namespace kbid {

UserTemplate build_template(const std::string& user_id, const Eigen::MatrixXd& samples) {
    require(samples.rows() >= 1, "build_template: no samples for user " + user_id);
    UserTemplate t;
    t.user_id = user_id;
    t.n_samples = static_cast<std::size_t>(samples.rows());
    t.mean = samples.colwise().mean();
    t.mad = (samples.rowwise() - t.mean.transpose()).cwiseAbs().colwise().mean();
    t.mad = t.mad.cwiseMax(kMadFloor);
    return t;
}

double scaled_manhattan(const UserTemplate& t, const Eigen::VectorXd& f) {
    require(f.size() == t.mean.size(),
            "scaled_manhattan: feature length " + std::to_string(f.size()) +
                " does not match template length " + std::to_string(t.mean.size()));
    double sum = ((f - t.mean).cwiseAbs().array() / t.mad.array()).sum();
    return sum / static_cast<double>(f.size());
}

CrossDistanceMatrix cross_distances(const std::vector<UserTemplate>& templates,
                                    const std::vector<Eigen::MatrixXd>& train_by_user,
                                    const Eigen::VectorXd& test_sample) {
    require(!templates.empty(), "cross_distances: no templates");
    require(templates.size() == train_by_user.size(),
            "cross_distances: user present in train but lacking a template (got " +
                std::to_string(train_by_user.size()) + " groups for " +
                std::to_string(templates.size()) + " templates)");

    const std::size_t n = templates.size();
    CrossDistanceMatrix d;
    d.known_known.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    d.known_test.resize(static_cast<Eigen::Index>(n));
    for (const auto& t : templates) d.user_order.push_back(t.user_id);

    for (std::size_t l = 0; l < n; ++l) {
        const Eigen::MatrixXd& group = train_by_user[l];
        require(group.rows() >= 1, "cross_distances: empty sample group for user " +
                                       templates[l].user_id);
        for (std::size_t m = 0; m < n; ++m) {
            double sum = 0.0;
            for (Eigen::Index r = 0; r < group.rows(); ++r)
                sum += scaled_manhattan(templates[m], group.row(r).transpose());
            d.known_known(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) =
                sum / static_cast<double>(group.rows());
        }
    }
    for (std::size_t m = 0; m < n; ++m)
        d.known_test(static_cast<Eigen::Index>(m)) = scaled_manhattan(templates[m], test_sample);
    return d;
}

void CrossDistanceMatrix::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "user";
    for (const auto& u : user_order) out << ',' << u;
    out << ",test\n";
    for (Eigen::Index l = 0; l < known_known.rows(); ++l) {
        out << user_order[static_cast<std::size_t>(l)];
        for (Eigen::Index m = 0; m < known_known.cols(); ++m) out << ',' << known_known(l, m);
        out << ',' << known_test(l) << '\n';
    }
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    require(a.size() == b.size(), "adjusted_rand_index: label vectors differ in length");
    require(a.size() >= 2, "adjusted_rand_index: need at least 2 labels");

    std::map<std::pair<int, int>, long long> contingency;
    std::map<int, long long> row_sums, col_sums;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++contingency[{a[i], b[i]}];
        ++row_sums[a[i]];
        ++col_sums[b[i]];
    }

    auto choose2 = [](long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };

    double sum_ij = 0.0;
    for (const auto& [key, cnt] : contingency) sum_ij += choose2(cnt);
    double sum_a = 0.0;
    for (const auto& [key, cnt] : row_sums) sum_a += choose2(cnt);
    double sum_b = 0.0;
    for (const auto& [key, cnt] : col_sums) sum_b += choose2(cnt);
    double total = choose2(static_cast<long long>(a.size()));

    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return max_index == sum_ij ? 1.0 : 0.0;  // both partitions trivial
    return (sum_ij - expected) / (max_index - expected);
}

double identification_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    require(pred.size() == truth.size(), "identification_accuracy: length mismatch");
    require(!pred.empty(), "identification_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace kbid
