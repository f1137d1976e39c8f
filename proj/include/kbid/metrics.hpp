#ifndef KBID_METRICS_HPP
#define KBID_METRICS_HPP

#include <string>
#include <vector>

#include "kbid/common.hpp"

namespace kbid {

// deviations are floored here to keep the scaled distance finite on
// constant features
inline constexpr double kMadFloor = 1e-6;

struct UserTemplate {
    std::string user_id;
    Eigen::VectorXd mean;  // per-feature arithmetic mean
    Eigen::VectorXd mad;   // per-feature mean absolute deviation, >= kMadFloor
    std::size_t n_samples = 0;
};

UserTemplate build_template(const std::string& user_id, const Eigen::MatrixXd& samples);

// (1/l) * sum_i |f_i - mean_i| / mad_i
double scaled_manhattan(const UserTemplate& t, const Eigen::VectorXd& f);

// known_known(l, m) = mean over user-l samples of scaled_manhattan(template_m, sample)
// known_test(m)     = scaled_manhattan(template_m, test_sample)
struct CrossDistanceMatrix {
    Eigen::MatrixXd known_known;  // N x N
    Eigen::VectorXd known_test;   // N
    std::vector<std::string> user_order;

    void save_csv(const std::string& path) const;
};

CrossDistanceMatrix cross_distances(const std::vector<UserTemplate>& templates,
                                    const std::vector<Eigen::MatrixXd>& train_by_user,
                                    const Eigen::VectorXd& test_sample);

// Hubert-Arabie adjusted Rand index from the contingency table; 1 iff the
// partitions agree up to label permutation.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

double identification_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace kbid

#endif  // KBID_METRICS_HPP
