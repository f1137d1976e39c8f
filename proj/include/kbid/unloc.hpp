#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "kbid/common.hpp"
#include "kbid/metrics.hpp"

namespace kbid {

// Pairwise order relations between entities, one comparison matrix per
// reference. comparisons[r](a, b) is +1 when entity a is farther from
// reference r than entity b, -1 when closer, 0 within the tie tolerance.
struct OrdinalData {
    std::vector<Eigen::MatrixXi> comparisons;
    int n_entities = 0;
    double tie_tolerance = 1e-9;
};

// distances is n_references x n_entities: row r holds the distances of all
// entities as measured from reference r.
OrdinalData ordinal_comparisons(const Eigen::MatrixXd& distances, double tie_tolerance = 1e-9);

// Borda scores per reference: wins minus losses, rescaled to [0, 1].
// An entity tied with everything scores 0.5.
struct ProxyScores {
    Eigen::MatrixXd proxies;  // n_references x n_entities
};

ProxyScores rank_aggregate(const OrdinalData& ordinal);

// Monotone map from proxy scores to geometric distances, fitted on pairs
// where both are known. Affine least squares by default; the isotonic mode
// uses pool-adjacent-violators with linear interpolation between knots.
struct DistanceMap {
    bool isotonic = false;
    double slope = 1.0;
    double intercept = 0.0;
    std::vector<double> knots_proxy;
    std::vector<double> knots_dist;
    bool slope_clamped = false;

    double apply(double proxy) const;
};

DistanceMap fit_distance_map(const std::vector<double>& proxies,
                             const std::vector<double>& distances, bool isotonic = false);

struct LocalizationEstimate {
    Eigen::VectorXd position;
    double objective = 0.0;
    bool ambiguous = false;      // anchor geometry cannot pin the position down
    bool single_anchor = false;  // one anchor only, position is that anchor
    std::vector<double> restart_objectives;
};

// Minimizes sum_m (|x - anchor_m| - target_distances[m])^2 with multi-start
// Nelder-Mead. Starts are the anchors, their centroid, and random points in
// the anchor bounding box; ties go to the earliest start.
LocalizationEstimate unfold(const Eigen::MatrixXd& anchors,
                            const Eigen::VectorXd& target_distances, Rng& rng,
                            int restarts = 8);

struct UnlocParams {
    double tie_tolerance = 1e-9;
    bool isotonic_map = false;
    // fit one proxy-to-distance map per reference anchor instead of pooling
    // every anchor pair into a single map; adapts to per-anchor distance scales
    bool per_reference_map = false;
    int restarts = 8;
};

// Full pipeline: ordinal comparisons on the cross-distance matrix, Borda
// proxies, distance-map fit on anchor pairs, then unfolding of the test
// entity. Pass a trace object to capture every intermediate stage.
LocalizationEstimate localize(const Eigen::MatrixXd& anchors, const CrossDistanceMatrix& cross,
                              const UnlocParams& params, Rng& rng,
                              nlohmann::json* trace = nullptr);

}  // namespace kbid
