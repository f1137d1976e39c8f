#ifndef KBID_QTRANSFORM_HPP
#define KBID_QTRANSFORM_HPP

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kbid/common.hpp"

namespace kbid {

// Per-feature empirical quantile map onto the uniform distribution.
// Knots are (input value, cumulative probability) pairs, strictly increasing
// in value; duplicate quantile values are collapsed to their midrank
// probability. A constant feature maps everything to 0.5.
struct QuantileModel {
    struct Knot {
        double value;
        double prob;
    };
    std::vector<std::vector<Knot>> features;
    int n_quantiles = 0;

    std::size_t feature_count() const { return features.size(); }

    nlohmann::json to_json() const;
    static QuantileModel from_json(const nlohmann::json& j);
};

// n_quantiles evenly spaced probability levels; clamped to the row count
// (clamped flag reported through `clamped` when non-null).
QuantileModel fit_quantile(const Eigen::MatrixXd& train, int n_quantiles,
                           bool* clamped = nullptr);

// default n_quantiles = min(1000, rows)
QuantileModel fit_quantile(const Eigen::MatrixXd& train);

// Piecewise-linear interpolation between knots; values outside the knot range
// clamp to 0 or 1. Output is always in [0,1] and monotone per feature.
Eigen::MatrixXd apply_quantile(const QuantileModel& model, const Eigen::MatrixXd& m);

Eigen::VectorXd apply_quantile_row(const QuantileModel& model, const Eigen::VectorXd& row);

}  // namespace kbid

#endif  // KBID_QTRANSFORM_HPP
