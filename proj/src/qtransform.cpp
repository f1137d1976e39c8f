#include "kbid/qtransform.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace kbid {

namespace {

// type-7 quantile on sorted data
double sorted_quantile(const std::vector<double>& sorted, double p) {
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double w = h - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

QuantileModel fit_quantile(const Eigen::MatrixXd& train, int n_quantiles, bool* clamped) {
    require(train.rows() >= 2, "fit_quantile: need at least 2 rows");
    require(n_quantiles >= 2, "fit_quantile: n_quantiles must be >= 2");
    if (clamped) *clamped = false;
    if (n_quantiles > train.rows()) {
        n_quantiles = static_cast<int>(train.rows());
        if (clamped) *clamped = true;
    }

    QuantileModel model;
    model.n_quantiles = n_quantiles;
    model.features.resize(static_cast<std::size_t>(train.cols()));

    for (Eigen::Index f = 0; f < train.cols(); ++f) {
        std::vector<double> col(train.rows());
        for (Eigen::Index r = 0; r < train.rows(); ++r) col[static_cast<std::size_t>(r)] = train(r, f);
        std::sort(col.begin(), col.end());

        // knots at the endpoints of n_quantiles equal probability intervals,
        // so round interval counts place knots exactly at 0, 0.5, and 1
        std::vector<QuantileModel::Knot> raw;
        raw.reserve(static_cast<std::size_t>(n_quantiles) + 1);
        for (int q = 0; q <= n_quantiles; ++q) {
            double p = static_cast<double>(q) / static_cast<double>(n_quantiles);
            raw.push_back({sorted_quantile(col, p), p});
        }

        // collapse runs of equal values to their midrank probability
        std::vector<QuantileModel::Knot> knots;
        std::size_t i = 0;
        while (i < raw.size()) {
            std::size_t j = i;
            double psum = 0.0;
            while (j < raw.size() && raw[j].value == raw[i].value) {
                psum += raw[j].prob;
                ++j;
            }
            knots.push_back({raw[i].value, psum / static_cast<double>(j - i)});
            i = j;
        }
        model.features[static_cast<std::size_t>(f)] = std::move(knots);
    }
    return model;
}

QuantileModel fit_quantile(const Eigen::MatrixXd& train) {
    int nq = static_cast<int>(std::min<Eigen::Index>(1000, train.rows()));
    return fit_quantile(train, std::max(nq, 2));
}

namespace {

double apply_one(const std::vector<QuantileModel::Knot>& knots, double v) {
    if (knots.size() == 1) return 0.5;  // constant feature
    if (v < knots.front().value) return 0.0;
    if (v > knots.back().value) return 1.0;
    // binary search: last knot with value <= v
    std::size_t lo = 0, hi = knots.size() - 1;
    while (lo + 1 < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (knots[mid].value <= v)
            lo = mid;
        else
            hi = mid;
    }
    if (v == knots[lo].value) return knots[lo].prob;
    if (v >= knots[hi].value) return knots[hi].prob;
    double span = knots[hi].value - knots[lo].value;
    double w = (v - knots[lo].value) / span;
    return knots[lo].prob + w * (knots[hi].prob - knots[lo].prob);
}

}  // namespace

Eigen::MatrixXd apply_quantile(const QuantileModel& model, const Eigen::MatrixXd& m) {
    require(static_cast<std::size_t>(m.cols()) == model.feature_count(),
            "apply_quantile: feature count mismatch (matrix has " + std::to_string(m.cols()) +
                ", model has " + std::to_string(model.feature_count()) + ")");
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index f = 0; f < m.cols(); ++f) {
        const auto& knots = model.features[static_cast<std::size_t>(f)];
        for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, f) = apply_one(knots, m(r, f));
    }
    return out;
}

Eigen::VectorXd apply_quantile_row(const QuantileModel& model, const Eigen::VectorXd& row) {
    require(static_cast<std::size_t>(row.size()) == model.feature_count(),
            "apply_quantile_row: feature count mismatch");
    Eigen::VectorXd out(row.size());
    for (Eigen::Index f = 0; f < row.size(); ++f)
        out(f) = apply_one(model.features[static_cast<std::size_t>(f)], row(f));
    return out;
}

nlohmann::json QuantileModel::to_json() const {
    nlohmann::json j;
    j["n_quantiles"] = n_quantiles;
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& knots : features) {
        nlohmann::json values = nlohmann::json::array();
        nlohmann::json probs = nlohmann::json::array();
        for (const auto& k : knots) {
            values.push_back(k.value);
            probs.push_back(k.prob);
        }
        feats.push_back({{"values", values}, {"probs", probs}});
    }
    j["features"] = feats;
    return j;
}

QuantileModel QuantileModel::from_json(const nlohmann::json& j) {
    QuantileModel model;
    model.n_quantiles = j.at("n_quantiles").get<int>();
    for (const auto& f : j.at("features")) {
        const auto& values = f.at("values");
        const auto& probs = f.at("probs");
        std::vector<Knot> knots;
        for (std::size_t i = 0; i < values.size(); ++i)
            knots.push_back({values[i].get<double>(), probs[i].get<double>()});
        model.features.push_back(std::move(knots));
    }
    return model;
}

}  // namespace kbid
