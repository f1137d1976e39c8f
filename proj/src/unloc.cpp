#include "kbid/unloc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace kbid {

OrdinalData ordinal_comparisons(const Eigen::MatrixXd& distances, double tie_tolerance) {
    require(distances.rows() >= 1 && distances.cols() >= 2,
            "ordinal_comparisons: need at least one reference and two entities");
    require(tie_tolerance >= 0.0, "ordinal_comparisons: tie tolerance must be >= 0");

    OrdinalData data;
    data.n_entities = static_cast<int>(distances.cols());
    data.tie_tolerance = tie_tolerance;
    data.comparisons.reserve(static_cast<std::size_t>(distances.rows()));
    for (Eigen::Index r = 0; r < distances.rows(); ++r) {
        Eigen::MatrixXi cmp = Eigen::MatrixXi::Zero(data.n_entities, data.n_entities);
        for (int a = 0; a < data.n_entities; ++a) {
            for (int b = 0; b < data.n_entities; ++b) {
                if (a == b) continue;
                double diff = distances(r, a) - distances(r, b);
                if (diff > tie_tolerance) cmp(a, b) = 1;
                else if (diff < -tie_tolerance) cmp(a, b) = -1;
            }
        }
        data.comparisons.push_back(std::move(cmp));
    }
    return data;
}

ProxyScores rank_aggregate(const OrdinalData& ordinal) {
    require(!ordinal.comparisons.empty(), "rank_aggregate: no comparisons");
    const int ne = ordinal.n_entities;
    const int nr = static_cast<int>(ordinal.comparisons.size());
    ProxyScores scores;
    scores.proxies.resize(nr, ne);
    const double span = 2.0 * (ne - 1);
    for (int r = 0; r < nr; ++r) {
        const auto& cmp = ordinal.comparisons[static_cast<std::size_t>(r)];
        for (int e = 0; e < ne; ++e) {
            int s = 0;
            for (int b = 0; b < ne; ++b) s += cmp(e, b);
            scores.proxies(r, e) = (static_cast<double>(s) + (ne - 1)) / span;
        }
    }
    return scores;
}

double DistanceMap::apply(double proxy) const {
    if (!isotonic) return slope * proxy + intercept;
    if (knots_proxy.empty()) return 0.0;
    if (proxy <= knots_proxy.front()) return knots_dist.front();
    if (proxy >= knots_proxy.back()) return knots_dist.back();
    auto it = std::upper_bound(knots_proxy.begin(), knots_proxy.end(), proxy);
    std::size_t hi = static_cast<std::size_t>(it - knots_proxy.begin());
    std::size_t lo = hi - 1;
    double gap = knots_proxy[hi] - knots_proxy[lo];
    if (gap <= 0.0) return knots_dist[lo];
    double t = (proxy - knots_proxy[lo]) / gap;
    return knots_dist[lo] + t * (knots_dist[hi] - knots_dist[lo]);
}

DistanceMap fit_distance_map(const std::vector<double>& proxies,
                             const std::vector<double>& distances, bool isotonic) {
    require(proxies.size() == distances.size(), "fit_distance_map: length mismatch");
    require(proxies.size() >= 2, "fit_distance_map: need at least 2 pairs");

    double pmin = *std::min_element(proxies.begin(), proxies.end());
    double pmax = *std::max_element(proxies.begin(), proxies.end());
    require(pmax - pmin > 0.0, "fit_distance_map: fewer than 2 distinct proxy values");

    DistanceMap map;
    map.isotonic = isotonic;
    const std::size_t n = proxies.size();

    if (!isotonic) {
        double pm = std::accumulate(proxies.begin(), proxies.end(), 0.0) / n;
        double dm = std::accumulate(distances.begin(), distances.end(), 0.0) / n;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxx += (proxies[i] - pm) * (proxies[i] - pm);
            sxy += (proxies[i] - pm) * (distances[i] - dm);
        }
        map.slope = sxy / sxx;
        if (map.slope <= 0.0) {
            map.slope = 1e-9;
            map.slope_clamped = true;
        }
        map.intercept = dm - map.slope * pm;
        return map;
    }

    // merge duplicate proxies, then pool adjacent violators
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return proxies[a] < proxies[b]; });

    struct Block {
        double proxy_sum = 0.0, dist_sum = 0.0;
        double weight = 0.0;
    };
    std::vector<Block> blocks;
    for (std::size_t idx : order) {
        if (!blocks.empty() &&
            std::abs(blocks.back().proxy_sum / blocks.back().weight - proxies[idx]) == 0.0) {
            blocks.back().dist_sum += distances[idx];
            blocks.back().proxy_sum += proxies[idx];
            blocks.back().weight += 1.0;
        } else {
            blocks.push_back({proxies[idx], distances[idx], 1.0});
        }
        while (blocks.size() >= 2) {
            auto& prev = blocks[blocks.size() - 2];
            auto& last = blocks.back();
            if (prev.dist_sum / prev.weight <= last.dist_sum / last.weight) break;
            prev.proxy_sum += last.proxy_sum;
            prev.dist_sum += last.dist_sum;
            prev.weight += last.weight;
            blocks.pop_back();
        }
    }
    for (const auto& b : blocks) {
        map.knots_proxy.push_back(b.proxy_sum / b.weight);
        map.knots_dist.push_back(b.dist_sum / b.weight);
    }
    return map;
}

// ---- unfolding --------------------------------------------------------------

namespace {

using Objective = std::function<double(const Eigen::VectorXd&)>;

// standard Nelder-Mead on a dim-dimensional objective
Eigen::VectorXd nelder_mead(const Objective& f, const Eigen::VectorXd& start, double step,
                            double* out_value) {
    const int dim = static_cast<int>(start.size());
    const int max_iters = 250 * dim;
    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(dim + 1), start);
    std::vector<double> vals(static_cast<std::size_t>(dim + 1));
    for (int i = 0; i < dim; ++i) pts[static_cast<std::size_t>(i + 1)](i) += step;
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = f(pts[i]);

    std::vector<std::size_t> order(pts.size());
    for (int iter = 0; iter < max_iters; ++iter) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::size_t best = order.front(), worst = order.back();
        std::size_t second_worst = order[order.size() - 2];
        if (vals[worst] - vals[best] < 1e-12) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t i : order)
            if (i != worst) centroid += pts[i];
        centroid /= static_cast<double>(dim);

        Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
        double fr = f(reflected);
        if (fr < vals[best]) {
            Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
            double fe = f(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
        } else if (fr < vals[second_worst]) {
            pts[worst] = reflected;
            vals[worst] = fr;
        } else {
            Eigen::VectorXd contracted = centroid + 0.5 * (pts[worst] - centroid);
            double fc = f(contracted);
            if (fc < vals[worst]) {
                pts[worst] = contracted;
                vals[worst] = fc;
            } else {
                for (std::size_t i : order) {
                    if (i == best) continue;
                    pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }

    std::size_t arg = 0;
    for (std::size_t i = 1; i < vals.size(); ++i)
        if (vals[i] < vals[arg]) arg = i;
    if (out_value) *out_value = vals[arg];
    return pts[arg];
}

}  // namespace

LocalizationEstimate unfold(const Eigen::MatrixXd& anchors,
                            const Eigen::VectorXd& target_distances, Rng& rng, int restarts) {
    const int k = static_cast<int>(anchors.rows());
    const int dim = static_cast<int>(anchors.cols());
    require(k >= 1, "unfold: no anchors");
    require(target_distances.size() == k, "unfold: distance count must match anchor count");

    LocalizationEstimate est;
    if (k == 1) {
        est.position = anchors.row(0).transpose();
        est.single_anchor = true;
        est.ambiguous = true;
        est.objective = target_distances(0) * target_distances(0);
        est.restart_objectives.push_back(est.objective);
        return est;
    }

    // the position is only pinned down when the anchors affinely span the space
    Eigen::MatrixXd centered = anchors.rowwise() - anchors.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    double sv_tol = 1e-9 * std::max(1.0, svd.singularValues()(0));
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > sv_tol) ++rank;
    est.ambiguous = rank < dim;

    Objective objective = [&](const Eigen::VectorXd& x) {
        double j = 0.0;
        for (int m = 0; m < k; ++m) {
            double r = (x - anchors.row(m).transpose()).norm() - target_distances(m);
            j += r * r;
        }
        return j;
    };

    Eigen::VectorXd lo = anchors.colwise().minCoeff().transpose();
    Eigen::VectorXd hi = anchors.colwise().maxCoeff().transpose();
    double diag = (hi - lo).norm();
    double step = diag > 0.0 ? 0.05 * diag : 0.1;

    std::vector<Eigen::VectorXd> starts;
    for (int m = 0; m < k; ++m) starts.push_back(anchors.row(m).transpose());
    starts.push_back(anchors.colwise().mean().transpose());
    int total = std::max(restarts, k + 1);
    while (static_cast<int>(starts.size()) < total) {
        Eigen::VectorXd p(dim);
        for (int d = 0; d < dim; ++d) p(d) = rng.uniform(lo(d), hi(d));
        starts.push_back(p);
    }

    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_pos = starts.front();
    for (const auto& start : starts) {
        double val = 0.0;
        Eigen::VectorXd pos = nelder_mead(objective, start, step, &val);
        est.restart_objectives.push_back(val);
        if (val < best_val) {
            best_val = val;
            best_pos = pos;
        }
    }
    est.position = best_pos;
    est.objective = best_val;
    return est;
}

LocalizationEstimate localize(const Eigen::MatrixXd& anchors, const CrossDistanceMatrix& cross,
                              const UnlocParams& params, Rng& rng, nlohmann::json* trace) {
    const int k = static_cast<int>(anchors.rows());
    require(cross.known_known.rows() == k && cross.known_known.cols() == k,
            "localize: cross-distance matrix does not match anchor count");
    require(cross.known_test.size() == k, "localize: test distances do not match anchor count");

    if (k == 1) {
        LocalizationEstimate est;
        est.position = anchors.row(0).transpose();
        est.single_anchor = true;
        est.ambiguous = true;
        est.objective = 0.0;
        if (trace) (*trace)["single_anchor"] = true;
        return est;
    }

    // row r: distances of every entity as measured from reference r;
    // entities are the k anchors followed by the test sample
    Eigen::MatrixXd distances(k, k + 1);
    for (int r = 0; r < k; ++r) {
        for (int l = 0; l < k; ++l) distances(r, l) = cross.known_known(l, r);
        distances(r, k) = cross.known_test(r);
    }

    OrdinalData ordinal = ordinal_comparisons(distances, params.tie_tolerance);
    ProxyScores scores = rank_aggregate(ordinal);

    Eigen::VectorXd target(k);
    std::vector<DistanceMap> maps;
    if (params.per_reference_map) {
        // each reference row gets its own map, so anchors sitting at different
        // distance scales calibrate the target estimate on their own pairs
        for (int r = 0; r < k; ++r) {
            std::vector<double> row_proxies, row_dists;
            for (int l = 0; l < k; ++l) {
                row_proxies.push_back(scores.proxies(r, l));
                row_dists.push_back((anchors.row(l) - anchors.row(r)).norm());
            }
            maps.push_back(fit_distance_map(row_proxies, row_dists, params.isotonic_map));
            target(r) = std::max(0.0, maps.back().apply(scores.proxies(r, k)));
        }
    } else {
        std::vector<double> fit_proxies, fit_dists;
        for (int r = 0; r < k; ++r) {
            for (int l = 0; l < k; ++l) {
                fit_proxies.push_back(scores.proxies(r, l));
                fit_dists.push_back((anchors.row(l) - anchors.row(r)).norm());
            }
        }
        maps.push_back(fit_distance_map(fit_proxies, fit_dists, params.isotonic_map));
        for (int r = 0; r < k; ++r) target(r) = std::max(0.0, maps.front().apply(scores.proxies(r, k)));
    }

    LocalizationEstimate est = unfold(anchors, target, rng, params.restarts);

    if (trace) {
        nlohmann::json j;
        nlohmann::json ord = nlohmann::json::array();
        for (const auto& cmp : ordinal.comparisons) {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index a = 0; a < cmp.rows(); ++a) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index b = 0; b < cmp.cols(); ++b) row.push_back(cmp(a, b));
                rows.push_back(row);
            }
            ord.push_back(rows);
        }
        j["ordinal"] = ord;
        nlohmann::json prox = nlohmann::json::array();
        for (Eigen::Index r = 0; r < scores.proxies.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < scores.proxies.cols(); ++c)
                row.push_back(scores.proxies(r, c));
            prox.push_back(row);
        }
        j["proxies"] = prox;
        nlohmann::json jmaps = nlohmann::json::array();
        for (const auto& m : maps)
            jmaps.push_back({{"isotonic", m.isotonic},
                             {"slope", m.slope},
                             {"intercept", m.intercept},
                             {"slope_clamped", m.slope_clamped}});
        j["map"] = params.per_reference_map ? jmaps : jmaps.front();
        j["estimated_distances"] = std::vector<double>(target.data(), target.data() + k);
        j["restart_objectives"] = est.restart_objectives;
        j["objective"] = est.objective;
        j["ambiguous"] = est.ambiguous;
        j["position"] =
            std::vector<double>(est.position.data(), est.position.data() + est.position.size());
        *trace = std::move(j);
    }
    return est;
}

}  // namespace kbid
