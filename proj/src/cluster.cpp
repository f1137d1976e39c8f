#include "kbid/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

namespace kbid {

std::string cluster_method_name(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::DBSCAN: return "dbscan";
        case ClusterMethod::GMM: return "gmm";
        case ClusterMethod::XMEANS: return "xmeans";
    }
    return "?";
}

ClusterMethod cluster_method_from_name(const std::string& name) {
    if (name == "dbscan") return ClusterMethod::DBSCAN;
    if (name == "gmm") return ClusterMethod::GMM;
    if (name == "xmeans") return ClusterMethod::XMEANS;
    throw std::invalid_argument("unknown cluster method: " + name);
}

void ClusterResult::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "row,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

// ---- k-means ----------------------------------------------------------------

namespace {

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& m, int k, Rng& rng) {
    const Eigen::Index n = m.rows();
    Eigen::MatrixXd centroids(k, m.cols());
    centroids.row(0) = m.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd dist2 = (m.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = dist2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += dist2(i);
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(c) = m.row(pick);
        dist2 = dist2.cwiseMin((m.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }
    return centroids;
}

double lloyd(const Eigen::MatrixXd& m, Eigen::MatrixXd& centroids, std::vector<int>& labels,
             int max_iters) {
    const Eigen::Index n = m.rows();
    const int k = static_cast<int>(centroids.rows());
    labels.assign(static_cast<std::size_t>(n), 0);
    double sse = 0.0;

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = iter == 0;
        sse = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (m.row(i) - centroids.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                double d = (m.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
            sse += best_d;
        }

        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int lab : labels) ++counts[static_cast<std::size_t>(lab)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            // refill an empty cluster with the point farthest from its centroid
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                int lab = labels[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(lab)] <= 1) continue;
                double d = (m.row(i) - centroids.row(lab)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
            labels[static_cast<std::size_t>(far)] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, m.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            sums.row(labels[static_cast<std::size_t>(i)]) += m.row(i);
        for (int c = 0; c < k; ++c)
            centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);

        if (!changed) break;
    }

    sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        sse += (m.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    return sse;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& m, int k, Rng& rng, int max_iters) {
    require(k >= 1, "kmeans: k must be >= 1");
    require(m.rows() >= k, "kmeans: fewer rows than clusters");
    KMeansResult result;
    result.centroids = kmeanspp_seed(m, k, rng);
    result.sse = lloyd(m, result.centroids, result.labels, max_iters);
    return result;
}

// ---- DBSCAN -----------------------------------------------------------------

double dbscan_default_eps(const Eigen::MatrixXd& m, int min_samples) {
    const Eigen::Index n = m.rows();
    if (n < 2) return 1.0;
    int kth = std::min<int>(min_samples, static_cast<int>(n) - 1);
    std::vector<double> kdist;
    kdist.reserve(static_cast<std::size_t>(n));
    std::vector<double> d(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) d[w++] = (m.row(i) - m.row(j)).norm();
        std::nth_element(d.begin(), d.begin() + (kth - 1), d.end());
        kdist.push_back(d[static_cast<std::size_t>(kth - 1)]);
    }
    std::sort(kdist.begin(), kdist.end());
    double pos = 0.9 * static_cast<double>(kdist.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= kdist.size()) return kdist.back();
    return kdist[lo] + frac * (kdist[lo + 1] - kdist[lo]);
}

ClusterResult dbscan(const Eigen::MatrixXd& m, const DbscanParams& params) {
    require(params.min_samples >= 1, "dbscan: min_samples must be >= 1");
    const Eigen::Index n = m.rows();
    double eps = params.eps > 0.0 ? params.eps : dbscan_default_eps(m, params.min_samples);

    auto neighbours = [&](Eigen::Index p) {
        std::vector<Eigen::Index> out;
        for (Eigen::Index j = 0; j < n; ++j)
            if ((m.row(p) - m.row(j)).norm() <= eps) out.push_back(j);
        return out;
    };

    constexpr int kUnvisited = -2;
    std::vector<int> labels(static_cast<std::size_t>(n), kUnvisited);
    int next_cluster = 0;

    for (Eigen::Index p = 0; p < n; ++p) {
        if (labels[static_cast<std::size_t>(p)] != kUnvisited) continue;
        auto nb = neighbours(p);
        if (static_cast<int>(nb.size()) < params.min_samples) {
            labels[static_cast<std::size_t>(p)] = -1;
            continue;
        }
        int cluster = next_cluster++;
        labels[static_cast<std::size_t>(p)] = cluster;
        std::deque<Eigen::Index> queue(nb.begin(), nb.end());
        while (!queue.empty()) {
            Eigen::Index q = queue.front();
            queue.pop_front();
            int& lab = labels[static_cast<std::size_t>(q)];
            if (lab == -1) lab = cluster;  // border point previously marked noise
            if (lab != kUnvisited) continue;
            lab = cluster;
            auto qn = neighbours(q);
            if (static_cast<int>(qn.size()) >= params.min_samples)
                queue.insert(queue.end(), qn.begin(), qn.end());
        }
    }

    ClusterResult result;
    result.method = ClusterMethod::DBSCAN;
    result.labels = std::move(labels);
    result.k = next_cluster;
    result.centroids = Eigen::MatrixXd::Zero(next_cluster, m.cols());
    std::vector<int> counts(static_cast<std::size_t>(next_cluster), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        int lab = result.labels[static_cast<std::size_t>(i)];
        if (lab < 0) continue;
        result.centroids.row(lab) += m.row(i);
        ++counts[static_cast<std::size_t>(lab)];
    }
    for (int c = 0; c < next_cluster; ++c)
        result.centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return result;
}

// ---- Gaussian mixture -------------------------------------------------------

int GmmModel::n_params() const {
    int k = static_cast<int>(weights.size());
    int d = static_cast<int>(means.cols());
    return k * (d + d * (d + 1) / 2) + (k - 1);
}

double bic(double log_likelihood, int n_params, int n_samples) {
    require(n_params >= 1, "bic: n_params must be >= 1");
    require(n_samples >= 1, "bic: n_samples must be >= 1");
    return -2.0 * log_likelihood + static_cast<double>(n_params) *
                                       std::log(static_cast<double>(n_samples));
}

namespace {

constexpr double kCovRidge = 1e-6;

struct GmmWork {
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
    std::vector<double> log_norm;  // -0.5 (d log 2pi + logdet)

    bool prepare(const GmmModel& model) {
        int k = static_cast<int>(model.weights.size());
        int d = static_cast<int>(model.means.cols());
        chol.resize(static_cast<std::size_t>(k));
        log_norm.resize(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
            Eigen::MatrixXd cov = model.covariances[static_cast<std::size_t>(j)] +
                                  kCovRidge * Eigen::MatrixXd::Identity(d, d);
            chol[static_cast<std::size_t>(j)].compute(cov);
            if (chol[static_cast<std::size_t>(j)].info() != Eigen::Success) return false;
            double logdet = 0.0;
            const auto& l = chol[static_cast<std::size_t>(j)].matrixL();
            for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(l(i, i));
            log_norm[static_cast<std::size_t>(j)] =
                -0.5 * (d * std::log(2.0 * M_PI) + logdet);
        }
        return true;
    }

    double log_density(const GmmModel& model, int j, const Eigen::RowVectorXd& x) const {
        Eigen::VectorXd diff = (x - model.means.row(j)).transpose();
        Eigen::VectorXd solved = chol[static_cast<std::size_t>(j)].matrixL().solve(diff);
        return log_norm[static_cast<std::size_t>(j)] - 0.5 * solved.squaredNorm();
    }
};

// responsibilities via log-sum-exp; returns total log likelihood
double e_step(const Eigen::MatrixXd& m, const GmmModel& model, const GmmWork& work,
              Eigen::MatrixXd& resp) {
    const Eigen::Index n = m.rows();
    const int k = static_cast<int>(model.weights.size());
    resp.resize(n, k);
    double total = 0.0;
    Eigen::VectorXd logp(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j)
            logp(j) = std::log(model.weights(j)) + work.log_density(model, j, m.row(i));
        double mx = logp.maxCoeff();
        double sum = (logp.array() - mx).exp().sum();
        double lse = mx + std::log(sum);
        total += lse;
        for (int j = 0; j < k; ++j) resp(i, j) = std::exp(logp(j) - lse);
    }
    return total;
}

GmmModel gmm_init(const Eigen::MatrixXd& m, int k, Rng& rng) {
    GmmModel model;
    KMeansResult seed = kmeans(m, k, rng);
    model.means = seed.centroids;
    model.weights.resize(k);
    model.covariances.assign(static_cast<std::size_t>(k), Eigen::MatrixXd());
    const Eigen::Index n = m.rows();
    const int d = static_cast<int>(m.cols());

    Eigen::RowVectorXd global_mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - global_mean;
    Eigen::MatrixXd global_cov =
        centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));

    for (int j = 0; j < k; ++j) {
        std::vector<Eigen::Index> members;
        for (Eigen::Index i = 0; i < n; ++i)
            if (seed.labels[static_cast<std::size_t>(i)] == j) members.push_back(i);
        model.weights(j) = static_cast<double>(members.size()) / static_cast<double>(n);
        if (members.size() >= 2) {
            Eigen::MatrixXd pts(members.size(), d);
            for (std::size_t r = 0; r < members.size(); ++r) pts.row(static_cast<Eigen::Index>(r)) = m.row(members[r]);
            Eigen::RowVectorXd mu = pts.colwise().mean();
            Eigen::MatrixXd c = pts.rowwise() - mu;
            model.covariances[static_cast<std::size_t>(j)] =
                c.transpose() * c / static_cast<double>(members.size() - 1);
        } else {
            model.covariances[static_cast<std::size_t>(j)] = global_cov;
        }
    }
    return model;
}

}  // namespace

GmmModel gmm_fit(const Eigen::MatrixXd& m, int k, Rng& rng, int max_iters, double tol) {
    require(k >= 1, "gmm_fit: k must be >= 1");
    require(m.rows() >= k, "gmm_fit: fewer rows than components");
    const Eigen::Index n = m.rows();
    const int d = static_cast<int>(m.cols());
    constexpr double kWeightFloor = 1e-8;
    constexpr int kMaxRestarts = 5;

    GmmModel model;
    for (int attempt = 0;; ++attempt) {
        model = gmm_init(m, k, rng);
        model.log_likelihood_trace.clear();
        GmmWork work;
        Eigen::MatrixXd resp;
        bool collapsed = false;
        double prev_ll = -std::numeric_limits<double>::infinity();

        for (int iter = 0; iter < max_iters; ++iter) {
            if (!work.prepare(model)) {
                collapsed = true;
                break;
            }
            double ll = e_step(m, model, work, resp);
            model.log_likelihood = ll;
            model.log_likelihood_trace.push_back(ll);

            Eigen::VectorXd nk = resp.colwise().sum();
            if (nk.minCoeff() < kWeightFloor * static_cast<double>(n)) {
                collapsed = true;
                break;
            }
            model.weights = nk / static_cast<double>(n);
            for (int j = 0; j < k; ++j) {
                Eigen::RowVectorXd mu = (resp.col(j).transpose() * m) / nk(j);
                model.means.row(j) = mu;
                Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
                for (Eigen::Index i = 0; i < n; ++i) {
                    Eigen::RowVectorXd diff = m.row(i) - mu;
                    cov.noalias() += resp(i, j) * diff.transpose() * diff;
                }
                model.covariances[static_cast<std::size_t>(j)] = cov / nk(j);
            }

            if (iter > 0 && std::abs(ll - prev_ll) < tol) break;
            prev_ll = ll;
        }

        if (!collapsed || attempt >= kMaxRestarts) {
            if (collapsed) {
                // keep the last usable state; clamp to avoid log(0) downstream
                model.weights = model.weights.cwiseMax(kWeightFloor);
                model.weights /= model.weights.sum();
                if (model.log_likelihood_trace.empty()) {
                    GmmWork w2;
                    if (w2.prepare(model)) {
                        Eigen::MatrixXd r2;
                        model.log_likelihood = e_step(m, model, w2, r2);
                        model.log_likelihood_trace.push_back(model.log_likelihood);
                    }
                }
            }
            break;
        }
    }
    return model;
}

ClusterResult gmm_select(const Eigen::MatrixXd& m, const GmmSelectParams& params, Rng& rng) {
    require(params.min_k >= 1, "gmm_select: min_k must be >= 1");
    require(params.max_k >= params.min_k, "gmm_select: max_k must be >= min_k");
    const Eigen::Index n = m.rows();
    int max_k = std::min<int>(params.max_k, static_cast<int>(n));
    int min_k = std::min<int>(params.min_k, max_k);

    ClusterResult result;
    result.method = ClusterMethod::GMM;
    double best_bic = std::numeric_limits<double>::infinity();
    GmmModel best;
    int best_k = min_k;

    for (int k = min_k; k <= max_k; ++k) {
        Rng fit_rng = rng.fork(static_cast<std::uint64_t>(k));
        GmmModel model = gmm_fit(m, k, fit_rng, params.max_iters);
        double score = bic(model.log_likelihood, model.n_params(), static_cast<int>(n));
        result.bic_by_k.emplace_back(k, score);
        if (score < best_bic) {
            best_bic = score;
            best = model;
            best_k = k;
        }
    }

    result.k = best_k;
    result.centroids = best.means;
    result.labels.resize(static_cast<std::size_t>(n));

    // argmax responsibility under the winning model, first index wins on ties
    {
        std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(static_cast<std::size_t>(best_k));
        std::vector<double> log_norm(static_cast<std::size_t>(best_k));
        const int d = static_cast<int>(m.cols());
        for (int j = 0; j < best_k; ++j) {
            Eigen::MatrixXd cov = best.covariances[static_cast<std::size_t>(j)] +
                                  1e-6 * Eigen::MatrixXd::Identity(d, d);
            chol[static_cast<std::size_t>(j)].compute(cov);
            double logdet = 0.0;
            const auto& l = chol[static_cast<std::size_t>(j)].matrixL();
            for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(l(i, i));
            log_norm[static_cast<std::size_t>(j)] = -0.5 * (d * std::log(2.0 * M_PI) + logdet);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            int arg = 0;
            double best_lp = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < best_k; ++j) {
                Eigen::VectorXd diff = (m.row(i) - best.means.row(j)).transpose();
                Eigen::VectorXd solved = chol[static_cast<std::size_t>(j)].matrixL().solve(diff);
                double lp = std::log(best.weights(j)) + log_norm[static_cast<std::size_t>(j)] -
                            0.5 * solved.squaredNorm();
                if (lp > best_lp) {
                    best_lp = lp;
                    arg = j;
                }
            }
            result.labels[static_cast<std::size_t>(i)] = arg;
        }
    }
    return result;
}

// ---- X-means ----------------------------------------------------------------

namespace {

// spherical-Gaussian log likelihood of a K-centroid model on its own points
double spherical_loglik(double sse, const std::vector<int>& counts, int d) {
    int r = std::accumulate(counts.begin(), counts.end(), 0);
    int k = static_cast<int>(counts.size());
    if (r <= k || sse <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    double var = sse / static_cast<double>(d * (r - k));
    double ll = 0.0;
    for (int c : counts)
        if (c > 0) ll += c * std::log(static_cast<double>(c) / static_cast<double>(r));
    ll -= 0.5 * r * d * std::log(2.0 * M_PI * var);
    ll -= 0.5 * d * (r - k);
    return ll;
}

// Pelleg-Moore style score to maximize: loglik - (q/2) log R
double split_score(double sse, const std::vector<int>& counts, int d) {
    double ll = spherical_loglik(sse, counts, d);
    if (std::isnan(ll)) return std::numeric_limits<double>::quiet_NaN();
    int r = std::accumulate(counts.begin(), counts.end(), 0);
    int k = static_cast<int>(counts.size());
    int q = (k - 1) + k * d + 1;
    return ll - 0.5 * q * std::log(static_cast<double>(r));
}

}  // namespace

ClusterResult xmeans(const Eigen::MatrixXd& m, const XMeansParams& params, Rng& rng) {
    require(m.rows() >= 1, "xmeans: empty matrix");
    require(params.max_k >= 1, "xmeans: max_k must be >= 1");
    const Eigen::Index n = m.rows();
    const int d = static_cast<int>(m.cols());

    Eigen::MatrixXd centroids = m.colwise().mean();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    lloyd(m, centroids, labels, params.max_iters);

    ClusterResult result;
    result.method = ClusterMethod::XMEANS;

    // Local 2-way tests can stall on structure a coarser model explains half
    // as well (an even split that merely halves the variance is a wash in the
    // score), so subdivision continues past rejections and the configuration
    // with the best full-model BIC is the one returned.
    Eigen::MatrixXd best_centroids = centroids;
    std::vector<int> best_labels = labels;
    double best_bic = std::numeric_limits<double>::infinity();

    for (int round = 0;; ++round) {
        int k = static_cast<int>(centroids.rows());

        // full-model BIC at the current k
        {
            double sse = 0.0;
            std::vector<int> counts(static_cast<std::size_t>(k), 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                int lab = labels[static_cast<std::size_t>(i)];
                sse += (m.row(i) - centroids.row(lab)).squaredNorm();
                ++counts[static_cast<std::size_t>(lab)];
            }
            double ll = spherical_loglik(sse, counts, d);
            int q = (k - 1) + k * d + 1;
            if (!std::isnan(ll)) {
                double b = bic(ll, q, static_cast<int>(n));
                result.bic_by_k.emplace_back(k, b);
                if (b < best_bic) {
                    best_bic = b;
                    best_centroids = centroids;
                    best_labels = labels;
                }
            }
        }

        if (k >= params.max_k) break;

        // score a 2-way split of every cluster large enough to support one
        struct Candidate {
            int cluster;
            double improvement;
            Eigen::MatrixXd children;
        };
        std::vector<Candidate> candidates;
        for (int c = 0; c < k; ++c) {
            std::vector<Eigen::Index> members;
            for (Eigen::Index i = 0; i < n; ++i)
                if (labels[static_cast<std::size_t>(i)] == c) members.push_back(i);
            if (members.size() < 4) continue;

            Eigen::MatrixXd pts(members.size(), d);
            for (std::size_t r = 0; r < members.size(); ++r)
                pts.row(static_cast<Eigen::Index>(r)) = m.row(members[r]);

            double parent_sse = (pts.rowwise() - centroids.row(c)).rowwise().squaredNorm().sum();
            std::vector<int> parent_counts{static_cast<int>(members.size())};
            double parent = split_score(parent_sse, parent_counts, d);

            Rng split_rng = rng.fork(static_cast<std::uint64_t>(round * 1000 + c));
            KMeansResult two = kmeans(pts, 2, split_rng, params.max_iters);
            std::vector<int> child_counts(2, 0);
            for (int lab : two.labels) ++child_counts[static_cast<std::size_t>(lab)];
            int floor_pts = std::max(
                params.min_points,
                static_cast<int>(std::ceil(params.min_share * static_cast<double>(n))));
            if (std::min(child_counts[0], child_counts[1]) < floor_pts) continue;
            double child = split_score(two.sse, child_counts, d);

            if (std::isnan(parent) || std::isnan(child)) continue;
            candidates.push_back({c, child - parent, two.centroids});
        }
        if (candidates.empty()) break;

        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) {
                             return a.improvement > b.improvement;
                         });

        // locally winning splits are applied best-first within the cap; when
        // none wins, the least-bad one is forced so the search keeps moving
        std::vector<bool> take(candidates.size(), false);
        int budget = params.max_k - k;
        int taken = 0;
        for (std::size_t i = 0; i < candidates.size() && taken < budget; ++i) {
            if (candidates[i].improvement > 0.0) {
                take[i] = true;
                ++taken;
            }
        }
        if (taken == 0) {
            take[0] = true;
            taken = 1;
        }

        std::vector<Eigen::MatrixXd> new_centroids;
        for (int c = 0; c < k; ++c) {
            const Candidate* chosen = nullptr;
            for (std::size_t i = 0; i < candidates.size(); ++i)
                if (take[i] && candidates[i].cluster == c) chosen = &candidates[i];
            if (chosen) {
                new_centroids.push_back(chosen->children.row(0));
                new_centroids.push_back(chosen->children.row(1));
            } else {
                new_centroids.push_back(centroids.row(c));
            }
        }

        centroids.resize(static_cast<Eigen::Index>(new_centroids.size()), d);
        for (std::size_t r = 0; r < new_centroids.size(); ++r)
            centroids.row(static_cast<Eigen::Index>(r)) = new_centroids[r];
        lloyd(m, centroids, labels, params.max_iters);
    }

    if (std::isfinite(best_bic)) {
        centroids = best_centroids;
        labels = best_labels;
    }
    result.k = static_cast<int>(centroids.rows());
    result.centroids = centroids;
    result.labels = labels;
    return result;
}

}  // namespace kbid
