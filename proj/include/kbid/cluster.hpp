#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kbid/common.hpp"

namespace kbid {

enum class ClusterMethod { DBSCAN, GMM, XMEANS };

std::string cluster_method_name(ClusterMethod m);
ClusterMethod cluster_method_from_name(const std::string& name);

struct ClusterResult {
    std::vector<int> labels;  // -1 marks noise points
    int k = 0;                // clusters found, noise excluded
    Eigen::MatrixXd centroids;
    ClusterMethod method = ClusterMethod::XMEANS;
    std::vector<std::pair<int, double>> bic_by_k;  // diagnostics for model-selection methods

    void save_csv(const std::string& path) const;
};

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    double sse = 0.0;
};

// Lloyd iterations from a k-means++ seeding; empty clusters are refilled
// with the point farthest from its assigned centroid.
KMeansResult kmeans(const Eigen::MatrixXd& m, int k, Rng& rng, int max_iters = 100);

struct DbscanParams {
    double eps = 0.0;  // <= 0 means derive from the data
    int min_samples = 5;
};

// 90th percentile of each point's distance to its min_samples-th neighbour.
double dbscan_default_eps(const Eigen::MatrixXd& m, int min_samples);

ClusterResult dbscan(const Eigen::MatrixXd& m, const DbscanParams& params);

struct GmmModel {
    Eigen::VectorXd weights;
    Eigen::MatrixXd means;                  // k x d
    std::vector<Eigen::MatrixXd> covariances;
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_trace;
    int n_params() const;
};

GmmModel gmm_fit(const Eigen::MatrixXd& m, int k, Rng& rng, int max_iters = 200,
                 double tol = 1e-6);

// -2 log L + q log n
double bic(double log_likelihood, int n_params, int n_samples);

struct GmmSelectParams {
    int min_k = 1;
    int max_k = 10;
    int max_iters = 200;
};

ClusterResult gmm_select(const Eigen::MatrixXd& m, const GmmSelectParams& params, Rng& rng);

struct XMeansParams {
    int max_k = 20;
    int max_iters = 100;
    // reject 2-way splits whose smaller child holds fewer rows than this; a
    // near-empty child collapses its variance term and wins on score alone
    int min_points = 3;
    // same guard as a fraction of the full dataset, so larger samples do not
    // get carved into slivers that a 200-row run would resolve but a 30-row
    // run could never see
    double min_share = 0.06;
};

ClusterResult xmeans(const Eigen::MatrixXd& m, const XMeansParams& params, Rng& rng);

}  // namespace kbid
