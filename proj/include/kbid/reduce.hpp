#ifndef KBID_REDUCE_HPP
#define KBID_REDUCE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kbid/common.hpp"

namespace kbid {

enum class ReducerKind { PCA, KPCA, TSNE };

std::string reducer_name(ReducerKind k);
ReducerKind reducer_from_name(const std::string& name);

struct ReducedFeatures {
    Eigen::MatrixXd coords;  // n x out_dims
    std::vector<std::string> row_ids;

    void save_csv(const std::string& path) const;
};

// ---- PCA ----------------------------------------------------------------

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;   // out_dims x n_features, orthonormal rows
    Eigen::VectorXd eigenvalues;  // descending, length out_dims
};

// Components are leading covariance eigenvectors, descending eigenvalue,
// with the largest-magnitude entry of each component made positive.
PcaModel pca_fit(const Eigen::MatrixXd& m, int out_dims);

Eigen::MatrixXd pca_apply(const PcaModel& model, const Eigen::MatrixXd& m);

// ---- Kernel PCA (RBF) ---------------------------------------------------

struct KpcaModel {
    Eigen::MatrixXd train;        // training rows kept for the cross-kernel
    double gamma = 0.0;
    Eigen::MatrixXd alphas;       // n x out_dims eigenvectors of the centered kernel
    Eigen::VectorXd eigenvalues;  // descending, > 0
    Eigen::VectorXd train_kernel_row_means;
    double train_kernel_total_mean = 0.0;
};

// k(x,y) = exp(-gamma * |x-y|^2), kernel matrix double-centered.
// Training embedding = eigenvector * sqrt(eigenvalue).
KpcaModel kpca_fit(const Eigen::MatrixXd& m, int out_dims, double gamma);

Eigen::MatrixXd kpca_apply(const KpcaModel& model, const Eigen::MatrixXd& m);

// 1 / median pairwise squared distance; fallback heuristics on degenerate data
double kpca_gamma_heuristic(const Eigen::MatrixXd& m);

// ---- t-SNE ----------------------------------------------------------------

struct TsneParams {
    int out_dims = 2;             // 2 or 3
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 0.0;   // <= 0 selects n/12
    double exaggeration = 12.0;
    int exaggeration_iters = 250;
    std::uint64_t seed = 0;
};

struct TsneResult {
    Eigen::MatrixXd embedding;    // n x out_dims
    double kl_initial = 0.0;      // KL at the random initialization
    double kl_final = 0.0;
    double max_entropy_error = 0.0;  // worst |H_i - log(perplexity)| after bandwidth search
};

// Gaussian input similarities with per-point bandwidths binary-searched to the
// target perplexity, Student-t output similarities, gradient descent with
// momentum and early exaggeration. Deterministic given the seed.
TsneResult tsne_embed(const Eigen::MatrixXd& m, const TsneParams& params);

// ---- unified model for the pipeline ----------------------------------------

struct ReducerModel {
    ReducerKind kind = ReducerKind::PCA;
    int out_dims = 2;
    PcaModel pca;
    KpcaModel kpca;
    TsneParams tsne_params;
    Eigen::MatrixXd tsne_embedding;  // training embedding (train-only run)

    nlohmann::json to_json() const;
    static ReducerModel from_json(const nlohmann::json& j);
};

}  // namespace kbid

#endif  // KBID_REDUCE_HPP
