#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kbid/cluster.hpp"
#include "kbid/dataset.hpp"
#include "kbid/metrics.hpp"
#include "kbid/qtransform.hpp"
#include "kbid/reduce.hpp"
#include "kbid/unloc.hpp"

namespace kbid {

enum class Classifier { NN, UNLOC };

std::string classifier_name(Classifier c);
Classifier classifier_from_name(const std::string& name);

std::string split_mode_name(SplitSpec::Mode m);
SplitSpec::Mode split_mode_from_name(const std::string& name);

struct PipelineConfig {
    bool quantile = true;
    int n_quantiles = 0;  // 0 selects min(1000, rows)
    ReducerKind reducer = ReducerKind::PCA;
    int dims = 2;
    ClusterMethod cluster = ClusterMethod::XMEANS;
    Classifier classifier = Classifier::NN;
    int knn_k = 1;
    double dbscan_eps = 0.0;  // <= 0 derives from the data
    int dbscan_min_samples = 5;
    int gmm_max_k = 10;
    int xmeans_max_k = 20;
    double kpca_gamma = 0.0;       // <= 0 selects the median heuristic
    double tsne_perplexity = 0.0;  // <= 0 selects min(30, (rows-1)/3)
    int tsne_iterations = 1000;
    UnlocParams unloc;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

// Everything needed to identify new samples: the fitted transforms, the
// discovered clusters with their reduced-space anchors, per-cluster timing
// templates on the transformed features, and the cluster-to-user assignment
// chosen to maximize agreement on the training data.
struct TrainedModel {
    PipelineConfig config;
    std::vector<std::string> feature_names;
    QuantileModel qmodel;
    ReducerModel reducer;
    Eigen::MatrixXd transformed_train;  // quantile output (or raw passthrough)
    Eigen::MatrixXd reduced_train;
    std::vector<int> cluster_labels;  // per train row, -1 marks noise
    int k = 0;
    Eigen::MatrixXd anchors;  // k x dims cluster centers in reduced space
    std::vector<UserTemplate> templates;       // one per cluster
    std::vector<std::string> cluster_user;     // cluster -> user label
    std::vector<bool> cluster_matched;         // false for clusters with no user
    std::vector<std::string> train_users;      // ground truth per train row
    std::vector<std::pair<int, double>> bic_by_k;
    double train_ari = 0.0;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static TrainedModel load(const std::string& path);
};

struct IdentifyResult {
    std::string predicted_user;
    int cluster = -1;
    Eigen::VectorXd position;  // reduced-space coordinates the decision used
    bool ambiguous = false;
};

// Maximum-agreement matching of cluster rows to user columns on a
// contingency table. Returns the column index per row, -1 when unmatched.
std::vector<int> optimal_assignment(const Eigen::MatrixXd& counts);

TrainedModel train(const FeatureMatrix& data, const PipelineConfig& config);

// Batch identification. The nearest-neighbour classifier projects the batch
// into the reduced space (a fresh joint embedding when the reducer has no
// out-of-sample map); the localization classifier places each sample from
// cross-distances alone and never re-embeds.
std::vector<IdentifyResult> identify(const TrainedModel& model, const Eigen::MatrixXd& tests);

// ---- experiments -------------------------------------------------------------

struct ExperimentCell {
    std::string label;
    PipelineConfig config;
};

struct ExperimentGrid {
    std::vector<int> sample_sizes{50};
    std::vector<int> user_counts{4};
    std::vector<SplitSpec::Mode> split_modes{SplitSpec::Mode::RANDOM};
    std::vector<ExperimentCell> cells;
    double train_fraction = 0.8;
    double outlier_k = 1.5;
    int trials = 5;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct TrialRecord {
    int sample_size = 0;
    int n_users = 0;
    SplitSpec::Mode mode = SplitSpec::Mode::RANDOM;
    std::string cell;
    int trial = 0;
    bool skipped = false;
    std::string skip_reason;
    double accuracy = 0.0;  // fraction in [0,1]
    double ari = 0.0;       // train clusters vs ground truth
    int est_k = 0;
    int train_rows = 0;
    int test_rows = 0;
    double seconds = 0.0;
};

struct AggregateRow {
    int sample_size = 0;
    int n_users = 0;
    SplitSpec::Mode mode = SplitSpec::Mode::RANDOM;
    std::string cell;
    int n_trials = 0;
    int n_skipped = 0;
    double mean_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;
    double mean_ari = 0.0;
    double mean_est_k = 0.0;
};

struct ExperimentReport {
    std::vector<TrialRecord> records;
    std::uint64_t seed = 1;

    std::vector<AggregateRow> aggregates() const;
    void save_csv(const std::string& path) const;  // byte-stable across runs
    nlohmann::json to_json() const;
    std::string render_table() const;
};

// Full cross of sizes x user counts x split modes x cells x trials. Data
// preparation is shared by all cells of a trial so comparisons are paired.
// Failures of individual trials are recorded as skips, never thrown.
ExperimentReport run_experiment(const Dataset& ds, const ExperimentGrid& grid);

}  // namespace kbid
