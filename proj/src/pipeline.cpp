#include "kbid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "eigen_json.hpp"

namespace kbid {

using detail::matrix_from_json;
using detail::matrix_to_json;
using detail::vector_from_json;
using detail::vector_to_json;

std::string classifier_name(Classifier c) {
    return c == Classifier::NN ? "nn" : "unloc";
}

Classifier classifier_from_name(const std::string& name) {
    if (name == "nn") return Classifier::NN;
    if (name == "unloc") return Classifier::UNLOC;
    throw std::invalid_argument("unknown classifier: " + name);
}

std::string split_mode_name(SplitSpec::Mode m) {
    switch (m) {
        case SplitSpec::Mode::INTRA_SESSION: return "intra";
        case SplitSpec::Mode::INTER_SESSION: return "inter";
        case SplitSpec::Mode::RANDOM: return "random";
    }
    return "?";
}

SplitSpec::Mode split_mode_from_name(const std::string& name) {
    if (name == "intra") return SplitSpec::Mode::INTRA_SESSION;
    if (name == "inter") return SplitSpec::Mode::INTER_SESSION;
    if (name == "random") return SplitSpec::Mode::RANDOM;
    throw std::invalid_argument("unknown session mode: " + name);
}

nlohmann::json PipelineConfig::to_json() const {
    return nlohmann::json{{"quantile", quantile},
                          {"n_quantiles", n_quantiles},
                          {"reducer", reducer_name(reducer)},
                          {"dims", dims},
                          {"cluster", cluster_method_name(cluster)},
                          {"classifier", classifier_name(classifier)},
                          {"knn_k", knn_k},
                          {"dbscan_eps", dbscan_eps},
                          {"dbscan_min_samples", dbscan_min_samples},
                          {"gmm_max_k", gmm_max_k},
                          {"xmeans_max_k", xmeans_max_k},
                          {"kpca_gamma", kpca_gamma},
                          {"tsne_perplexity", tsne_perplexity},
                          {"tsne_iterations", tsne_iterations},
                          {"unloc_tie_tolerance", unloc.tie_tolerance},
                          {"unloc_isotonic", unloc.isotonic_map},
                          {"unloc_per_reference", unloc.per_reference_map},
                          {"unloc_restarts", unloc.restarts},
                          {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.quantile = j.value("quantile", c.quantile);
    c.n_quantiles = j.value("n_quantiles", c.n_quantiles);
    if (j.contains("reducer")) c.reducer = reducer_from_name(j.at("reducer").get<std::string>());
    c.dims = j.value("dims", c.dims);
    if (j.contains("cluster"))
        c.cluster = cluster_method_from_name(j.at("cluster").get<std::string>());
    if (j.contains("classifier"))
        c.classifier = classifier_from_name(j.at("classifier").get<std::string>());
    c.knn_k = j.value("knn_k", c.knn_k);
    c.dbscan_eps = j.value("dbscan_eps", c.dbscan_eps);
    c.dbscan_min_samples = j.value("dbscan_min_samples", c.dbscan_min_samples);
    c.gmm_max_k = j.value("gmm_max_k", c.gmm_max_k);
    c.xmeans_max_k = j.value("xmeans_max_k", c.xmeans_max_k);
    c.kpca_gamma = j.value("kpca_gamma", c.kpca_gamma);
    c.tsne_perplexity = j.value("tsne_perplexity", c.tsne_perplexity);
    c.tsne_iterations = j.value("tsne_iterations", c.tsne_iterations);
    c.unloc.tie_tolerance = j.value("unloc_tie_tolerance", c.unloc.tie_tolerance);
    c.unloc.isotonic_map = j.value("unloc_isotonic", c.unloc.isotonic_map);
    c.unloc.per_reference_map = j.value("unloc_per_reference", c.unloc.per_reference_map);
    c.unloc.restarts = j.value("unloc_restarts", c.unloc.restarts);
    c.seed = j.value("seed", c.seed);
    return c;
}

// ---- assignment ---------------------------------------------------------------

std::vector<int> optimal_assignment(const Eigen::MatrixXd& counts) {
    const int rows = static_cast<int>(counts.rows());
    const int cols = static_cast<int>(counts.cols());
    require(rows >= 1 && cols >= 1, "optimal_assignment: empty table");

    const int n = std::max(rows, cols);
    double maxw = counts.maxCoeff();
    // square min-cost matrix; padding behaves like zero-count cells
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n + 1, n + 1, maxw);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) cost(i + 1, j + 1) = maxw - counts(i, j);

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] -
                             v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> result(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[static_cast<std::size_t>(j)];
        if (i >= 1 && i <= rows && j <= cols && counts(i - 1, j - 1) > 0.0)
            result[static_cast<std::size_t>(i - 1)] = j - 1;
    }
    return result;
}

// ---- training -------------------------------------------------------------------

namespace {

double effective_perplexity(double configured, Eigen::Index rows) {
    if (configured > 0.0) return configured;
    return std::min(30.0, std::max(2.0, std::floor(static_cast<double>(rows - 1) / 3.0)));
}

std::vector<std::string> distinct_users(const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    std::unordered_map<std::string, int> seen;
    for (const auto& id : ids)
        if (seen.emplace(id, 1).second) out.push_back(id);
    return out;
}

}  // namespace

TrainedModel train(const FeatureMatrix& data, const PipelineConfig& config) {
    const Eigen::Index n = data.rows();
    require(n >= 4, "train: need at least 4 samples");
    require(data.user_ids.size() == static_cast<std::size_t>(n),
            "train: every sample needs a user label");
    require(config.dims >= 1, "train: dims must be >= 1");
    require(config.knn_k >= 1, "train: knn_k must be >= 1");

    TrainedModel model;
    model.config = config;
    model.train_users = data.user_ids;

    if (config.quantile) {
        model.qmodel = config.n_quantiles > 0 ? fit_quantile(data.values, config.n_quantiles)
                                              : fit_quantile(data.values);
        model.transformed_train = apply_quantile(model.qmodel, data.values);
    } else {
        model.transformed_train = data.values;
    }

    Rng rng(config.seed);
    model.reducer.kind = config.reducer;
    model.reducer.out_dims = config.dims;
    switch (config.reducer) {
        case ReducerKind::PCA:
            model.reducer.pca = pca_fit(model.transformed_train, config.dims);
            model.reduced_train = pca_apply(model.reducer.pca, model.transformed_train);
            break;
        case ReducerKind::KPCA: {
            double gamma = config.kpca_gamma > 0.0 ? config.kpca_gamma
                                                   : kpca_gamma_heuristic(model.transformed_train);
            model.reducer.kpca = kpca_fit(model.transformed_train, config.dims, gamma);
            model.reduced_train = kpca_apply(model.reducer.kpca, model.transformed_train);
            break;
        }
        case ReducerKind::TSNE: {
            TsneParams p;
            p.out_dims = config.dims;
            p.perplexity = effective_perplexity(config.tsne_perplexity, n);
            p.iterations = config.tsne_iterations;
            p.seed = rng.fork(1).seed();
            TsneResult res = tsne_embed(model.transformed_train, p);
            model.reducer.tsne_params = p;
            model.reducer.tsne_embedding = res.embedding;
            model.reduced_train = res.embedding;
            break;
        }
    }

    ClusterResult clusters;
    switch (config.cluster) {
        case ClusterMethod::DBSCAN: {
            DbscanParams dp;
            dp.eps = config.dbscan_eps;
            dp.min_samples = config.dbscan_min_samples;
            clusters = dbscan(model.reduced_train, dp);
            break;
        }
        case ClusterMethod::GMM: {
            GmmSelectParams gp;
            gp.max_k = config.gmm_max_k;
            Rng crng = rng.fork(2);
            clusters = gmm_select(model.reduced_train, gp, crng);
            break;
        }
        case ClusterMethod::XMEANS: {
            XMeansParams xp;
            xp.max_k = config.xmeans_max_k;
            Rng crng = rng.fork(2);
            clusters = xmeans(model.reduced_train, xp, crng);
            break;
        }
    }
    if (clusters.k == 0)
        throw std::runtime_error("train: no clusters found, every sample was marked noise");

    // drop clusters that ended up with no members and relabel compactly
    std::vector<int> members_of(static_cast<std::size_t>(clusters.k), 0);
    for (int lab : clusters.labels)
        if (lab >= 0) ++members_of[static_cast<std::size_t>(lab)];
    std::vector<int> remap(static_cast<std::size_t>(clusters.k), -1);
    int kept = 0;
    for (int c = 0; c < clusters.k; ++c)
        if (members_of[static_cast<std::size_t>(c)] > 0) remap[static_cast<std::size_t>(c)] = kept++;
    if (kept == 0) throw std::runtime_error("train: no clusters found, every sample was marked noise");

    model.k = kept;
    model.cluster_labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        int lab = clusters.labels[static_cast<std::size_t>(i)];
        model.cluster_labels[static_cast<std::size_t>(i)] = lab >= 0 ? remap[static_cast<std::size_t>(lab)] : -1;
    }
    model.anchors.resize(kept, model.reduced_train.cols());
    for (int c = 0; c < clusters.k; ++c)
        if (remap[static_cast<std::size_t>(c)] >= 0)
            model.anchors.row(remap[static_cast<std::size_t>(c)]) = clusters.centroids.row(c);
    model.bic_by_k = clusters.bic_by_k;

    // per-cluster timing templates on the transformed features
    for (int c = 0; c < kept; ++c) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < n; ++i)
            if (model.cluster_labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), model.transformed_train.cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
            pts.row(static_cast<Eigen::Index>(r)) = model.transformed_train.row(rows[r]);
        model.templates.push_back(build_template("cluster-" + std::to_string(c), pts));
    }

    // agreement with ground truth; noise keeps its own shared label
    auto users = distinct_users(data.user_ids);
    std::unordered_map<std::string, int> user_index;
    for (std::size_t i = 0; i < users.size(); ++i) user_index[users[i]] = static_cast<int>(i);
    std::vector<int> truth(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        truth[static_cast<std::size_t>(i)] = user_index[data.user_ids[static_cast<std::size_t>(i)]];
    model.train_ari = adjusted_rand_index(model.cluster_labels, truth);

    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kept, static_cast<Eigen::Index>(users.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        int lab = model.cluster_labels[static_cast<std::size_t>(i)];
        if (lab >= 0) counts(lab, truth[static_cast<std::size_t>(i)]) += 1.0;
    }
    std::vector<int> assign = optimal_assignment(counts);
    model.cluster_user.resize(static_cast<std::size_t>(kept));
    model.cluster_matched.resize(static_cast<std::size_t>(kept));
    for (int c = 0; c < kept; ++c) {
        if (assign[static_cast<std::size_t>(c)] >= 0) {
            model.cluster_user[static_cast<std::size_t>(c)] =
                users[static_cast<std::size_t>(assign[static_cast<std::size_t>(c)])];
            model.cluster_matched[static_cast<std::size_t>(c)] = true;
        } else {
            model.cluster_user[static_cast<std::size_t>(c)] = "unassigned-" + std::to_string(c);
            model.cluster_matched[static_cast<std::size_t>(c)] = false;
        }
    }
    return model;
}

// ---- identification ----------------------------------------------------------

namespace {

// nearest labeled training rows; majority vote, ties to the closest member
int knn_cluster(const Eigen::MatrixXd& ref, const std::vector<int>& labels,
                const Eigen::VectorXd& point, int k) {
    std::vector<std::pair<double, Eigen::Index>> dist;
    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0) continue;
        dist.emplace_back((ref.row(i).transpose() - point).norm(), i);
    }
    std::sort(dist.begin(), dist.end());
    int take = std::min<int>(k, static_cast<int>(dist.size()));
    std::map<int, int> votes;
    for (int i = 0; i < take; ++i)
        ++votes[labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)]];
    int best_count = 0;
    for (const auto& [lab, cnt] : votes) best_count = std::max(best_count, cnt);
    for (int i = 0; i < take; ++i) {
        int lab = labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)];
        if (votes[lab] == best_count) return lab;
    }
    return dist.empty() ? -1 : labels[static_cast<std::size_t>(dist.front().second)];
}

}  // namespace

std::vector<IdentifyResult> identify(const TrainedModel& model, const Eigen::MatrixXd& tests) {
    require(tests.cols() == model.transformed_train.cols(),
            "identify: feature count mismatch with the trained model");
    const Eigen::Index nt = tests.rows();
    std::vector<IdentifyResult> results(static_cast<std::size_t>(nt));
    if (nt == 0) return results;

    Eigen::MatrixXd q = model.config.quantile ? apply_quantile(model.qmodel, tests) : tests;

    if (model.config.classifier == Classifier::NN) {
        Eigen::MatrixXd test_red;
        Eigen::MatrixXd ref = model.reduced_train;
        switch (model.config.reducer) {
            case ReducerKind::PCA:
                test_red = pca_apply(model.reducer.pca, q);
                break;
            case ReducerKind::KPCA:
                test_red = kpca_apply(model.reducer.kpca, q);
                break;
            case ReducerKind::TSNE: {
                // no out-of-sample map: embed train and test jointly
                Eigen::MatrixXd joint(model.transformed_train.rows() + nt, q.cols());
                joint << model.transformed_train, q;
                TsneParams p = model.reducer.tsne_params;
                TsneResult res = tsne_embed(joint, p);
                ref = res.embedding.topRows(model.transformed_train.rows());
                test_red = res.embedding.bottomRows(nt);
                break;
            }
        }
        for (Eigen::Index i = 0; i < nt; ++i) {
            int cluster =
                knn_cluster(ref, model.cluster_labels, test_red.row(i).transpose(), model.config.knn_k);
            auto& r = results[static_cast<std::size_t>(i)];
            r.cluster = cluster;
            r.position = test_red.row(i).transpose();
            r.predicted_user =
                cluster >= 0 ? model.cluster_user[static_cast<std::size_t>(cluster)] : "";
        }
        return results;
    }

    // localization path
    std::vector<Eigen::MatrixXd> by_cluster(static_cast<std::size_t>(model.k));
    {
        std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(model.k));
        for (Eigen::Index i = 0; i < model.transformed_train.rows(); ++i) {
            int lab = model.cluster_labels[static_cast<std::size_t>(i)];
            if (lab >= 0) rows[static_cast<std::size_t>(lab)].push_back(i);
        }
        for (int c = 0; c < model.k; ++c) {
            auto& idx = rows[static_cast<std::size_t>(c)];
            Eigen::MatrixXd pts(static_cast<Eigen::Index>(idx.size()),
                                model.transformed_train.cols());
            for (std::size_t r = 0; r < idx.size(); ++r)
                pts.row(static_cast<Eigen::Index>(r)) = model.transformed_train.row(idx[r]);
            by_cluster[static_cast<std::size_t>(c)] = std::move(pts);
        }
    }

    Rng rng(model.config.seed);
    for (Eigen::Index i = 0; i < nt; ++i) {
        CrossDistanceMatrix cross =
            cross_distances(model.templates, by_cluster, q.row(i).transpose());
        Rng lrng = rng.fork(1000 + static_cast<std::uint64_t>(i));
        LocalizationEstimate est = localize(model.anchors, cross, model.config.unloc, lrng);
        int cluster = knn_cluster(model.reduced_train, model.cluster_labels, est.position,
                                  model.config.knn_k);
        auto& r = results[static_cast<std::size_t>(i)];
        r.cluster = cluster;
        r.position = est.position;
        r.ambiguous = est.ambiguous;
        r.predicted_user =
            cluster >= 0 ? model.cluster_user[static_cast<std::size_t>(cluster)] : "";
    }
    return results;
}

// ---- model serialization -------------------------------------------------------

nlohmann::json TrainedModel::to_json() const {
    nlohmann::json j;
    j["config"] = config.to_json();
    j["feature_names"] = feature_names;
    j["quantile_model"] = config.quantile ? qmodel.to_json() : nlohmann::json();
    j["reducer"] = reducer.to_json();
    j["transformed_train"] = matrix_to_json(transformed_train);
    j["reduced_train"] = matrix_to_json(reduced_train);
    j["cluster_labels"] = cluster_labels;
    j["k"] = k;
    j["anchors"] = matrix_to_json(anchors);
    nlohmann::json tpl = nlohmann::json::array();
    for (const auto& t : templates)
        tpl.push_back({{"user_id", t.user_id},
                       {"mean", vector_to_json(t.mean)},
                       {"mad", vector_to_json(t.mad)},
                       {"n_samples", t.n_samples}});
    j["templates"] = tpl;
    j["cluster_user"] = cluster_user;
    j["cluster_matched"] = cluster_matched;
    j["train_users"] = train_users;
    nlohmann::json bk = nlohmann::json::array();
    for (const auto& [kk, b] : bic_by_k) bk.push_back({{"k", kk}, {"bic", b}});
    j["bic_by_k"] = bk;
    j["train_ari"] = train_ari;
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    TrainedModel m;
    m.config = PipelineConfig::from_json(j.at("config"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (m.config.quantile) m.qmodel = QuantileModel::from_json(j.at("quantile_model"));
    m.reducer = ReducerModel::from_json(j.at("reducer"));
    m.transformed_train = matrix_from_json(j.at("transformed_train"));
    m.reduced_train = matrix_from_json(j.at("reduced_train"));
    m.cluster_labels = j.at("cluster_labels").get<std::vector<int>>();
    m.k = j.at("k").get<int>();
    m.anchors = matrix_from_json(j.at("anchors"));
    for (const auto& t : j.at("templates")) {
        UserTemplate tpl;
        tpl.user_id = t.at("user_id").get<std::string>();
        tpl.mean = vector_from_json(t.at("mean"));
        tpl.mad = vector_from_json(t.at("mad"));
        tpl.n_samples = t.at("n_samples").get<std::size_t>();
        m.templates.push_back(std::move(tpl));
    }
    m.cluster_user = j.at("cluster_user").get<std::vector<std::string>>();
    m.cluster_matched = j.at("cluster_matched").get<std::vector<bool>>();
    m.train_users = j.at("train_users").get<std::vector<std::string>>();
    for (const auto& b : j.at("bic_by_k"))
        m.bic_by_k.emplace_back(b.at("k").get<int>(), b.at("bic").get<double>());
    m.train_ari = j.at("train_ari").get<double>();
    return m;
}

void TrainedModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << to_json().dump(2) << '\n';
}

TrainedModel TrainedModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

// ---- experiments ---------------------------------------------------------------

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

struct Combo {
    SplitSpec::Mode mode;
    int n_users;
    int sample_size;
    int trial;
};

}  // namespace

ExperimentReport run_experiment(const Dataset& ds, const ExperimentGrid& grid) {
    require(!grid.cells.empty(), "run_experiment: no cells configured");
    require(grid.trials >= 1, "run_experiment: trials must be >= 1");
    require(grid.train_fraction > 0.0 && grid.train_fraction < 1.0,
            "run_experiment: train_fraction must be in (0,1)");

    std::vector<Combo> combos;
    for (auto mode : grid.split_modes)
        for (int users_n : grid.user_counts)
            for (int size : grid.sample_sizes)
                for (int t = 0; t < grid.trials; ++t)
                    combos.push_back({mode, users_n, size, t});

    ExperimentReport report;
    report.seed = grid.seed;
    report.records.resize(combos.size() * grid.cells.size());

    Rng base(grid.seed);
    auto run_combo = [&](std::size_t ci) {
        const Combo& combo = combos[ci];
        // purpose-stamped streams; seeds depend on the trial only so the same
        // trial shares users, per-user subsamples, and splits across cells
        constexpr std::uint64_t kPurpose = 1000003;
        const std::uint64_t user_seed =
            base.fork(kPurpose * 1 + static_cast<std::uint64_t>(combo.trial)).seed();
        const std::uint64_t sub_seed =
            base.fork(kPurpose * 2 + static_cast<std::uint64_t>(combo.trial)).seed();
        const std::uint64_t split_seed =
            base.fork(kPurpose * 3 + static_cast<std::uint64_t>(combo.trial)).seed();

        std::string prep_error;
        Dataset train_ds, test_ds;
        try {
            Dataset chosen = select_users(ds, static_cast<std::size_t>(combo.n_users), user_seed);
            Dataset sub = subsample_per_user(chosen, static_cast<std::size_t>(combo.sample_size),
                                             sub_seed);
            Dataset filtered = remove_outliers(sub, grid.outlier_k);
            SplitSpec spec;
            spec.mode = combo.mode;
            spec.train_fraction = grid.train_fraction;
            spec.seed = split_seed;
            std::tie(train_ds, test_ds) = split(filtered, spec);
        } catch (const std::exception& e) {
            prep_error = e.what();
        }

        FeatureMatrix train_m, test_m;
        if (prep_error.empty()) {
            train_m = train_ds.features();
            test_m = test_ds.features();
        }

        for (std::size_t cell_i = 0; cell_i < grid.cells.size(); ++cell_i) {
            TrialRecord& rec = report.records[ci * grid.cells.size() + cell_i];
            rec.sample_size = combo.sample_size;
            rec.n_users = combo.n_users;
            rec.mode = combo.mode;
            rec.cell = grid.cells[cell_i].label;
            rec.trial = combo.trial;

            if (!prep_error.empty()) {
                rec.skipped = true;
                rec.skip_reason = prep_error;
                continue;
            }
            rec.train_rows = static_cast<int>(train_m.rows());
            rec.test_rows = static_cast<int>(test_m.rows());

            auto t0 = std::chrono::steady_clock::now();
            try {
                PipelineConfig cfg = grid.cells[cell_i].config;
                std::uint64_t stream =
                    (((static_cast<std::uint64_t>(combo.mode) * 64 +
                       static_cast<std::uint64_t>(combo.n_users)) *
                          4096 +
                      static_cast<std::uint64_t>(combo.sample_size)) *
                         1024 +
                     static_cast<std::uint64_t>(combo.trial)) *
                        64 +
                    cell_i;
                cfg.seed = base.fork(kPurpose * 4 + stream).seed();

                TrainedModel model = train(train_m, cfg);
                auto results = identify(model, test_m.values);

                int correct = 0;
                for (Eigen::Index i = 0; i < test_m.rows(); ++i)
                    if (results[static_cast<std::size_t>(i)].predicted_user ==
                        test_m.user_ids[static_cast<std::size_t>(i)])
                        ++correct;
                rec.accuracy = test_m.rows() > 0
                                   ? static_cast<double>(correct) / static_cast<double>(test_m.rows())
                                   : 0.0;
                rec.ari = model.train_ari;
                rec.est_k = model.k;
            } catch (const std::exception& e) {
                rec.skipped = true;
                rec.skip_reason = e.what();
            }
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };

    int jobs = std::max(1, grid.jobs);
    if (jobs == 1) {
        for (std::size_t ci = 0; ci < combos.size(); ++ci) run_combo(ci);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    std::size_t ci = next.fetch_add(1);
                    if (ci >= combos.size()) return;
                    run_combo(ci);
                }
            });
        for (auto& th : pool) th.join();
    }
    return report;
}

std::vector<AggregateRow> ExperimentReport::aggregates() const {
    std::vector<AggregateRow> rows;
    auto find_row = [&](const TrialRecord& rec) -> AggregateRow& {
        for (auto& r : rows)
            if (r.sample_size == rec.sample_size && r.n_users == rec.n_users &&
                r.mode == rec.mode && r.cell == rec.cell)
                return r;
        AggregateRow r;
        r.sample_size = rec.sample_size;
        r.n_users = rec.n_users;
        r.mode = rec.mode;
        r.cell = rec.cell;
        r.min_accuracy = std::numeric_limits<double>::infinity();
        r.max_accuracy = -std::numeric_limits<double>::infinity();
        rows.push_back(r);
        return rows.back();
    };

    for (const auto& rec : records) {
        AggregateRow& r = find_row(rec);
        ++r.n_trials;
        if (rec.skipped) {
            ++r.n_skipped;
            continue;
        }
        r.mean_accuracy += rec.accuracy;
        r.min_accuracy = std::min(r.min_accuracy, rec.accuracy);
        r.max_accuracy = std::max(r.max_accuracy, rec.accuracy);
        r.mean_ari += rec.ari;
        r.mean_est_k += rec.est_k;
    }
    for (auto& r : rows) {
        int n = r.n_trials - r.n_skipped;
        if (n > 0) {
            r.mean_accuracy /= n;
            r.mean_ari /= n;
            r.mean_est_k /= n;
        } else {
            r.min_accuracy = 0.0;
            r.max_accuracy = 0.0;
        }
    }
    return rows;
}

void ExperimentReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "sample_size,n_users,split_mode,cell,trial,skipped,skip_reason,"
           "accuracy,ari,est_k,train_rows,test_rows\n";
    for (const auto& r : records) {
        out << r.sample_size << ',' << r.n_users << ',' << split_mode_name(r.mode) << ','
            << csv_field(r.cell) << ',' << r.trial << ',' << (r.skipped ? 1 : 0) << ','
            << csv_field(r.skip_reason) << ',' << fixed6(r.accuracy) << ',' << fixed6(r.ari)
            << ',' << r.est_k << ',' << r.train_rows << ',' << r.test_rows << '\n';
    }
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records)
        recs.push_back({{"sample_size", r.sample_size},
                        {"n_users", r.n_users},
                        {"split_mode", split_mode_name(r.mode)},
                        {"cell", r.cell},
                        {"trial", r.trial},
                        {"skipped", r.skipped},
                        {"skip_reason", r.skip_reason},
                        {"accuracy", r.accuracy},
                        {"ari", r.ari},
                        {"est_k", r.est_k},
                        {"train_rows", r.train_rows},
                        {"test_rows", r.test_rows},
                        {"seconds", r.seconds}});
    j["records"] = recs;
    nlohmann::json aggs = nlohmann::json::array();
    for (const auto& a : aggregates())
        aggs.push_back({{"sample_size", a.sample_size},
                        {"n_users", a.n_users},
                        {"split_mode", split_mode_name(a.mode)},
                        {"cell", a.cell},
                        {"n_trials", a.n_trials},
                        {"n_skipped", a.n_skipped},
                        {"mean_accuracy", a.mean_accuracy},
                        {"min_accuracy", a.min_accuracy},
                        {"max_accuracy", a.max_accuracy},
                        {"mean_ari", a.mean_ari},
                        {"mean_est_k", a.mean_est_k}});
    j["aggregates"] = aggs;
    return j;
}

std::string ExperimentReport::render_table() const {
    auto aggs = aggregates();
    if (aggs.empty()) return "(no results)\n";

    std::vector<std::string> cells;
    for (const auto& a : aggs)
        if (std::find(cells.begin(), cells.end(), a.cell) == cells.end()) cells.push_back(a.cell);

    std::vector<SplitSpec::Mode> modes;
    for (const auto& a : aggs)
        if (std::find(modes.begin(), modes.end(), a.mode) == modes.end()) modes.push_back(a.mode);

    bool vary_users = false;
    for (const auto& a : aggs)
        if (a.n_users != aggs.front().n_users) vary_users = true;

    std::ostringstream out;
    auto lookup = [&](SplitSpec::Mode mode, int row_value, const std::string& cell)
        -> const AggregateRow* {
        for (const auto& a : aggs) {
            int rv = vary_users ? a.n_users : a.sample_size;
            if (a.mode == mode && rv == row_value && a.cell == cell) return &a;
        }
        return nullptr;
    };

    std::vector<int> row_values;
    for (const auto& a : aggs) {
        int rv = vary_users ? a.n_users : a.sample_size;
        if (std::find(row_values.begin(), row_values.end(), rv) == row_values.end())
            row_values.push_back(rv);
    }

    const std::string row_label = vary_users ? "users" : "samples";
    for (auto mode : modes) {
        out << "split=" << split_mode_name(mode) << "  accuracy % (mean over trials)\n";
        out << "  " << row_label;
        for (const auto& c : cells) out << '\t' << c;
        out << '\n';
        for (int rv : row_values) {
            out << "  " << rv;
            for (const auto& c : cells) {
                const AggregateRow* a = lookup(mode, rv, c);
                out << '\t';
                if (!a || a->n_trials == a->n_skipped) out << "-";
                else {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * a->mean_accuracy);
                    out << buf;
                }
            }
            out << '\n';
        }
        out << "split=" << split_mode_name(mode) << "  estimated k (mean ARI)\n";
        out << "  " << row_label;
        for (const auto& c : cells) out << '\t' << c;
        out << '\n';
        for (int rv : row_values) {
            out << "  " << rv;
            for (const auto& c : cells) {
                const AggregateRow* a = lookup(mode, rv, c);
                out << '\t';
                if (!a || a->n_trials == a->n_skipped) out << "-";
                else {
                    char buf[48];
                    std::snprintf(buf, sizeof(buf), "%.1f (%.2f)", a->mean_est_k, a->mean_ari);
                    out << buf;
                }
            }
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace kbid
