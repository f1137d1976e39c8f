#include "kbid/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "eigen_json.hpp"

namespace kbid {

std::string reducer_name(ReducerKind k) {
    switch (k) {
        case ReducerKind::PCA: return "pca";
        case ReducerKind::KPCA: return "kpca";
        case ReducerKind::TSNE: return "tsne";
    }
    return "?";
}

ReducerKind reducer_from_name(const std::string& name) {
    if (name == "pca") return ReducerKind::PCA;
    if (name == "kpca") return ReducerKind::KPCA;
    if (name == "tsne") return ReducerKind::TSNE;
    throw std::invalid_argument("unknown reducer: " + name);
}

void ReducedFeatures::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "id";
    for (Eigen::Index d = 0; d < coords.cols(); ++d) out << ",dim" << (d + 1);
    out << '\n';
    for (Eigen::Index r = 0; r < coords.rows(); ++r) {
        out << (static_cast<std::size_t>(r) < row_ids.size() ? row_ids[static_cast<std::size_t>(r)]
                                                             : std::to_string(r));
        for (Eigen::Index d = 0; d < coords.cols(); ++d) out << ',' << coords(r, d);
        out << '\n';
    }
}

namespace {

// flip each row so its largest-magnitude entry is positive
void fix_signs(Eigen::MatrixXd& rows) {
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        Eigen::Index arg = 0;
        rows.row(r).cwiseAbs().maxCoeff(&arg);
        if (rows(r, arg) < 0) rows.row(r) = -rows.row(r);
    }
}

}  // namespace

PcaModel pca_fit(const Eigen::MatrixXd& m, int out_dims) {
    require(m.rows() >= 2, "pca_fit: need at least 2 rows");
    require(out_dims >= 1 && out_dims <= m.cols(),
            "pca_fit: out_dims " + std::to_string(out_dims) + " exceeds feature count " +
                std::to_string(m.cols()));

    PcaModel model;
    model.mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - model.mean.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(m.rows() - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("pca_fit: eigendecomposition failed");

    // Eigen returns ascending order; take the trailing out_dims, reversed
    const Eigen::Index nf = m.cols();
    model.components.resize(out_dims, nf);
    model.eigenvalues.resize(out_dims);
    for (int c = 0; c < out_dims; ++c) {
        Eigen::Index src = nf - 1 - c;
        model.components.row(c) = solver.eigenvectors().col(src).transpose();
        model.eigenvalues(c) = solver.eigenvalues()(src);
    }
    fix_signs(model.components);
    return model;
}

Eigen::MatrixXd pca_apply(const PcaModel& model, const Eigen::MatrixXd& m) {
    require(m.cols() == model.mean.size(),
            "pca_apply: feature count mismatch (matrix has " + std::to_string(m.cols()) +
                ", model has " + std::to_string(model.mean.size()) + ")");
    return (m.rowwise() - model.mean.transpose()) * model.components.transpose();
}

double kpca_gamma_heuristic(const Eigen::MatrixXd& m) {
    std::vector<double> sq;
    sq.reserve(static_cast<std::size_t>(m.rows()) * (m.rows() - 1) / 2);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.rows(); ++j)
            sq.push_back((m.row(i) - m.row(j)).squaredNorm());
    if (sq.empty()) return 1.0;
    std::nth_element(sq.begin(), sq.begin() + sq.size() / 2, sq.end());
    double med = sq[sq.size() / 2];
    if (med <= 0.0) return 1.0;
    return 1.0 / med;
}

namespace {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    return k;
}

}  // namespace

KpcaModel kpca_fit(const Eigen::MatrixXd& m, int out_dims, double gamma) {
    require(m.rows() >= 2, "kpca_fit: need at least 2 rows");
    require(gamma > 0.0, "kpca_fit: gamma must be positive");
    require(out_dims >= 1, "kpca_fit: out_dims must be >= 1");

    const Eigen::Index n = m.rows();
    Eigen::MatrixXd k = rbf_kernel(m, m, gamma);

    KpcaModel model;
    model.train = m;
    model.gamma = gamma;
    model.train_kernel_row_means = k.rowwise().mean();
    model.train_kernel_total_mean = k.mean();

    Eigen::MatrixXd centered = k;
    centered.colwise() -= model.train_kernel_row_means;
    centered.rowwise() -= model.train_kernel_row_means.transpose();
    centered.array() += model.train_kernel_total_mean;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("kpca_fit: eigendecomposition failed");

    double max_eig = solver.eigenvalues().cwiseAbs().maxCoeff();
    double tol = 1e-10 * std::max(1.0, max_eig);
    int usable = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (solver.eigenvalues()(i) > tol) ++usable;
    if (usable < out_dims)
        throw std::runtime_error("kpca_fit: only " + std::to_string(usable) +
                                 " positive kernel eigenvalues available, need " +
                                 std::to_string(out_dims));

    model.alphas.resize(n, out_dims);
    model.eigenvalues.resize(out_dims);
    for (int c = 0; c < out_dims; ++c) {
        Eigen::Index src = n - 1 - c;
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        model.alphas.col(c) = v;
        model.eigenvalues(c) = solver.eigenvalues()(src);
    }
    return model;
}

Eigen::MatrixXd kpca_apply(const KpcaModel& model, const Eigen::MatrixXd& m) {
    require(m.cols() == model.train.cols(), "kpca_apply: feature count mismatch");
    Eigen::MatrixXd kt = rbf_kernel(m, model.train, model.gamma);
    Eigen::VectorXd test_row_means = kt.rowwise().mean();
    Eigen::MatrixXd centered = kt;
    centered.rowwise() -= model.train_kernel_row_means.transpose();
    centered.colwise() -= test_row_means;
    centered.array() += model.train_kernel_total_mean;
    Eigen::MatrixXd out = centered * model.alphas;
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) /= std::sqrt(model.eigenvalues(c));
    return out;
}

// ---- t-SNE ------------------------------------------------------------------

namespace {

// returns {probabilities p_{j|i} for fixed i, entropy in nats} at precision beta
std::pair<Eigen::VectorXd, double> row_probs(const Eigen::VectorXd& sqd, Eigen::Index i,
                                             double beta) {
    const Eigen::Index n = sqd.size();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    double shift = std::numeric_limits<double>::max();
    for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) shift = std::min(shift, sqd(j));
    double sum = 0.0, weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        double w = std::exp(-beta * (sqd(j) - shift));
        p(j) = w;
        sum += w;
        weighted += (sqd(j) - shift) * w;
    }
    double entropy = std::log(sum) + beta * weighted / sum;
    p /= sum;
    return {p, entropy};
}

}  // namespace

TsneResult tsne_embed(const Eigen::MatrixXd& m, const TsneParams& params) {
    const Eigen::Index n = m.rows();
    require(params.out_dims == 2 || params.out_dims == 3, "tsne_embed: out_dims must be 2 or 3");
    require(params.perplexity > 0, "tsne_embed: perplexity must be positive");
    if (static_cast<double>(n) < 3.0 * params.perplexity)
        throw std::invalid_argument("tsne_embed: perplexity " + std::to_string(params.perplexity) +
                                    " infeasible for " + std::to_string(n) + " rows");

    // pairwise squared distances
    Eigen::MatrixXd sqd(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sqd(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double d = (m.row(i) - m.row(j)).squaredNorm();
            sqd(i, j) = d;
            sqd(j, i) = d;
        }
    }

    // per-point bandwidth search to the target entropy log(perplexity)
    const double target = std::log(params.perplexity);
    Eigen::MatrixXd cond(n, n);
    double max_entropy_error = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        Eigen::VectorXd p;
        double entropy = 0.0;
        for (int it = 0; it < 200; ++it) {
            std::tie(p, entropy) = row_probs(sqd.row(i), i, beta);
            double diff = entropy - target;
            if (std::abs(diff) < 1e-6) break;
            if (diff > 0) {  // entropy too high -> sharpen
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = beta_lo == 0.0 ? beta / 2.0 : 0.5 * (beta + beta_lo);
            }
        }
        max_entropy_error = std::max(max_entropy_error, std::abs(entropy - target));
        cond.row(i) = p.transpose();
    }

    // symmetrized joint probabilities
    Eigen::MatrixXd pj = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
    pj = pj.cwiseMax(1e-12);
    pj.diagonal().setZero();

    Rng rng(params.seed);
    Eigen::MatrixXd y(n, params.out_dims);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int d = 0; d < params.out_dims; ++d) y(i, d) = 1e-4 * rng.normal();

    double eta = params.learning_rate > 0 ? params.learning_rate
                                          : static_cast<double>(n) / 12.0;

    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, params.out_dims);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, params.out_dims);
    Eigen::MatrixXd w(n, n), q(n, n);

    auto compute_q = [&](const Eigen::MatrixXd& pts) {
        double qsum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            w(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                double t = 1.0 / (1.0 + (pts.row(i) - pts.row(j)).squaredNorm());
                w(i, j) = t;
                w(j, i) = t;
                qsum += 2.0 * t;
            }
        }
        q = (w / qsum).cwiseMax(1e-12);
        q.diagonal().setZero();
    };

    auto kl_divergence = [&]() {
        double kl = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j) kl += pj(i, j) * std::log(pj(i, j) / q(i, j));
        return kl;
    };

    TsneResult result;
    compute_q(y);
    result.kl_initial = kl_divergence();
    result.max_entropy_error = max_entropy_error;

    for (int iter = 0; iter < params.iterations; ++iter) {
        const bool exaggerate = iter < params.exaggeration_iters;
        const double pscale = exaggerate ? params.exaggeration : 1.0;
        compute_q(y);

        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, params.out_dims);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                double coeff = 4.0 * (pscale * pj(i, j) - q(i, j)) * w(i, j);
                grad.row(i) += coeff * (y.row(i) - y.row(j));
            }
        }

        const double momentum = iter < params.exaggeration_iters ? 0.5 : 0.8;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int d = 0; d < params.out_dims; ++d) {
                bool same_sign = (grad(i, d) > 0) == (update(i, d) > 0);
                gains(i, d) = same_sign ? std::max(gains(i, d) * 0.8, 0.01) : gains(i, d) + 0.2;
                update(i, d) = momentum * update(i, d) - eta * gains(i, d) * grad(i, d);
            }
        }
        y += update;
        y.rowwise() -= y.colwise().mean();  // keep the embedding centered
    }

    compute_q(y);
    result.kl_final = kl_divergence();
    result.embedding = y;
    return result;
}

// ---- ReducerModel JSON ------------------------------------------------------

using detail::matrix_from_json;
using detail::matrix_to_json;
using detail::vector_from_json;
using detail::vector_to_json;

nlohmann::json ReducerModel::to_json() const {
    nlohmann::json j;
    j["kind"] = reducer_name(kind);
    j["out_dims"] = out_dims;
    switch (kind) {
        case ReducerKind::PCA:
            j["mean"] = vector_to_json(pca.mean);
            j["components"] = matrix_to_json(pca.components);
            j["eigenvalues"] = vector_to_json(pca.eigenvalues);
            break;
        case ReducerKind::KPCA:
            j["train"] = matrix_to_json(kpca.train);
            j["gamma"] = kpca.gamma;
            j["alphas"] = matrix_to_json(kpca.alphas);
            j["eigenvalues"] = vector_to_json(kpca.eigenvalues);
            j["row_means"] = vector_to_json(kpca.train_kernel_row_means);
            j["total_mean"] = kpca.train_kernel_total_mean;
            break;
        case ReducerKind::TSNE:
            j["perplexity"] = tsne_params.perplexity;
            j["iterations"] = tsne_params.iterations;
            j["learning_rate"] = tsne_params.learning_rate;
            j["exaggeration"] = tsne_params.exaggeration;
            j["exaggeration_iters"] = tsne_params.exaggeration_iters;
            j["seed"] = tsne_params.seed;
            j["embedding"] = matrix_to_json(tsne_embedding);
            break;
    }
    return j;
}

ReducerModel ReducerModel::from_json(const nlohmann::json& j) {
    ReducerModel m;
    m.kind = reducer_from_name(j.at("kind").get<std::string>());
    m.out_dims = j.at("out_dims").get<int>();
    switch (m.kind) {
        case ReducerKind::PCA:
            m.pca.mean = vector_from_json(j.at("mean"));
            m.pca.components = matrix_from_json(j.at("components"));
            m.pca.eigenvalues = vector_from_json(j.at("eigenvalues"));
            break;
        case ReducerKind::KPCA:
            m.kpca.train = matrix_from_json(j.at("train"));
            m.kpca.gamma = j.at("gamma").get<double>();
            m.kpca.alphas = matrix_from_json(j.at("alphas"));
            m.kpca.eigenvalues = vector_from_json(j.at("eigenvalues"));
            m.kpca.train_kernel_row_means = vector_from_json(j.at("row_means"));
            m.kpca.train_kernel_total_mean = j.at("total_mean").get<double>();
            break;
        case ReducerKind::TSNE:
            m.tsne_params.out_dims = m.out_dims;
            m.tsne_params.perplexity = j.at("perplexity").get<double>();
            m.tsne_params.iterations = j.at("iterations").get<int>();
            m.tsne_params.learning_rate = j.at("learning_rate").get<double>();
            m.tsne_params.exaggeration = j.at("exaggeration").get<double>();
            m.tsne_params.exaggeration_iters = j.at("exaggeration_iters").get<int>();
            m.tsne_params.seed = j.at("seed").get<std::uint64_t>();
            m.tsne_embedding = matrix_from_json(j.at("embedding"));
            break;
    }
    return m;
}

}  // namespace kbid
