#include "spikerep/gmm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spikerep {
namespace {

// Row-wise log N(x | mean, cov) via Cholesky.
Eigen::VectorXd log_gaussian(const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& mean,
                             const Eigen::MatrixXd& cov) {
    const int d = static_cast<int>(mean.size());
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("gmm: covariance not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(L(i, i));

    const Eigen::MatrixXd centered = X.rowwise() - mean.transpose();
    const Eigen::MatrixXd solved =
        L.triangularView<Eigen::Lower>().solve(centered.transpose());
    return -0.5 * (solved.colwise().squaredNorm().transpose().array() + log_det +
                   d * std::log(2.0 * std::numbers::pi));
}

Eigen::MatrixXd kmeanspp_means(const Eigen::MatrixXd& X, int K, Rng& rng) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd means(K, X.cols());
    means.row(0) = X.row(rng.uniform_int(0, n - 1));
    Eigen::VectorXd min_sq =
        (X.rowwise() - means.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = min_sq.sum();
        int chosen = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += min_sq(i);
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = static_cast<int>(rng.uniform_int(0, n - 1));
        }
        means.row(k) = X.row(chosen);
        min_sq = min_sq.cwiseMin(
            (X.rowwise() - means.row(k)).rowwise().squaredNorm());
    }
    return means;
}

GmmModel em_run(const Eigen::MatrixXd& X, int K, const GmmOptions& opts,
                std::uint64_t seed) {
    const int n = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    Rng rng(seed);

    GmmModel model;
    model.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
    model.means = kmeanspp_means(X, K, rng);

    // Lloyd refinement of the seeds, then per-cluster initial moments.
    std::vector<int> assign(n, 0);
    for (int sweep = 0; sweep < 10; ++sweep) {
        for (int i = 0; i < n; ++i) {
            int arg = 0;
            double best = (X.row(i) - model.means.row(0)).squaredNorm();
            for (int k = 1; k < K; ++k) {
                const double d = (X.row(i) - model.means.row(k)).squaredNorm();
                if (d < best) {
                    best = d;
                    arg = k;
                }
            }
            assign[i] = arg;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, d);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(K);
        for (int i = 0; i < n; ++i) {
            sums.row(assign[i]) += X.row(i);
            counts(assign[i]) += 1.0;
        }
        for (int k = 0; k < K; ++k)
            if (counts(k) > 0.0) model.means.row(k) = sums.row(k) / counts(k);
    }

    const Eigen::RowVectorXd mu = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mu;
    Eigen::MatrixXd cov_global = centered.transpose() * centered / n;
    cov_global.diagonal().array() += opts.reg;
    model.covariances.assign(K, cov_global);
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        double count = 0.0;
        for (int i = 0; i < n; ++i) {
            if (assign[i] != k) continue;
            const Eigen::RowVectorXd diff = X.row(i) - model.means.row(k);
            cov += diff.transpose() * diff;
            count += 1.0;
        }
        if (count >= 2.0) {
            cov /= count;
            cov.diagonal().array() += opts.reg;
            model.covariances[k] = cov;
            model.weights(k) = count / n;
        }
    }
    model.weights /= model.weights.sum();

    Eigen::MatrixXd log_resp(n, K);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        // E step
        for (int k = 0; k < K; ++k)
            log_resp.col(k) =
                log_gaussian(X, model.means.row(k), model.covariances[k]).array() +
                std::log(model.weights(k));
        const Eigen::VectorXd row_max = log_resp.rowwise().maxCoeff();
        const Eigen::VectorXd log_norm =
            ((log_resp.colwise() - row_max).array().exp().rowwise().sum().log() +
             row_max.array())
                .matrix();
        const double ll = log_norm.mean();
        model.log_likelihood_trace.push_back(ll);
        const Eigen::MatrixXd resp =
            (log_resp.colwise() - log_norm).array().exp();

        // M step
        for (int k = 0; k < K; ++k) {
            const double nk = resp.col(k).sum();
            model.weights(k) = nk / n;
            model.means.row(k) = resp.col(k).transpose() * X / nk;
            const Eigen::MatrixXd diff = X.rowwise() - model.means.row(k);
            model.covariances[k] =
                diff.transpose() * resp.col(k).asDiagonal() * diff / nk;
            model.covariances[k].diagonal().array() += opts.reg;
        }
        model.weights /= model.weights.sum();

        model.log_likelihood = ll;
        if (ll - prev_ll < opts.tol && iter > 0) {
            model.converged = true;
            break;
        }
        prev_ll = ll;
    }
    return model;
}

}  // namespace

GmmModel gmm_fit(const Eigen::MatrixXd& X, int K, const GmmOptions& opts) {
    if (K < 1 || X.rows() <= K)
        throw std::invalid_argument("gmm: need N > K >= 1");
    if (X.cols() < 1) throw std::invalid_argument("gmm: need D >= 1");
    if (!X.allFinite()) throw std::invalid_argument("gmm: non-finite data");
    if (opts.n_init < 1) throw std::invalid_argument("gmm: n_init must be >= 1");

    GmmModel best;
    for (int init = 0; init < opts.n_init; ++init) {
        GmmModel candidate = em_run(
            X, K, opts, Rng(opts.seed).substream("init", init).next_u64());
        if (init == 0 || candidate.log_likelihood > best.log_likelihood)
            best = std::move(candidate);
    }
    return best;
}

std::vector<int> gmm_assign(const GmmModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.dim())
        throw std::invalid_argument("gmm: dimension mismatch");
    const int n = static_cast<int>(X.rows());
    const int K = model.n_components();
    Eigen::MatrixXd scores(n, K);
    for (int k = 0; k < K; ++k)
        scores.col(k) =
            log_gaussian(X, model.means.row(k), model.covariances[k]).array() +
            std::log(model.weights(k));

    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        int arg = 0;
        for (int k = 1; k < K; ++k)
            if (scores(i, k) > scores(i, arg)) arg = k;
        labels[i] = arg;
    }
    return labels;
}

GmmModel gmm_fit_bic(const Eigen::MatrixXd& X, int k_min, int k_max,
                     const GmmOptions& opts) {
    if (k_min < 1 || k_max < k_min)
        throw std::invalid_argument("gmm: invalid BIC sweep range");
    const double n = static_cast<double>(X.rows());
    const double d = static_cast<double>(X.cols());
    GmmModel best;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max && k < X.rows(); ++k) {
        GmmModel model = gmm_fit(X, k, opts);
        const double params = k * d + k * d * (d + 1) / 2.0 + (k - 1);
        const double bic =
            -2.0 * model.log_likelihood * n + params * std::log(n);
        if (bic < best_bic) {
            best_bic = bic;
            best = std::move(model);
        }
    }
    return best;
}

PcaModel pca_fit(const Eigen::MatrixXd& X, int p) {
    if (p < 1 || p > X.cols())
        throw std::invalid_argument("pca: p outside [1, D]");
    if (X.rows() < 2) throw std::invalid_argument("pca: need N >= 2");

    PcaModel model;
    model.mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / (X.rows() - 1.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const int d = static_cast<int>(X.cols());
    model.explained_variances.resize(d);
    Eigen::MatrixXd all_components(d, d);
    for (int i = 0; i < d; ++i) {  // solver is ascending; flip
        model.explained_variances(i) = std::max(0.0, eig.eigenvalues()(d - 1 - i));
        all_components.row(i) = eig.eigenvectors().col(d - 1 - i).transpose();
        // sign convention: largest-magnitude entry positive
        int arg = 0;
        all_components.row(i).cwiseAbs().maxCoeff(&arg);
        if (all_components(i, arg) < 0.0) all_components.row(i) *= -1.0;
    }
    model.components = all_components.topRows(p);
    return model;
}

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.mean.size())
        throw std::invalid_argument("pca: dimension mismatch");
    return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

}  // namespace spikerep
