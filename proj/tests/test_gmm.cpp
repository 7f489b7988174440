#include <doctest.h>

#include <cmath>

#include "spikerep/gmm.hpp"
#include "spikerep/metrics.hpp"

using namespace spikerep;

namespace {

// N points around each of K isotropic centers.
std::pair<Eigen::MatrixXd, std::vector<int>> blobs(
    const std::vector<Eigen::Vector2d>& centers, int per_cluster, double sigma,
    std::uint64_t seed) {
    Rng rng(seed);
    const int n = static_cast<int>(centers.size()) * per_cluster;
    Eigen::MatrixXd X(n, 2);
    std::vector<int> labels(n);
    int row = 0;
    for (std::size_t k = 0; k < centers.size(); ++k)
        for (int i = 0; i < per_cluster; ++i, ++row) {
            X(row, 0) = centers[k](0) + sigma * rng.normal();
            X(row, 1) = centers[k](1) + sigma * rng.normal();
            labels[row] = static_cast<int>(k);
        }
    return {X, labels};
}

}  // namespace

TEST_CASE("K=1 fit is the sample mean and ridged sample covariance") {
    Rng rng(1);
    Eigen::MatrixXd X(50, 3);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    GmmOptions opts;
    const GmmModel model = gmm_fit(X, 1, opts);

    const Eigen::RowVectorXd mean = X.colwise().mean();
    CHECK((model.means.row(0) - mean).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd centered = X.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / X.rows();
    cov.diagonal().array() += opts.reg;
    CHECK((model.covariances[0] - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("well-separated gaussians are recovered across seeds") {
    // generate-and-check oracle, 20 seeds
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto [X, labels] =
            blobs({{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}}, 200, 1.0, seed);
        GmmOptions opts;
        opts.seed = seed;
        const GmmModel model = gmm_fit(X, 3, opts);
        const std::vector<int> assigned = gmm_assign(model, X);
        CHECK(adjusted_rand_index(labels, assigned) >= 0.99);
    }
}

TEST_CASE("log-likelihood is nondecreasing across EM iterations") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        Eigen::MatrixXd X(80, 3);
        for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        GmmOptions opts;
        opts.seed = seed;
        opts.tol = 0.0;
        opts.max_iter = 30;
        const GmmModel model = gmm_fit(X, 4, opts);
        for (std::size_t i = 1; i < model.log_likelihood_trace.size(); ++i)
            CHECK(model.log_likelihood_trace[i] >=
                  model.log_likelihood_trace[i - 1] - 1e-8);
    }
}

TEST_CASE("duplicating every point leaves the fit unchanged") {
    const auto [X, labels] = blobs({{0.0, 0.0}, {8.0, 8.0}}, 100, 1.0, 3);
    Eigen::MatrixXd doubled(X.rows() * 2, X.cols());
    doubled.topRows(X.rows()) = X;
    doubled.bottomRows(X.rows()) = X;
    GmmOptions opts;
    opts.seed = 5;
    opts.max_iter = 200;
    opts.tol = 1e-12;
    const GmmModel a = gmm_fit(X, 2, opts);
    const GmmModel b = gmm_fit(doubled, 2, opts);
    // EM is invariant to duplication up to the (duplication-invariant)
    // converged fixed point; compare sorted means
    std::vector<double> ma{a.means(0, 0) + a.means(0, 1),
                           a.means(1, 0) + a.means(1, 1)};
    std::vector<double> mb{b.means(0, 0) + b.means(0, 1),
                           b.means(1, 0) + b.means(1, 1)};
    std::sort(ma.begin(), ma.end());
    std::sort(mb.begin(), mb.end());
    CHECK(ma[0] == doctest::Approx(mb[0]).epsilon(1e-6));
    CHECK(ma[1] == doctest::Approx(mb[1]).epsilon(1e-6));
}

TEST_CASE("fit is deterministic for a fixed seed") {
    const auto [X, labels] = blobs({{0.0, 0.0}, {5.0, 5.0}}, 150, 1.5, 7);
    GmmOptions opts;
    opts.seed = 11;
    const GmmModel a = gmm_fit(X, 2, opts);
    const GmmModel b = gmm_fit(X, 2, opts);
    CHECK(a.means == b.means);
    CHECK(a.weights == b.weights);
    CHECK(a.log_likelihood == b.log_likelihood);
    for (int k = 0; k < 2; ++k)
        CHECK(a.covariances[k] == b.covariances[k]);
}

TEST_CASE("assignment picks the containing component") {
    GmmModel model;
    model.weights = Eigen::Vector2d(0.5, 0.5);
    model.means.resize(2, 2);
    model.means << 0.0, 0.0, 10.0, 10.0;
    model.covariances = {Eigen::Matrix2d::Identity(),
                         Eigen::Matrix2d::Identity()};
    Eigen::MatrixXd X(2, 2);
    X << 0.0, 0.0, 10.0, 10.0;
    CHECK(gmm_assign(model, X) == std::vector<int>{0, 1});

    // tie at the midpoint resolves to the lower index
    Eigen::MatrixXd mid(1, 2);
    mid << 5.0, 5.0;
    CHECK(gmm_assign(model, mid) == std::vector<int>{0});
}

TEST_CASE("assignment matches the final responsibilities on training data") {
    const auto [X, labels] = blobs({{0.0, 0.0}, {6.0, 0.0}}, 100, 1.0, 9);
    GmmOptions opts;
    opts.seed = 1;
    const GmmModel model = gmm_fit(X, 2, opts);
    const std::vector<int> assigned = gmm_assign(model, X);
    CHECK(adjusted_rand_index(labels, assigned) > 0.9);
}

TEST_CASE("degenerate inputs are rejected") {
    Eigen::MatrixXd X(3, 2);
    X << 0, 0, 1, 1, 2, 2;
    CHECK_THROWS(gmm_fit(X, 3, {}));
    CHECK_THROWS(gmm_fit(X, 0, {}));
    Eigen::MatrixXd bad = X;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(gmm_fit(bad, 1, {}));
}

TEST_CASE("BIC sweep finds the generating component count") {
    const auto [X, labels] =
        blobs({{0.0, 0.0}, {12.0, 0.0}, {0.0, 12.0}}, 150, 1.0, 13);
    GmmOptions opts;
    opts.seed = 3;
    const GmmModel model = gmm_fit_bic(X, 1, 6, opts);
    CHECK(model.n_components() == 3);
}

TEST_CASE("pca recovers an axis-aligned plane embedded in 5 dimensions") {
    Rng rng(21);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(200, 5);
    for (int i = 0; i < 200; ++i) {
        X(i, 1) = 3.0 * std::cos(i * 0.1);
        X(i, 3) = 1.0 * std::sin(i * 0.1);
    }
    const PcaModel model = pca_fit(X, 2);
    // the two components span coordinates 1 and 3
    for (int p = 0; p < 2; ++p) {
        CHECK(std::abs(model.components(p, 0)) < 1e-9);
        CHECK(std::abs(model.components(p, 2)) < 1e-9);
        CHECK(std::abs(model.components(p, 4)) < 1e-9);
    }
    for (int i = 2; i < 5; ++i) CHECK(model.explained_variances(i) < 1e-9);
}

TEST_CASE("transforming the mean gives the zero vector") {
    Rng rng(22);
    Eigen::MatrixXd X(60, 4);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    const PcaModel model = pca_fit(X, 3);
    const Eigen::MatrixXd z =
        pca_transform(model, model.mean.transpose());
    CHECK(z.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("explained variances sum to the covariance trace") {
    Rng rng(23);
    Eigen::MatrixXd X(100, 6);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() * (1.0 + i % 5);
    const PcaModel model = pca_fit(X, 2);
    const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();
    const double trace =
        (centered.transpose() * centered / (X.rows() - 1.0)).trace();
    CHECK(model.explained_variances.sum() == doctest::Approx(trace).epsilon(1e-9));
}

TEST_CASE("pca components are orthonormal and variances descend") {
    Rng rng(24);
    Eigen::MatrixXd X(120, 5);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() * (1 + i % 3);
    const PcaModel model = pca_fit(X, 5);
    const Eigen::MatrixXd gram = model.components * model.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 1; i < 5; ++i)
        CHECK(model.explained_variances(i) <= model.explained_variances(i - 1));
}

TEST_CASE("pca rejects p > D") {
    Eigen::MatrixXd X(10, 3);
    X.setRandom();
    CHECK_THROWS(pca_fit(X, 4));
}
