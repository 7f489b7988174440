#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spikerep/rng.hpp"

namespace spikerep {

struct GmmOptions {
    int max_iter = 100;
    double tol = 1e-3;   // log-likelihood gain
    double reg = 1e-6;   // ridge added to every covariance
    std::uint64_t seed = 0;
    int n_init = 1;
};

struct GmmModel {
    Eigen::VectorXd weights;               // K, sums to 1
    Eigen::MatrixXd means;                 // K x D
    std::vector<Eigen::MatrixXd> covariances;  // K of D x D, SPD
    bool converged = false;
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_trace;  // per EM iteration

    int n_components() const { return static_cast<int>(means.rows()); }
    int dim() const { return static_cast<int>(means.cols()); }
};

// Full-covariance EM with k-means++ seeding; best of n_init restarts by
// final log-likelihood.
GmmModel gmm_fit(const Eigen::MatrixXd& X, int K, const GmmOptions& opts = {});

// Argmax posterior responsibility; ties go to the lower component index.
std::vector<int> gmm_assign(const GmmModel& model, const Eigen::MatrixXd& X);

// Optional BIC-based component count selection over [k_min, k_max].
GmmModel gmm_fit_bic(const Eigen::MatrixXd& X, int k_min, int k_max,
                     const GmmOptions& opts = {});

struct PcaModel {
    Eigen::VectorXd mean;        // D
    Eigen::MatrixXd components;  // p x D, orthonormal rows
    Eigen::VectorXd explained_variances;  // all D variances, descending
};

PcaModel pca_fit(const Eigen::MatrixXd& X, int p);
Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X);

}  // namespace spikerep
