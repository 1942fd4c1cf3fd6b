#pragma once

#include <cstdint>
#include <vector>

#include "omix/mixture.hpp"
#include "omix/mstep.hpp"

namespace omix {

struct BatchEmOptions {
    int max_iters = 200;
    /// Stop when |ll_i - ll_{i-1}| < tol * |ll_i| (mean log-likelihood).
    double tol = 1e-10;
    GaussianMStepOptions gaussian;
    MstMStepOptions mst;
};

struct BatchEmResult {
    MixtureModel model;
    /// Mean log-likelihood of each iterate; the last entry belongs to `model`.
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    int reseeded = 0;
};

/// Full-data EM: the E-step averages s-bar over every sample with the same
/// kernel the online estimator uses, the M-step is thetabar_*.
[[nodiscard]] BatchEmResult batch_em(const Eigen::Ref<const Dataset>& data, const MixtureModel& init,
                                     const BatchEmOptions& opts = {});

/// Seeds an initial model (see initial_model) and runs batch_em from it.
[[nodiscard]] BatchEmResult batch_em(const Eigen::Ref<const Dataset>& data, int k, Family family,
                                     std::uint64_t seed, const BatchEmOptions& opts = {});

/// One M-step for either family. `prev` is the warm start (MST) and the
/// fallback template for reseeding.
[[nodiscard]] MixtureModel thetabar(const SufficientStats& stats, const MixtureModel& prev,
                                    const GaussianMStepOptions& gaussian = {},
                                    const MstMStepOptions& mst = {});

/// Starting point for EM: means by k-means++ (D^2) seeding on `data`;
/// Gaussian covariances are the global covariance; MST components take the
/// global covariance's eigenvectors as D, its eigenvalues as A, and nu = 20.
/// Weights are uniform. Throws InitError for fewer than 10 K samples or a
/// degenerate (zero-variance) sample set.
[[nodiscard]] MixtureModel initial_model(const Eigen::Ref<const Dataset>& data, int k, Family family,
                                         std::uint64_t seed);

/// K + 1 component model obtained by splitting the heaviest component of
/// `model` in two along its widest axis (Gaussian: leading eigenvector of
/// Sigma; MST: the direction with the largest A). The halves keep the
/// component's shape and sit one standard deviation either side of its mean.
[[nodiscard]] MixtureModel split_component(const MixtureModel& model);

/// Mean mixture log-density over the columns of `data`.
[[nodiscard]] double heldout_loglik(const MixtureModel& model, const Eigen::Ref<const Dataset>& data);

}  // namespace omix
