#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "omix/mixture.hpp"
#include "omix/stats.hpp"

namespace omix {

inline constexpr double kStarvationFloor = 1e-8;

// ---------------------------------------------------------------------------
// Gaussian

struct GaussianMStepOptions {
    double starvation_floor = kStarvationFloor;
    /// Covariance ridge, as a fraction of the component's average variance.
    double ridge = 1e-6;
};

/// Closed-form maximizer of Q(s; theta) for a Gaussian mixture:
/// pi_k = s0_k / sum s0, mu_k = s1_k / s0_k,
/// Sigma_k = S2_k / s0_k - mu_k mu_k^T + lambda_k I.
/// Throws StarvedComponent when some s0_k <= starvation_floor.
[[nodiscard]] MixtureModel thetabar_gaussian(const SufficientStats& stats,
                                             const GaussianMStepOptions& opts = {});

/// Q(s; theta) = sum_k [s0_k log pi_k + s1_k^T Sigma^-1 mu_k - tr(Sigma^-1 S2_k) / 2
///               - s0_k mu_k^T Sigma^-1 mu_k / 2 - s0_k log|Sigma_k| / 2].
/// Evaluated through the cached Cholesky factors.
[[nodiscard]] double q_gaussian(const SufficientStats& stats, const MixtureModel& model);

// ---------------------------------------------------------------------------
// MST

/// One component's statistics divided by its responsibility mass, so s3 and
/// s4 are posterior means of W_m and log W_m.
struct MstComponentStats {
    std::vector<Vector> s1;
    std::vector<Matrix> s2;
    Vector s3;
    Vector s4;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(s3.size()); }
};

[[nodiscard]] MstComponentStats mst_component_stats(const SufficientStats& stats, int k);

/// Unvalidated MST parameters, used while iterating inside the M-step.
struct MstParams {
    Vector mu;
    Matrix d;
    Vector a;
    Vector nu;

    [[nodiscard]] static MstParams from(const MstComponent& c);
    [[nodiscard]] MstComponent to_component() const;
};

/// Per-unit-mass Q of one MST component (s0 normalized to one), using the
/// exponential-family natural parameters and log-partition of the MST.
[[nodiscard]] double q_mst_component(const MstComponentStats& cs, const MstParams& p);

/// Full mixture Q(s; theta) for the MST family.
[[nodiscard]] double q_mst(const SufficientStats& stats, const MixtureModel& model);

/// mu = sum_m d_m (d_m^T s1_m) / s3_m. Throws NumericError if some s3_m <= 0.
[[nodiscard]] Vector update_mu(const MstComponentStats& cs, const Matrix& d);

struct ScaleUpdate {
    Vector a;
    /// Directions whose raw value was <= 0 before flooring.
    int floored = 0;
};

/// A_m = d_m^T S2_m d_m - 2 (d_m^T s1_m)(d_m^T mu) + s3_m (d_m^T mu)^2,
/// floored at `floor`.
[[nodiscard]] ScaleUpdate update_a(const MstComponentStats& cs, const Matrix& d, const Vector& mu,
                                   double floor = 1e-10);

/// Scatter matrices M_m = S2_m - s1_m mu^T - mu s1_m^T + s3_m mu mu^T.
[[nodiscard]] std::vector<Matrix> mst_scatter(const MstComponentStats& cs, const Vector& mu);

/// sum_m d_m^T M_m d_m / A_m, the quantity the D update minimizes.
[[nodiscard]] double d_objective(const std::vector<Matrix>& scatter, const Vector& a, const Matrix& d);

struct DUpdateOptions {
    int max_sweeps = 10;
    double rel_tol = 1e-12;
    /// Rotations that improve the objective by less than this (relative) are skipped.
    double flat_tol = 1e-14;
};

/// Minimizes d_objective over orthogonal D by cyclic Givens sweeps starting at
/// `d0`. Each pair objective is a sinusoid in twice the angle, minimized in
/// closed form over a full period; the objective never increases.
[[nodiscard]] Matrix update_d(const std::vector<Matrix>& scatter, const Vector& a, const Matrix& d0,
                              const DUpdateOptions& opts = {});
[[nodiscard]] Matrix update_d(const MstComponentStats& cs, const Vector& mu, const Vector& a,
                              const Matrix& d0, const DUpdateOptions& opts = {});

struct NuSolution {
    double nu = 0.0;
    /// g(nu) at the returned value.
    double residual = 0.0;
    bool clamped = false;
    int iterations = 0;
};

/// g(nu) = log(nu / 2) + 1 - digamma(nu / 2) + s4 - s3, strictly decreasing in nu.
[[nodiscard]] double nu_stationarity(double nu, double s3, double s4);

/// Root of g by Newton's method safeguarded with bisection on [lo, hi]. When
/// g keeps one sign on the interval the nearest bound is returned, flagged.
[[nodiscard]] NuSolution solve_nu(double s3, double s4, double lo = 0.05, double hi = 1e4);

struct MStepReport {
    double q_before = 0.0;
    double q_after = 0.0;
    int inner_iterations = 0;
    /// Largest mass-weighted drop of a component's Q over any single
    /// coordinate update (nu, mu, A or D); <= 0 means every update ascended.
    double worst_decrease = -std::numeric_limits<double>::infinity();
    /// g(nu) per (k, m), component-major.
    std::vector<double> nu_residuals;
    int nu_clamped = 0;
    int a_floored = 0;
    bool converged = true;
};

struct MstMStepOptions {
    double starvation_floor = kStarvationFloor;
    int max_sweeps = 100;
    double rel_tol = 1e-12;
    double a_floor = 1e-10;
    double nu_min = 0.05;
    double nu_max = 1e4;
    /// When > 1, each nu may change by at most this factor relative to prev.
    double nu_max_ratio = 0.0;
    /// Freeze every nu at this value instead of solving for it.
    std::optional<double> fixed_nu;
    DUpdateOptions d_opts;
};

struct MstMStepResult {
    MixtureModel model;
    MStepReport report;
};

/// Cyclic coordinate ascent (mu -> A -> D -> nu) on Q, warm-started at `prev`.
[[nodiscard]] MstMStepResult thetabar_mst(const SufficientStats& stats, const MixtureModel& prev,
                                          const MstMStepOptions& opts = {});

// ---------------------------------------------------------------------------

/// Components whose responsibility mass is at or below `floor`.
[[nodiscard]] std::vector<int> starved_components(const SufficientStats& stats,
                                                  double floor = kStarvationFloor);

/// Replaces each starved component's statistics by those of a pseudo-component
/// centred at one of the lowest-density samples of `window` (under `current`),
/// with the spread of the heaviest component and mass 0.5 / K. The remaining
/// components are rescaled so the total mass is unchanged. Returns the number
/// of components reseeded; throws StarvedComponent when the window is empty.
int reseed_starved(SufficientStats& stats, const MixtureModel& current,
                   const Eigen::Ref<const Dataset>& window, double floor = kStarvationFloor);

}  // namespace omix
