#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

namespace omix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Samples stored one per column (M rows, n columns).
using Dataset = Eigen::MatrixXd;

enum class Family { Gaussian, Mst };

[[nodiscard]] std::string_view family_name(Family f) noexcept;
/// Parses "gaussian" or "mst"; throws UsageError otherwise.
[[nodiscard]] Family parse_family(std::string_view name);

/// Multivariate normal component. The covariance is only ever used through its
/// lower Cholesky factor, which is refreshed whenever sigma changes.
class GaussianComponent {
public:
    GaussianComponent(Vector mu, Matrix sigma);

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(mu_.size()); }
    [[nodiscard]] const Vector& mu() const noexcept { return mu_; }
    [[nodiscard]] const Matrix& sigma() const noexcept { return sigma_; }
    /// Lower-triangular L with L L^T = sigma.
    [[nodiscard]] const Matrix& chol() const noexcept { return chol_; }
    [[nodiscard]] double log_det() const noexcept { return log_det_; }
    /// -(M log 2pi + log det sigma) / 2
    [[nodiscard]] double log_norm() const noexcept { return log_norm_; }

    void set_mu(Vector mu);
    void set_sigma(Matrix sigma);

    /// Squared Mahalanobis distance (y - mu)^T sigma^{-1} (y - mu) by one
    /// triangular solve.
    [[nodiscard]] double mahalanobis2(const Eigen::Ref<const Vector>& y) const;

private:
    void refresh();

    Vector mu_;
    Matrix sigma_;
    Matrix chol_;
    double log_det_ = 0.0;
    double log_norm_ = 0.0;
};

/// Multiple scale t component: y - mu = D x, x_m ~ t(0, A_m, nu_m) independently.
/// D is orthogonal (columns d_m), A the per-direction scales, nu the
/// per-direction degrees of freedom.
class MstComponent {
public:
    MstComponent(Vector mu, Matrix d, Vector a, Vector nu);

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(mu_.size()); }
    [[nodiscard]] const Vector& mu() const noexcept { return mu_; }
    [[nodiscard]] const Matrix& d() const noexcept { return d_; }
    [[nodiscard]] const Vector& a() const noexcept { return a_; }
    [[nodiscard]] const Vector& nu() const noexcept { return nu_; }

    /// Per-direction log normalizer of the univariate t density.
    [[nodiscard]] const Vector& log_norm() const noexcept { return log_norm_; }
    /// digamma((nu_m + 1) / 2), constant per component.
    [[nodiscard]] const Vector& digamma_alpha() const noexcept { return digamma_alpha_; }

    /// Scale matrix D diag(A) D^T.
    [[nodiscard]] Matrix scale_matrix() const;

private:
    void refresh();

    Vector mu_;
    Matrix d_;
    Vector a_;
    Vector nu_;
    Vector log_norm_;
    Vector digamma_alpha_;
};

using ComponentList = std::variant<std::vector<GaussianComponent>, std::vector<MstComponent>>;

/// Finite mixture f(y) = sum_k pi_k f(y; theta_k) of one family.
class MixtureModel {
public:
    MixtureModel(Vector weights, std::vector<GaussianComponent> components);
    MixtureModel(Vector weights, std::vector<MstComponent> components);

    [[nodiscard]] Family family() const noexcept;
    [[nodiscard]] int k() const noexcept { return static_cast<int>(weights_.size()); }
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] const Vector& weights() const noexcept { return weights_; }
    [[nodiscard]] const Vector& log_weights() const noexcept { return log_weights_; }

    /// Throws UsageError when the family does not match.
    [[nodiscard]] const std::vector<GaussianComponent>& gaussian() const;
    [[nodiscard]] const std::vector<MstComponent>& mst() const;

    [[nodiscard]] const ComponentList& components() const noexcept { return components_; }

private:
    void validate();

    Vector weights_;
    Vector log_weights_;
    ComponentList components_;
    int dim_ = 0;
};

[[nodiscard]] double logpdf_gaussian(const Eigen::Ref<const Vector>& y, const GaussianComponent& c);
[[nodiscard]] double logpdf_mst(const Eigen::Ref<const Vector>& y, const MstComponent& c);

/// log(pi_k) + log f(y; theta_k) for every k, written into `out` (size K).
void log_joint(const Eigen::Ref<const Vector>& y, const MixtureModel& model, Eigen::Ref<Vector> out);

[[nodiscard]] double mixture_logpdf(const Eigen::Ref<const Vector>& y, const MixtureModel& model);

struct Responsibilities {
    Vector t;
    double log_density = 0.0;
    /// Set when every component density underflowed and the uniform
    /// fallback was used.
    bool degenerate = false;
};

[[nodiscard]] Responsibilities responsibilities(const Eigen::Ref<const Vector>& y,
                                                const MixtureModel& model);

/// Normalizes log joint terms in place into posterior probabilities; returns
/// the log-sum-exp. Sets `degenerate` when the terms are all -inf or NaN.
double normalize_log_joint(Eigen::Ref<Vector> terms, bool& degenerate);

/// Free-parameter count. Gaussian: K (1 + M + M(M+1)/2).
/// MST: K (1 + 3M + M(M-1)); D is counted as M(M-1) entries.
[[nodiscard]] long param_count(Family family, int k, int dim);
[[nodiscard]] long param_count(const MixtureModel& model);

/// Throws DataError if any entry is non-finite; UsageError if the size is not `dim`.
void check_sample(const Eigen::Ref<const Vector>& y, int dim);

}  // namespace omix
