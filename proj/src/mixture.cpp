#include "omix/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "omix/errors.hpp"
#include "omix/special.hpp"
#include "mixture_detail.hpp"

namespace omix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

std::string_view family_name(Family f) noexcept {
    return f == Family::Gaussian ? "gaussian" : "mst";
}

Family parse_family(std::string_view name) {
    if (name == "gaussian") return Family::Gaussian;
    if (name == "mst") return Family::Mst;
    throw UsageError("unknown family '" + std::string(name) + "' (expected gaussian or mst)");
}

void check_sample(const Eigen::Ref<const Vector>& y, int dim) {
    if (y.size() != dim) {
        throw UsageError("dimension mismatch: sample has " + std::to_string(y.size()) +
                         " entries, model expects " + std::to_string(dim));
    }
    if (!y.allFinite()) throw DataError("sample contains non-finite values");
}

// ---------------------------------------------------------------------------
// GaussianComponent

GaussianComponent::GaussianComponent(Vector mu, Matrix sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
    refresh();
}

void GaussianComponent::set_mu(Vector mu) {
    if (mu.size() != mu_.size()) throw UsageError("GaussianComponent: mean dimension mismatch");
    mu_ = std::move(mu);
    if (!mu_.allFinite()) throw DataError("GaussianComponent: non-finite mean");
}

void GaussianComponent::set_sigma(Matrix sigma) {
    sigma_ = std::move(sigma);
    refresh();
}

void GaussianComponent::refresh() {
    const auto m = mu_.size();
    if (m < 1) throw UsageError("GaussianComponent: empty mean");
    if (sigma_.rows() != m || sigma_.cols() != m) {
        throw UsageError("GaussianComponent: covariance must be " + std::to_string(m) + "x" +
                         std::to_string(m));
    }
    if (!mu_.allFinite() || !sigma_.allFinite()) {
        throw DataError("GaussianComponent: non-finite parameters");
    }
    const double scale = std::max(max_abs(sigma_), std::numeric_limits<double>::min());
    if (max_abs(sigma_ - sigma_.transpose()) > 1e-12 * scale) {
        throw NumericError("GaussianComponent: covariance is not symmetric");
    }
    // Exact symmetrization so the factor reproduces sigma.
    sigma_ = 0.5 * (sigma_ + sigma_.transpose()).eval();
    Eigen::LLT<Matrix> llt(sigma_);
    if (llt.info() != Eigen::Success) {
        throw NumericError("GaussianComponent: covariance is not positive definite");
    }
    chol_ = llt.matrixL();
    const auto diag = chol_.diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite()) {
        throw NumericError("GaussianComponent: covariance is not positive definite");
    }
    log_det_ = 2.0 * diag.array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(m) * kLog2Pi + log_det_);
}

double GaussianComponent::mahalanobis2(const Eigen::Ref<const Vector>& y) const {
    check_sample(y, dim());
    return detail::mahalanobis2(y, *this);
}

double logpdf_gaussian(const Eigen::Ref<const Vector>& y, const GaussianComponent& c) {
    check_sample(y, c.dim());
    return c.log_norm() - 0.5 * detail::mahalanobis2(y, c);
}

// ---------------------------------------------------------------------------
// MstComponent

MstComponent::MstComponent(Vector mu, Matrix d, Vector a, Vector nu)
    : mu_(std::move(mu)), d_(std::move(d)), a_(std::move(a)), nu_(std::move(nu)) {
    refresh();
}

void MstComponent::refresh() {
    const auto m = mu_.size();
    if (m < 1) throw UsageError("MstComponent: empty mean");
    if (d_.rows() != m || d_.cols() != m || a_.size() != m || nu_.size() != m) {
        throw UsageError("MstComponent: parameter dimensions disagree");
    }
    if (!mu_.allFinite() || !d_.allFinite() || !a_.allFinite() || !nu_.allFinite()) {
        throw DataError("MstComponent: non-finite parameters");
    }
    if (max_abs(d_.transpose() * d_ - Matrix::Identity(m, m)) > 1e-10) {
        throw NumericError("MstComponent: D is not orthogonal");
    }
    if ((a_.array() <= 0.0).any()) throw NumericError("MstComponent: scales A must be positive");
    if ((nu_.array() <= 0.0).any()) {
        throw NumericError("MstComponent: degrees of freedom must be positive");
    }
    log_norm_.resize(m);
    digamma_alpha_.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double nu = nu_[j];
        log_norm_[j] = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                       0.5 * std::log(nu * std::numbers::pi * a_[j]);
        digamma_alpha_[j] = digamma(0.5 * (nu + 1.0));
    }
}

Matrix MstComponent::scale_matrix() const {
    const Matrix s = d_ * a_.asDiagonal() * d_.transpose();
    return 0.5 * (s + s.transpose());
}

double logpdf_mst(const Eigen::Ref<const Vector>& y, const MstComponent& c) {
    check_sample(y, c.dim());
    return detail::logpdf_mst(y, c);
}

// ---------------------------------------------------------------------------
// MixtureModel

MixtureModel::MixtureModel(Vector weights, std::vector<GaussianComponent> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    validate();
}

MixtureModel::MixtureModel(Vector weights, std::vector<MstComponent> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    validate();
}

Family MixtureModel::family() const noexcept {
    return components_.index() == 0 ? Family::Gaussian : Family::Mst;
}

const std::vector<GaussianComponent>& MixtureModel::gaussian() const {
    if (family() != Family::Gaussian) throw UsageError("model family is not gaussian");
    return std::get<0>(components_);
}

const std::vector<MstComponent>& MixtureModel::mst() const {
    if (family() != Family::Mst) throw UsageError("model family is not mst");
    return std::get<1>(components_);
}

void MixtureModel::validate() {
    const auto count = std::visit([](const auto& v) { return v.size(); }, components_);
    if (count == 0) throw UsageError("mixture must have at least one component");
    if (static_cast<Eigen::Index>(count) != weights_.size()) {
        throw UsageError("mixture weight count does not match component count");
    }
    if (!weights_.allFinite() || (weights_.array() < 0.0).any() ||
        std::abs(weights_.sum() - 1.0) > 1e-12) {
        throw FormatError("weights not on simplex");
    }
    dim_ = std::visit([](const auto& v) { return v.front().dim(); }, components_);
    std::visit(
        [this](const auto& v) {
            for (const auto& c : v) {
                if (c.dim() != dim_) throw UsageError("mixture components disagree on dimension");
            }
        },
        components_);
    log_weights_ = weights_.array().log();
}

// ---------------------------------------------------------------------------
// Densities

void log_joint(const Eigen::Ref<const Vector>& y, const MixtureModel& model, Eigen::Ref<Vector> out) {
    check_sample(y, model.dim());
    if (out.size() != model.k()) throw UsageError("log_joint: output size must equal K");
    detail::log_joint(y, model, out);
}

double normalize_log_joint(Eigen::Ref<Vector> terms, bool& degenerate) {
    degenerate = false;
    const double top = terms.maxCoeff();
    if (!std::isfinite(top)) {
        // Every term is -inf (or NaN): no usable ordering between components.
        degenerate = true;
        terms.setConstant(1.0 / static_cast<double>(terms.size()));
        return top;
    }
    double sum = 0.0;
    for (Eigen::Index k = 0; k < terms.size(); ++k) {
        terms[k] = std::exp(terms[k] - top);
        sum += terms[k];
    }
    terms /= sum;
    return top + std::log(sum);
}

double mixture_logpdf(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    Vector terms(model.k());
    log_joint(y, model, terms);
    bool degenerate = false;
    return normalize_log_joint(terms, degenerate);
}

Responsibilities responsibilities(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    Responsibilities r;
    r.t.resize(model.k());
    log_joint(y, model, r.t);
    r.log_density = normalize_log_joint(r.t, r.degenerate);
    return r;
}

long param_count(Family family, int k, int dim) {
    if (k < 1 || dim < 1) throw UsageError("param_count: K and M must be positive");
    const long m = dim;
    const long per = family == Family::Gaussian ? 1 + m + m * (m + 1) / 2
                                                : 1 + 3 * m + m * (m - 1);
    return static_cast<long>(k) * per;
}

long param_count(const MixtureModel& model) {
    return param_count(model.family(), model.k(), model.dim());
}

}  // namespace omix
