#include "omix/stats.hpp"

#include <cmath>
#include <string>

#include "omix/errors.hpp"
#include "mixture_detail.hpp"

namespace omix {

SufficientStats::SufficientStats(Family family, int k, int dim)
    : family_(family), k_(k), dim_(dim) {
    if (k < 1 || dim < 1) throw UsageError("SufficientStats: K and M must be positive");
    const auto m = static_cast<std::size_t>(dim);
    if (family == Family::Gaussian) {
        dir_block_ = 0;
        block_ = 1 + m + m * m;
    } else {
        dir_block_ = m + m * m + 2;
        block_ = 1 + m * dir_block_;
    }
    data_.assign(block_ * static_cast<std::size_t>(k), 0.0);
}

std::size_t SufficientStats::mst_offset(int k, int m) const {
    return offset(k) + 1 + static_cast<std::size_t>(m) * dir_block_;
}

Eigen::Map<Vector> SufficientStats::s1(int k) { return {data_.data() + offset(k) + 1, dim_}; }
Eigen::Map<const Vector> SufficientStats::s1(int k) const {
    return {data_.data() + offset(k) + 1, dim_};
}
Eigen::Map<Matrix> SufficientStats::s2(int k) {
    return {data_.data() + offset(k) + 1 + dim_, dim_, dim_};
}
Eigen::Map<const Matrix> SufficientStats::s2(int k) const {
    return {data_.data() + offset(k) + 1 + dim_, dim_, dim_};
}

Eigen::Map<Vector> SufficientStats::s1(int k, int m) { return {data_.data() + mst_offset(k, m), dim_}; }
Eigen::Map<const Vector> SufficientStats::s1(int k, int m) const {
    return {data_.data() + mst_offset(k, m), dim_};
}
Eigen::Map<Matrix> SufficientStats::s2(int k, int m) {
    return {data_.data() + mst_offset(k, m) + dim_, dim_, dim_};
}
Eigen::Map<const Matrix> SufficientStats::s2(int k, int m) const {
    return {data_.data() + mst_offset(k, m) + dim_, dim_, dim_};
}
double& SufficientStats::s3(int k, int m) {
    return data_[mst_offset(k, m) + static_cast<std::size_t>(dim_ + dim_ * dim_)];
}
double SufficientStats::s3(int k, int m) const {
    return data_[mst_offset(k, m) + static_cast<std::size_t>(dim_ + dim_ * dim_)];
}
double& SufficientStats::s4(int k, int m) {
    return data_[mst_offset(k, m) + static_cast<std::size_t>(dim_ + dim_ * dim_ + 1)];
}
double SufficientStats::s4(int k, int m) const {
    return data_[mst_offset(k, m) + static_cast<std::size_t>(dim_ + dim_ * dim_ + 1)];
}

double SufficientStats::total_mass() const {
    double total = 0.0;
    for (int k = 0; k < k_; ++k) total += s0(k);
    return total;
}

void SufficientStats::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void SufficientStats::check_compatible(const SufficientStats& other) const {
    if (other.family_ != family_ || other.k_ != k_ || other.dim_ != dim_) {
        throw UsageError("SufficientStats: incompatible layouts");
    }
}

void SufficientStats::blend(const SufficientStats& other, double gamma) {
    check_compatible(other);
    const double keep = 1.0 - gamma;
    const double* src = other.data_.data();
    double* dst = data_.data();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = gamma * src[i] + keep * dst[i];
}

void SufficientStats::scale(double factor) {
    for (double& v : data_) v *= factor;
}

void SufficientStats::add(const SufficientStats& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void SufficientStats::add_component(int to, const SufficientStats& other, int from, double weight) {
    if (other.family_ != family_ || other.dim_ != dim_) {
        throw UsageError("SufficientStats: incompatible layouts");
    }
    const double* src = other.data_.data() + other.offset(from);
    double* dst = data_.data() + offset(to);
    for (std::size_t i = 0; i < block_; ++i) dst[i] += weight * src[i];
}

void SufficientStats::scale_component(int k, double factor) {
    double* dst = data_.data() + offset(k);
    for (std::size_t i = 0; i < block_; ++i) dst[i] *= factor;
}

SufficientStats SufficientStats::normalized_component(int k) const {
    SufficientStats out(family_, 1, dim_);
    const double mass = s0(k);
    if (!(mass > 0.0)) throw NumericError("normalized_component: zero responsibility mass");
    out.add_component(0, *this, k, 1.0 / mass);
    out.s0(0) = 1.0;
    return out;
}

double SufficientStats::max_asymmetry() const {
    double worst = 0.0;
    for (int k = 0; k < k_; ++k) {
        if (family_ == Family::Gaussian) {
            worst = std::max(worst, (s2(k) - s2(k).transpose()).cwiseAbs().maxCoeff());
        } else {
            for (int m = 0; m < dim_; ++m) {
                worst = std::max(worst, (s2(k, m) - s2(k, m).transpose()).cwiseAbs().maxCoeff());
            }
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------

WeightExpectations mst_weight_expectations(const Eigen::Ref<const Vector>& y, const MstComponent& c) {
    check_sample(y, c.dim());
    const int m = c.dim();
    WeightExpectations out{Vector(m), Vector(m)};
    Vector proj(m);
    detail::project(y, c, proj.data());
    for (int j = 0; j < m; ++j) {
        const double nu = c.nu()[j];
        const double alpha = 0.5 * (nu + 1.0);
        const double beta = 0.5 * nu + proj[j] * proj[j] / (2.0 * c.a()[j]);
        if (!(beta > 0.0) || !std::isfinite(beta)) {
            throw NumericError("mst_weight_expectations: non-positive rate parameter");
        }
        out.u[j] = alpha / beta;
        out.utld[j] = c.digamma_alpha()[j] - std::log(beta);
    }
    return out;
}

namespace {

/// Shared kernel: accumulates (unnormalized) s-bar of every column into `out`.
class SbarAccumulator {
public:
    SbarAccumulator(const MixtureModel& model, SufficientStats& out)
        : model_(model), out_(out), k_(model.k()), m_(model.dim()),
          terms_(model.k()), outer_(static_cast<std::size_t>(m_ * m_)) {
        if (out.family() != model.family() || out.k() != k_ || out.dim() != m_) {
            throw UsageError("accumulate_sbar: statistics layout does not match the model");
        }
        if (model.family() == Family::Mst) {
            w_.resize(static_cast<std::size_t>(k_ * m_));
            logw_.resize(static_cast<std::size_t>(k_ * m_));
        }
    }

    /// Returns log f(y) and whether the responsibilities were degenerate.
    double absorb(const Eigen::Ref<const Vector>& y, bool& degenerate) {
        const double* yp = y.data();
        for (int j = 0; j < m_; ++j) {
            for (int i = 0; i < m_; ++i) outer_[static_cast<std::size_t>(j * m_ + i)] = yp[i] * yp[j];
        }
        if (model_.family() == Family::Gaussian) {
            detail::log_joint(y, model_, terms_);
        } else {
            mst_terms(y);
        }
        const double logf = normalize_log_joint(terms_, degenerate);
        double* base = out_.raw().data();
        const std::size_t block = out_.component_size();
        const auto mm = static_cast<std::size_t>(m_ * m_);
        for (int k = 0; k < k_; ++k) {
            const double t = terms_[k];
            double* blk = base + static_cast<std::size_t>(k) * block;
            blk[0] += t;
            if (model_.family() == Family::Gaussian) {
                double* s1 = blk + 1;
                double* s2 = s1 + m_;
                for (int i = 0; i < m_; ++i) s1[i] += t * yp[i];
                for (std::size_t i = 0; i < mm; ++i) s2[i] += t * outer_[i];
            } else {
                double* dir = blk + 1;
                for (int j = 0; j < m_; ++j) {
                    const auto idx = static_cast<std::size_t>(k * m_ + j);
                    const double c = t * w_[idx];
                    double* s1 = dir;
                    double* s2 = s1 + m_;
                    for (int i = 0; i < m_; ++i) s1[i] += c * yp[i];
                    for (std::size_t i = 0; i < mm; ++i) s2[i] += c * outer_[i];
                    s2[mm] += c;
                    s2[mm + 1] += t * logw_[idx];
                    dir += m_ + static_cast<std::ptrdiff_t>(mm) + 2;
                }
            }
        }
        return logf;
    }

private:
    void mst_terms(const Eigen::Ref<const Vector>& y) {
        const auto& comps = model_.mst();
        const auto& lw = model_.log_weights();
        double proj[64];
        Vector heap;
        double* u = proj;
        if (m_ > 64) {
            heap.resize(m_);
            u = heap.data();
        }
        for (int k = 0; k < k_; ++k) {
            const auto& c = comps[static_cast<std::size_t>(k)];
            detail::project(y, c, u);
            double logf = lw[k];
            for (int j = 0; j < m_; ++j) {
                const double nu = c.nu()[j];
                const double q = u[j] * u[j] / c.a()[j];
                const double beta = 0.5 * (nu + q);
                const auto idx = static_cast<std::size_t>(k * m_ + j);
                w_[idx] = 0.5 * (nu + 1.0) / beta;
                logw_[idx] = c.digamma_alpha()[j] - std::log(beta);
                logf += c.log_norm()[j] - 0.5 * (nu + 1.0) * std::log1p(q / nu);
            }
            terms_[k] = logf;
        }
    }

    const MixtureModel& model_;
    SufficientStats& out_;
    int k_;
    int m_;
    Vector terms_;
    std::vector<double> outer_;
    std::vector<double> w_;
    std::vector<double> logw_;
};

}  // namespace

EStepSummary accumulate_sbar(const Eigen::Ref<const Dataset>& data, const MixtureModel& model,
                             SufficientStats& out) {
    if (data.cols() == 0) throw UsageError("accumulate_sbar: empty batch");
    if (data.rows() != model.dim()) {
        throw UsageError("dimension mismatch: data has " + std::to_string(data.rows()) +
                         " features, model expects " + std::to_string(model.dim()));
    }
    if (!data.allFinite()) throw DataError("batch contains non-finite values");
    out.set_zero();
    SbarAccumulator acc(model, out);
    EStepSummary summary;
    double total = 0.0;
    double lowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < data.cols(); ++i) {
        bool degenerate = false;
        const double logf = acc.absorb(data.col(i), degenerate);
        if (degenerate) ++summary.degenerate_samples;
        total += logf;
        if (logf < lowest || summary.lowest_density_index < 0) {
            lowest = logf;
            summary.lowest_density_index = i;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(data.cols());
    out.scale(inv_n);
    summary.mean_loglik = total * inv_n;
    return summary;
}

SufficientStats sbar(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    SufficientStats out(model.family(), model.k(), model.dim());
    accumulate_sbar(y, model, out);
    return out;
}

SufficientStats sbar_gaussian(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    if (model.family() != Family::Gaussian) throw UsageError("sbar_gaussian: model family is not gaussian");
    return sbar(y, model);
}

SufficientStats sbar_mst(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    if (model.family() != Family::Mst) throw UsageError("sbar_mst: model family is not mst");
    return sbar(y, model);
}

}  // namespace omix
