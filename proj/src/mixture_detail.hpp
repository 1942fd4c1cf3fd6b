#pragma once

// Unchecked hot-path kernels. Callers validate sample dimension and finiteness.

#include <cmath>

#include "omix/mixture.hpp"

namespace omix::detail {

inline double mahalanobis2(const Eigen::Ref<const Vector>& y, const GaussianComponent& c) {
    const auto& l = c.chol();
    const Eigen::Index m = y.size();
    // Forward substitution L z = y - mu without temporaries.
    double acc = 0.0;
    double z[16];
    if (m <= 16) {
        for (Eigen::Index i = 0; i < m; ++i) {
            double v = y[i] - c.mu()[i];
            for (Eigen::Index j = 0; j < i; ++j) v -= l(i, j) * z[j];
            z[i] = v / l(i, i);
            acc += z[i] * z[i];
        }
        return acc;
    }
    const Vector diff = y - c.mu();
    return l.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
}

/// Projection u = D^T (y - mu) into `u`.
inline void project(const Eigen::Ref<const Vector>& y, const MstComponent& c, double* u) {
    const Eigen::Index m = y.size();
    const auto& d = c.d();
    for (Eigen::Index j = 0; j < m; ++j) {
        double v = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) v += d(i, j) * (y[i] - c.mu()[i]);
        u[j] = v;
    }
}

inline double logpdf_mst(const Eigen::Ref<const Vector>& y, const MstComponent& c) {
    const Eigen::Index m = y.size();
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        double u = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) u += c.d()(i, j) * (y[i] - c.mu()[i]);
        const double nu = c.nu()[j];
        total += c.log_norm()[j] - 0.5 * (nu + 1.0) * std::log1p(u * u / (nu * c.a()[j]));
    }
    return total;
}

inline void log_joint(const Eigen::Ref<const Vector>& y, const MixtureModel& model,
                      Eigen::Ref<Vector> out) {
    const auto& lw = model.log_weights();
    if (model.family() == Family::Gaussian) {
        const auto& comps = model.gaussian();
        for (int k = 0; k < model.k(); ++k) {
            out[k] = lw[k] + comps[k].log_norm() - 0.5 * mahalanobis2(y, comps[k]);
        }
    } else {
        const auto& comps = model.mst();
        for (int k = 0; k < model.k(); ++k) out[k] = lw[k] + detail::logpdf_mst(y, comps[k]);
    }
}

}  // namespace omix::detail
