#include "omix/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "omix/errors.hpp"
#include "omix/special.hpp"

namespace omix {

namespace {

void require_family(const SufficientStats& stats, Family f, const char* who) {
    if (stats.family() != f) {
        throw UsageError(std::string(who) + ": statistics have the wrong family");
    }
}

void check_starvation(const SufficientStats& stats, double floor) {
    for (int k = 0; k < stats.k(); ++k) {
        if (!(stats.s0(k) > floor)) {
            throw StarvedComponent("component " + std::to_string(k) + " is starved (s0 = " +
                                       std::to_string(stats.s0(k)) + ")",
                                   k);
        }
    }
}

Vector mixing_weights(const SufficientStats& stats) {
    Vector w(stats.k());
    for (int k = 0; k < stats.k(); ++k) w[k] = stats.s0(k);
    w /= w.sum();
    // Absorb the last bit of rounding so the simplex check is exact.
    w[w.size() - 1] = std::max(0.0, 1.0 - (w.sum() - w[w.size() - 1]));
    return w;
}

/// Re-orthonormalizes D by QR, keeping each column's orientation.
Matrix polish_orthogonal(const Matrix& d) {
    Eigen::HouseholderQR<Matrix> qr(d);
    Matrix q = qr.householderQ() * Matrix::Identity(d.rows(), d.cols());
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian

MixtureModel thetabar_gaussian(const SufficientStats& stats, const GaussianMStepOptions& opts) {
    require_family(stats, Family::Gaussian, "thetabar_gaussian");
    check_starvation(stats, opts.starvation_floor);
    const int m = stats.dim();
    std::vector<GaussianComponent> comps;
    comps.reserve(static_cast<std::size_t>(stats.k()));
    for (int k = 0; k < stats.k(); ++k) {
        const double mass = stats.s0(k);
        Vector mu = stats.s1(k) / mass;
        Matrix sigma = stats.s2(k) / mass - mu * mu.transpose();
        const double avg_var = sigma.trace() / m;
        const double avg_msq = (stats.s2(k).trace() / mass) / m;
        const double lambda =
            opts.ridge * std::max({avg_var, 1e-8 * avg_msq, 1e-290});
        sigma.diagonal().array() += lambda;
        comps.emplace_back(std::move(mu), std::move(sigma));
    }
    return MixtureModel(mixing_weights(stats), std::move(comps));
}

double q_gaussian(const SufficientStats& stats, const MixtureModel& model) {
    require_family(stats, Family::Gaussian, "q_gaussian");
    const auto& comps = model.gaussian();
    double q = 0.0;
    for (int k = 0; k < stats.k(); ++k) {
        const auto& c = comps[static_cast<std::size_t>(k)];
        const double mass = stats.s0(k);
        const auto l = c.chol().triangularView<Eigen::Lower>();
        // tr(Sigma^-1 S2) = tr(L^-1 S2 L^-T)
        const Matrix x = l.solve(Matrix(stats.s2(k)));
        const Matrix y = l.solve(x.transpose());
        const Vector lmu = l.solve(c.mu());
        const Vector ls1 = l.solve(Vector(stats.s1(k)));
        double term = lmu.dot(ls1) - 0.5 * y.trace() - 0.5 * mass * lmu.squaredNorm() -
                      0.5 * mass * c.log_det();
        if (mass > 0.0) term += mass * model.log_weights()[k];
        q += term;
    }
    return q;
}

// ---------------------------------------------------------------------------
// MST building blocks

MstComponentStats mst_component_stats(const SufficientStats& stats, int k) {
    require_family(stats, Family::Mst, "mst_component_stats");
    const double mass = stats.s0(k);
    if (!(mass > 0.0)) throw StarvedComponent("component has zero responsibility mass", k);
    const int m = stats.dim();
    MstComponentStats cs;
    cs.s1.reserve(static_cast<std::size_t>(m));
    cs.s2.reserve(static_cast<std::size_t>(m));
    cs.s3.resize(m);
    cs.s4.resize(m);
    for (int j = 0; j < m; ++j) {
        cs.s1.emplace_back(stats.s1(k, j) / mass);
        cs.s2.emplace_back(stats.s2(k, j) / mass);
        cs.s3[j] = stats.s3(k, j) / mass;
        cs.s4[j] = stats.s4(k, j) / mass;
    }
    return cs;
}

MstParams MstParams::from(const MstComponent& c) { return {c.mu(), c.d(), c.a(), c.nu()}; }

MstComponent MstParams::to_component() const { return MstComponent(mu, d, a, nu); }

double q_mst_component(const MstComponentStats& cs, const MstParams& p) {
    const int m = cs.dim();
    double q = 0.0;
    for (int j = 0; j < m; ++j) {
        const auto dj = p.d.col(j);
        const double a = p.a[j];
        const double nu = p.nu[j];
        const double dmu = dj.dot(p.mu);
        const double ds1 = dj.dot(cs.s1[static_cast<std::size_t>(j)]);
        const double ds2d = dj.dot(cs.s2[static_cast<std::size_t>(j)] * dj);
        q += dmu * ds1 / a - ds2d / (2.0 * a) + cs.s3[j] * (-dmu * dmu / (2.0 * a) - 0.5 * nu) +
             cs.s4[j] * 0.5 * (1.0 + nu) -
             (0.5 * std::log(a) + std::lgamma(0.5 * nu) - 0.5 * nu * std::log(0.5 * nu));
    }
    return q;
}

double q_mst(const SufficientStats& stats, const MixtureModel& model) {
    require_family(stats, Family::Mst, "q_mst");
    const auto& comps = model.mst();
    double q = 0.0;
    for (int k = 0; k < stats.k(); ++k) {
        const double mass = stats.s0(k);
        if (!(mass > 0.0)) continue;
        const auto cs = mst_component_stats(stats, k);
        q += mass * (model.log_weights()[k] +
                     q_mst_component(cs, MstParams::from(comps[static_cast<std::size_t>(k)])));
    }
    return q;
}

Vector update_mu(const MstComponentStats& cs, const Matrix& d) {
    const int m = cs.dim();
    Vector mu = Vector::Zero(m);
    for (int j = 0; j < m; ++j) {
        if (!(cs.s3[j] > 0.0)) {
            throw NumericError("update_mu: direction " + std::to_string(j) + " is starved (s3 <= 0)");
        }
        mu += d.col(j) * (d.col(j).dot(cs.s1[static_cast<std::size_t>(j)]) / cs.s3[j]);
    }
    return mu;
}

ScaleUpdate update_a(const MstComponentStats& cs, const Matrix& d, const Vector& mu, double floor) {
    const int m = cs.dim();
    ScaleUpdate out{Vector(m), 0};
    for (int j = 0; j < m; ++j) {
        const auto dj = d.col(j);
        const double dmu = dj.dot(mu);
        const double raw = dj.dot(cs.s2[static_cast<std::size_t>(j)] * dj) -
                           2.0 * dj.dot(cs.s1[static_cast<std::size_t>(j)]) * dmu +
                           cs.s3[j] * dmu * dmu;
        if (!(raw > 0.0)) ++out.floored;
        out.a[j] = std::max(raw, floor);
    }
    return out;
}

std::vector<Matrix> mst_scatter(const MstComponentStats& cs, const Vector& mu) {
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(cs.dim()));
    for (int j = 0; j < cs.dim(); ++j) {
        const auto& s1 = cs.s1[static_cast<std::size_t>(j)];
        Matrix mm = cs.s2[static_cast<std::size_t>(j)] - s1 * mu.transpose() - mu * s1.transpose() +
                    cs.s3[j] * mu * mu.transpose();
        out.push_back(0.5 * (mm + mm.transpose()));
    }
    return out;
}

double d_objective(const std::vector<Matrix>& scatter, const Vector& a, const Matrix& d) {
    double f = 0.0;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
        f += d.col(j).dot(scatter[static_cast<std::size_t>(j)] * d.col(j)) / a[j];
    }
    return f;
}

Matrix update_d(const std::vector<Matrix>& scatter, const Vector& a, const Matrix& d0,
                const DUpdateOptions& opts) {
    const Eigen::Index m = d0.cols();
    if (static_cast<Eigen::Index>(scatter.size()) != m || a.size() != m) {
        throw UsageError("update_d: dimension mismatch");
    }
    Matrix d = d0;
    if (m < 2) return d;
    double f = d_objective(scatter, a, d);
    Vector mp_a(m), mp_b(m), mq_a(m), mq_b(m);
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        const double f_start = f;
        for (Eigen::Index p = 0; p + 1 < m; ++p) {
            for (Eigen::Index q = p + 1; q < m; ++q) {
                const auto& sp = scatter[static_cast<std::size_t>(p)];
                const auto& sq = scatter[static_cast<std::size_t>(q)];
                const Vector ca = d.col(p);
                const Vector cb = d.col(q);
                mp_a.noalias() = sp * ca;
                mp_b.noalias() = sp * cb;
                mq_a.noalias() = sq * ca;
                mq_b.noalias() = sq * cb;
                const double p11 = ca.dot(mp_a) / a[p];
                const double p12 = ca.dot(mp_b) / a[p];
                const double p22 = cb.dot(mp_b) / a[p];
                const double q11 = ca.dot(mq_a) / a[q];
                const double q12 = ca.dot(mq_b) / a[q];
                const double q22 = cb.dot(mq_b) / a[q];
                // f(t) = const + bc cos 2t + bs sin 2t
                const double bc = 0.5 * (p11 - p22 - q11 + q22);
                const double bs = p12 - q12;
                const double amp = std::hypot(bc, bs);
                const double gain = bc + amp;
                if (!(gain > opts.flat_tol * std::max(std::abs(f), std::numeric_limits<double>::min()))) {
                    continue;
                }
                const double t = 0.5 * std::atan2(-bs, -bc);
                const double c = std::cos(t);
                const double s = std::sin(t);
                d.col(p) = c * ca + s * cb;
                d.col(q) = -s * ca + c * cb;
                f -= gain;
            }
        }
        const double f_new = d_objective(scatter, a, d);
        f = f_new;
        if (f_start - f_new < opts.rel_tol * std::abs(f_start)) break;
    }
    if ((d.transpose() * d - Matrix::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-12) {
        d = polish_orthogonal(d);
    }
    return d;
}

Matrix update_d(const MstComponentStats& cs, const Vector& mu, const Vector& a, const Matrix& d0,
                const DUpdateOptions& opts) {
    return update_d(mst_scatter(cs, mu), a, d0, opts);
}

double nu_stationarity(double nu, double s3, double s4) {
    return std::log(0.5 * nu) + 1.0 - digamma(0.5 * nu) + s4 - s3;
}

NuSolution solve_nu(double s3, double s4, double lo, double hi) {
    if (!(s3 > 0.0) || !std::isfinite(s3) || !std::isfinite(s4)) {
        throw NumericError("solve_nu: requires s3 > 0 and finite s4");
    }
    if (!(lo > 0.0) || !(hi > lo)) throw UsageError("solve_nu: invalid bracket");
    NuSolution sol;
    const double g_lo = nu_stationarity(lo, s3, s4);
    const double g_hi = nu_stationarity(hi, s3, s4);
    if (g_hi >= 0.0) return {hi, g_hi, true, 0};
    if (g_lo <= 0.0) return {lo, g_lo, true, 0};

    // log x - digamma(x) ~ 1/(2x), so g ~ 1/nu + 1 + s4 - s3.
    const double gap = s3 - s4 - 1.0;
    double nu = gap > 0.0 ? 1.0 / gap : std::sqrt(lo * hi);
    nu = std::clamp(nu, lo, hi);
    double a = lo;
    double b = hi;
    for (int it = 1; it <= 200; ++it) {
        const double g = nu_stationarity(nu, s3, s4);
        sol.iterations = it;
        if (g == 0.0) break;
        if (g > 0.0) {
            a = nu;
        } else {
            b = nu;
        }
        const double dg = 1.0 / nu - 0.5 * trigamma(0.5 * nu);
        double next = nu - g / dg;
        if (!(next > a && next < b)) next = std::sqrt(a * b);
        const double step = std::abs(next - nu);
        nu = next;
        if (step <= 4.0 * std::numeric_limits<double>::epsilon() * nu) break;
    }
    sol.nu = nu;
    sol.residual = nu_stationarity(nu, s3, s4);
    return sol;
}

// ---------------------------------------------------------------------------

MstMStepResult thetabar_mst(const SufficientStats& stats, const MixtureModel& prev,
                            const MstMStepOptions& opts) {
    require_family(stats, Family::Mst, "thetabar_mst");
    if (prev.family() != Family::Mst || prev.k() != stats.k() || prev.dim() != stats.dim()) {
        throw UsageError("thetabar_mst: warm-start model does not match the statistics");
    }
    check_starvation(stats, opts.starvation_floor);
    const int m = stats.dim();
    MStepReport report;
    report.q_before = q_mst(stats, prev);
    report.nu_residuals.reserve(static_cast<std::size_t>(stats.k() * m));

    std::vector<MstComponent> comps;
    comps.reserve(static_cast<std::size_t>(stats.k()));
    for (int k = 0; k < stats.k(); ++k) {
        const auto cs = mst_component_stats(stats, k);
        const auto& start = prev.mst()[static_cast<std::size_t>(k)];
        MstParams p = MstParams::from(start);

        // nu decouples from (mu, A, D).
        for (int j = 0; j < m; ++j) {
            if (opts.fixed_nu) {
                p.nu[j] = *opts.fixed_nu;
                report.nu_residuals.push_back(nu_stationarity(p.nu[j], cs.s3[j], cs.s4[j]));
                continue;
            }
            const auto sol = solve_nu(cs.s3[j], cs.s4[j], opts.nu_min, opts.nu_max);
            double nu = sol.nu;
            if (sol.clamped) ++report.nu_clamped;
            if (opts.nu_max_ratio > 1.0) {
                nu = std::clamp(nu, start.nu()[j] / opts.nu_max_ratio, start.nu()[j] * opts.nu_max_ratio);
            }
            p.nu[j] = nu;
            report.nu_residuals.push_back(sol.residual);
        }

        const double mass = stats.s0(k);
        double q_start = q_mst_component(cs, MstParams::from(start));
        double q_last = q_mst_component(cs, p);
        auto track = [&](double q_new) {
            report.worst_decrease = std::max(report.worst_decrease, mass * (q_start - q_new));
            q_start = q_new;
        };
        track(q_last);
        bool converged = false;
        int sweep = 0;
        while (sweep < opts.max_sweeps) {
            ++sweep;
            p.mu = update_mu(cs, p.d);
            track(q_mst_component(cs, p));
            auto scale = update_a(cs, p.d, p.mu, opts.a_floor);
            p.a = std::move(scale.a);
            track(q_mst_component(cs, p));
            p.d = update_d(cs, p.mu, p.a, p.d, opts.d_opts);
            const double q = q_mst_component(cs, p);
            track(q);
            if (std::abs(q - q_last) < opts.rel_tol * std::abs(q)) {
                converged = true;
                q_last = q;
                break;
            }
            q_last = q;
        }
        // Final scale refresh after the last rotation; exact given (mu, D).
        auto scale = update_a(cs, p.d, p.mu, opts.a_floor);
        p.a = std::move(scale.a);
        track(q_mst_component(cs, p));
        report.a_floored += scale.floored;
        report.inner_iterations = std::max(report.inner_iterations, sweep);
        report.converged = report.converged && converged;
        comps.push_back(p.to_component());
    }
    MixtureModel model(mixing_weights(stats), std::move(comps));
    report.q_after = q_mst(stats, model);
    return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------

std::vector<int> starved_components(const SufficientStats& stats, double floor) {
    std::vector<int> out;
    for (int k = 0; k < stats.k(); ++k) {
        if (!(stats.s0(k) > floor)) out.push_back(k);
    }
    return out;
}

int reseed_starved(SufficientStats& stats, const MixtureModel& current,
                   const Eigen::Ref<const Dataset>& window, double floor) {
    const auto starved = starved_components(stats, floor);
    if (starved.empty()) return 0;
    if (window.cols() == 0) {
        throw StarvedComponent("component " + std::to_string(starved.front()) +
                                   " is starved and no samples are available to reseed it",
                               starved.front());
    }
    if (current.family() != stats.family() || current.k() != stats.k() ||
        current.dim() != stats.dim()) {
        throw UsageError("reseed_starved: model does not match the statistics");
    }
    const int m = stats.dim();

    std::vector<std::pair<double, Eigen::Index>> density(static_cast<std::size_t>(window.cols()));
    for (Eigen::Index i = 0; i < window.cols(); ++i) {
        density[static_cast<std::size_t>(i)] = {mixture_logpdf(window.col(i), current), i};
    }
    std::sort(density.begin(), density.end());

    Eigen::Index heaviest = 0;
    current.weights().maxCoeff(&heaviest);
    const double mass = 0.5 / stats.k();

    double old_mass = 0.0;
    for (int k : starved) old_mass += std::max(stats.s0(k), 0.0);
    const double new_mass = mass * static_cast<double>(starved.size());
    const double total = stats.total_mass();
    const double rest = total - old_mass;
    if (!(rest > 0.0)) {
        throw StarvedComponent("all components are starved", starved.front());
    }
    const double factor = (total - new_mass) / rest;
    for (int k = 0; k < stats.k(); ++k) {
        if (std::find(starved.begin(), starved.end(), k) == starved.end()) {
            stats.scale_component(k, factor);
        }
    }

    for (std::size_t idx = 0; idx < starved.size(); ++idx) {
        const int k = starved[idx];
        const Vector y = window.col(density[idx % density.size()].second);
        const Matrix outer = y * y.transpose();
        stats.scale_component(k, 0.0);
        stats.s0(k) = mass;
        if (stats.family() == Family::Gaussian) {
            const Matrix& spread = current.gaussian()[static_cast<std::size_t>(heaviest)].sigma();
            stats.s1(k) = mass * y;
            stats.s2(k) = mass * (outer + spread);
        } else {
            const auto& ref = current.mst()[static_cast<std::size_t>(heaviest)];
            const Matrix spread = ref.scale_matrix();
            for (int j = 0; j < m; ++j) {
                const double nu = ref.nu()[j];
                stats.s1(k, j) = mass * y;
                stats.s2(k, j) = mass * (outer + spread);
                stats.s3(k, j) = mass;
                // E[log W] that makes the nu update reproduce the reference nu.
                stats.s4(k, j) = mass * (digamma(0.5 * nu) - std::log(0.5 * nu));
            }
        }
    }
    return static_cast<int>(starved.size());
}

}  // namespace omix
