#include "omix/batch_em.hpp"

#include <cmath>
#include <random>
#include <string>

#include "omix/errors.hpp"
#include "omix/stats.hpp"
#include "mixture_detail.hpp"

namespace omix {

MixtureModel thetabar(const SufficientStats& stats, const MixtureModel& prev,
                      const GaussianMStepOptions& gaussian, const MstMStepOptions& mst) {
    if (stats.family() == Family::Gaussian) return thetabar_gaussian(stats, gaussian);
    return thetabar_mst(stats, prev, mst).model;
}

BatchEmResult batch_em(const Eigen::Ref<const Dataset>& data, const MixtureModel& init,
                       const BatchEmOptions& opts) {
    if (data.cols() < 10L * init.k()) {
        throw InitError("batch_em: need at least 10 K = " + std::to_string(10 * init.k()) +
                        " samples, got " + std::to_string(data.cols()));
    }
    BatchEmResult result{init, {}, 0, false, 0};
    SufficientStats stats(init.family(), init.k(), init.dim());
    double previous = 0.0;
    for (int iter = 0;; ++iter) {
        const auto summary = accumulate_sbar(data, result.model, stats);
        result.loglik_trace.push_back(summary.mean_loglik);
        if (iter > 0 &&
            std::abs(summary.mean_loglik - previous) < opts.tol * std::abs(summary.mean_loglik)) {
            result.converged = true;
            break;
        }
        if (iter >= opts.max_iters) break;
        previous = summary.mean_loglik;
        result.reseeded += reseed_starved(stats, result.model, data, opts.gaussian.starvation_floor);
        result.model = thetabar(stats, result.model, opts.gaussian, opts.mst);
        result.iterations = iter + 1;
    }
    return result;
}

BatchEmResult batch_em(const Eigen::Ref<const Dataset>& data, int k, Family family,
                       std::uint64_t seed, const BatchEmOptions& opts) {
    return batch_em(data, initial_model(data, k, family, seed), opts);
}

MixtureModel initial_model(const Eigen::Ref<const Dataset>& data, int k, Family family,
                           std::uint64_t seed) {
    if (k < 1) throw UsageError("number of components must be at least 1");
    const Eigen::Index n = data.cols();
    const Eigen::Index m = data.rows();
    if (n < 10L * k) {
        throw InitError("initialization needs at least 10 K = " + std::to_string(10L * k) +
                        " samples, got " + std::to_string(n));
    }
    if (m < 1) throw UsageError("initialization data has no features");
    if (!data.allFinite()) throw DataError("initialization data contains non-finite values");

    const Vector mean = data.rowwise().mean();
    const Matrix centered = data.colwise() - mean;
    Matrix cov = centered * centered.transpose() / static_cast<double>(n);
    cov = 0.5 * (cov + cov.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector evals = eig.eigenvalues();
    if (!(evals.maxCoeff() > 0.0) || !(evals.minCoeff() > 1e-12 * evals.maxCoeff())) {
        throw InitError("initialization data is degenerate (zero variance along some direction)");
    }

    // k-means++ seeding.
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> centers;
    centers.push_back(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    Vector dist2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist2[i] = (data.col(i) - data.col(centers[0])).squaredNorm();
    }
    while (static_cast<int>(centers.size()) < k) {
        const double total = dist2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= dist2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
        }
        centers.push_back(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], (data.col(i) - data.col(pick)).squaredNorm());
        }
    }

    const Vector weights = Vector::Constant(k, 1.0 / k);
    if (family == Family::Gaussian) {
        std::vector<GaussianComponent> comps;
        for (auto c : centers) comps.emplace_back(data.col(c), cov);
        return MixtureModel(weights, std::move(comps));
    }
    std::vector<MstComponent> comps;
    for (auto c : centers) {
        comps.emplace_back(data.col(c), eig.eigenvectors(), evals, Vector::Constant(m, 20.0));
    }
    return MixtureModel(weights, std::move(comps));
}

MixtureModel split_component(const MixtureModel& model) {
    const int k = model.k();
    Eigen::Index heavy = 0;
    model.weights().maxCoeff(&heavy);
    Vector weights(k + 1);
    weights.head(k) = model.weights();
    weights[heavy] *= 0.5;
    weights[k] = weights[heavy];

    if (model.family() == Family::Gaussian) {
        auto comps = model.gaussian();
        const auto& c = comps[static_cast<std::size_t>(heavy)];
        Eigen::SelfAdjointEigenSolver<Matrix> eig(c.sigma());
        const Vector offset = std::sqrt(eig.eigenvalues()[c.sigma().rows() - 1]) *
                              eig.eigenvectors().col(c.sigma().rows() - 1);
        GaussianComponent hi(c.mu() + offset, c.sigma());
        GaussianComponent lo(c.mu() - offset, c.sigma());
        comps[static_cast<std::size_t>(heavy)] = std::move(lo);
        comps.push_back(std::move(hi));
        return MixtureModel(weights, std::move(comps));
    }
    auto comps = model.mst();
    const auto& c = comps[static_cast<std::size_t>(heavy)];
    Eigen::Index wide = 0;
    c.a().maxCoeff(&wide);
    const Vector offset = std::sqrt(c.a()[wide]) * c.d().col(wide);
    MstComponent hi(c.mu() + offset, c.d(), c.a(), c.nu());
    MstComponent lo(c.mu() - offset, c.d(), c.a(), c.nu());
    comps[static_cast<std::size_t>(heavy)] = std::move(lo);
    comps.push_back(std::move(hi));
    return MixtureModel(weights, std::move(comps));
}

double heldout_loglik(const MixtureModel& model, const Eigen::Ref<const Dataset>& data) {
    if (data.cols() == 0) throw UsageError("heldout_loglik: empty data");
    if (data.rows() != model.dim()) throw UsageError("heldout_loglik: dimension mismatch");
    if (!data.allFinite()) throw DataError("heldout_loglik: non-finite data");
    Vector terms(model.k());
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.cols(); ++i) {
        detail::log_joint(data.col(i), model, terms);
        bool degenerate = false;
        total += normalize_log_joint(terms, degenerate);
    }
    return total / static_cast<double>(data.cols());
}

}  // namespace omix
