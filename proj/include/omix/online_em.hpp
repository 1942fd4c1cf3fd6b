#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "omix/batch_em.hpp"
#include "omix/mixture.hpp"
#include "omix/mstep.hpp"
#include "omix/source.hpp"
#include "omix/stats.hpp"

namespace omix {

/// gamma_i = scale * i^(-rho), i >= 1.
struct LearningRateSchedule {
    double rho = 0.6;
    double scale = 1.0;

    /// Throws UsageError unless rho in (0.5, 1] and scale in (0, 1].
    void validate() const;
    [[nodiscard]] double gamma(std::uint64_t i) const;
};

/// The online EM iterate: running statistics, current parameters, and the
/// number of mini-batches absorbed so far.
struct EmState {
    SufficientStats stats;
    MixtureModel theta;
    std::uint64_t step = 0;
    LearningRateSchedule schedule;

    int consecutive_failures = 0;
    std::uint64_t skipped_updates = 0;
    std::uint64_t reseeded_components = 0;

    /// Bytes held by the iterate itself (statistics, parameters, scratch).
    [[nodiscard]] std::size_t retained_bytes() const;
};

struct OnlineOptions {
    GaussianMStepOptions gaussian;
    MstMStepOptions mst = default_mst_options();
    /// Estimation aborts after this many consecutive failed M-steps.
    int max_consecutive_failures = 50;

    /// MST M-step used inside the online loop: nu changes by at most a
    /// factor of 4 per step.
    [[nodiscard]] static MstMStepOptions default_mst_options() {
        MstMStepOptions o;
        o.nu_max_ratio = 4.0;
        return o;
    }
};

/// Builds the initial iterate from a buffer of samples: k-means++ seeding,
/// five batch EM iterations on the buffer, then s(0) = mean s-bar over the
/// buffer at the resulting theta(0). Deterministic given `seed`.
[[nodiscard]] EmState init_state(const Eigen::Ref<const Dataset>& buffer, int k, Family family,
                                 const LearningRateSchedule& schedule, std::uint64_t seed,
                                 const OnlineOptions& opts = {});

struct StepOutcome {
    double gamma = 0.0;
    double batch_loglik = 0.0;
    bool skipped = false;
    int reseeded = 0;
};

/// One stochastic-approximation update with a mini-batch:
/// s(i) = gamma_i * mean_batch s-bar(y; theta(i-1)) + (1 - gamma_i) s(i-1),
/// theta(i) = thetabar(s(i)). A failed M-step keeps theta and the new s and
/// is counted; EstimationAborted is thrown after too many in a row.
StepOutcome step(EmState& state, const Eigen::Ref<const Dataset>& batch, const OnlineOptions& opts = {});

struct ProgressRecord {
    std::uint64_t step = 0;
    double gamma = 0.0;
    double batch_loglik = 0.0;
};

struct FitConfig {
    int k = 2;
    Family family = Family::Gaussian;
    LearningRateSchedule schedule;
    Eigen::Index batch_size = 256;
    Eigen::Index buffer_size = 4096;
    std::uint64_t seed = 0;
    /// When set, theta is finally re-estimated from the average of s(i) over
    /// steps >= this value.
    std::optional<std::uint64_t> average_from_step;
    OnlineOptions online;
    std::function<void(const ProgressRecord&)> progress;
};

struct FitResult {
    MixtureModel model;
    std::uint64_t steps = 0;
    std::uint64_t samples_consumed = 0;
    std::uint64_t skipped_updates = 0;
    std::uint64_t reseeded_components = 0;
    /// EmState bytes plus the sample buffer; independent of stream length.
    std::size_t retained_state_bytes = 0;
    /// Samples the estimator held at once (max of buffer and batch).
    Eigen::Index buffered_samples = 0;
};

/// Single pass over `source`: the first buffer_size samples initialize the
/// iterate, the rest are absorbed in mini-batches of batch_size. A trailing
/// partial batch is absorbed as a smaller batch.
[[nodiscard]] FitResult fit_stream(SampleSource& source, const FitConfig& config);

}  // namespace omix
