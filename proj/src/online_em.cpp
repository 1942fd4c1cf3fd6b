#include "omix/online_em.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "omix/errors.hpp"

namespace omix {

void LearningRateSchedule::validate() const {
    if (!(rho > 0.5 && rho <= 1.0)) throw UsageError("learning-rate exponent rho must lie in (0.5, 1]");
    if (!(scale > 0.0 && scale <= 1.0)) throw UsageError("learning-rate scale must lie in (0, 1]");
}

double LearningRateSchedule::gamma(std::uint64_t i) const {
    if (i == 0) throw UsageError("learning-rate index starts at 1");
    const double g = scale * std::pow(static_cast<double>(i), -rho);
    return std::min(g, 1.0);
}

namespace {

std::size_t model_bytes(const MixtureModel& model) {
    const auto k = static_cast<std::size_t>(model.k());
    const auto m = static_cast<std::size_t>(model.dim());
    // weights + log weights, then per component parameters and caches.
    std::size_t doubles = 2 * k;
    if (model.family() == Family::Gaussian) {
        doubles += k * (m + 2 * m * m + 2);
    } else {
        doubles += k * (m + m * m + 4 * m);
    }
    return doubles * sizeof(double);
}

}  // namespace

std::size_t EmState::retained_bytes() const {
    // Running statistics, the per-batch scratch statistics, and theta.
    return 2 * stats.byte_size() + model_bytes(theta) + sizeof(EmState);
}

EmState init_state(const Eigen::Ref<const Dataset>& buffer, int k, Family family,
                   const LearningRateSchedule& schedule, std::uint64_t seed, const OnlineOptions& opts) {
    schedule.validate();
    if (k < 1) throw UsageError("number of components must be at least 1");
    if (buffer.cols() < 10L * k) {
        throw InitError("initial buffer too small: need at least 10 K = " + std::to_string(10L * k) +
                        " samples, got " + std::to_string(buffer.cols()));
    }
    BatchEmOptions batch;
    batch.max_iters = 5;
    batch.tol = 0.0;
    batch.gaussian = opts.gaussian;
    batch.mst = opts.mst;
    batch.mst.nu_max_ratio = 0.0;
    auto fitted = batch_em(buffer, initial_model(buffer, k, family, seed), batch);

    SufficientStats stats(family, k, static_cast<int>(buffer.rows()));
    accumulate_sbar(buffer, fitted.model, stats);
    return EmState{std::move(stats), std::move(fitted.model), 0, schedule, 0, 0,
                   static_cast<std::uint64_t>(fitted.reseeded)};
}

StepOutcome step(EmState& state, const Eigen::Ref<const Dataset>& batch, const OnlineOptions& opts) {
    if (batch.cols() < 1) throw UsageError("step: empty mini-batch");
    StepOutcome out;
    out.gamma = state.schedule.gamma(state.step + 1);
    SufficientStats fresh(state.stats.family(), state.stats.k(), state.stats.dim());
    const auto summary = accumulate_sbar(batch, state.theta, fresh);
    out.batch_loglik = summary.mean_loglik;
    state.stats.blend(fresh, out.gamma);
    ++state.step;

    try {
        out.reseeded = reseed_starved(state.stats, state.theta, batch, opts.gaussian.starvation_floor);
        state.reseeded_components += static_cast<std::uint64_t>(out.reseeded);
        state.theta = thetabar(state.stats, state.theta, opts.gaussian, opts.mst);
        state.consecutive_failures = 0;
    } catch (const NumericError& e) {
        out.skipped = true;
        ++state.skipped_updates;
        if (++state.consecutive_failures >= opts.max_consecutive_failures) {
            throw EstimationAborted("online EM aborted after " +
                                    std::to_string(state.consecutive_failures) +
                                    " consecutive failed M-steps; last error: " + e.what());
        }
    }
    return out;
}

FitResult fit_stream(SampleSource& source, const FitConfig& config) {
    config.schedule.validate();
    if (config.k < 1) throw UsageError("number of components must be at least 1");
    if (config.batch_size < 1) throw UsageError("batch size must be at least 1");
    if (config.buffer_size < 10L * config.k) {
        throw UsageError("buffer size must be at least 10 K = " + std::to_string(10L * config.k));
    }
    const int m = source.dim();
    if (m < 1) throw UsageError("stream has no features");

    const Eigen::Index capacity = std::max(config.buffer_size, config.batch_size);
    Dataset buffer(m, capacity);

    Eigen::Index filled = 0;
    while (filled < config.buffer_size) {
        const auto got = source.read(buffer.middleCols(filled, config.buffer_size - filled));
        if (got == 0) break;
        filled += got;
    }
    if (filled < config.buffer_size) {
        throw InitError("stream exhausted after " + std::to_string(filled) +
                        " samples; initialization needs " + std::to_string(config.buffer_size));
    }

    EmState state = init_state(buffer.leftCols(filled), config.k, config.family, config.schedule,
                               config.seed, config.online);
    std::uint64_t consumed = static_cast<std::uint64_t>(filled);

    std::optional<SufficientStats> average;
    std::uint64_t averaged = 0;

    for (;;) {
        Eigen::Index got = 0;
        while (got < config.batch_size) {
            const auto n = source.read(buffer.middleCols(got, config.batch_size - got));
            if (n == 0) break;
            got += n;
        }
        if (got == 0) break;
        consumed += static_cast<std::uint64_t>(got);
        const auto outcome = step(state, buffer.leftCols(got), config.online);
        if (config.progress) config.progress({state.step, outcome.gamma, outcome.batch_loglik});
        if (config.average_from_step && state.step >= *config.average_from_step) {
            if (!average) {
                average.emplace(state.stats);
            } else {
                average->blend(state.stats, 1.0 / static_cast<double>(averaged + 1));
            }
            ++averaged;
        }
        if (got < config.batch_size) break;
    }

    if (average) {
        try {
            state.theta = thetabar(*average, state.theta, config.online.gaussian, config.online.mst);
        } catch (const NumericError&) {
            ++state.skipped_updates;
        }
    }

    FitResult result{state.theta};
    result.steps = state.step;
    result.samples_consumed = consumed;
    result.skipped_updates = state.skipped_updates;
    result.reseeded_components = state.reseeded_components;
    result.buffered_samples = capacity;
    result.retained_state_bytes =
        state.retained_bytes() + static_cast<std::size_t>(buffer.size()) * sizeof(double);
    return result;
}

}  // namespace omix
