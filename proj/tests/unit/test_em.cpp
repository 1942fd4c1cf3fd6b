#include "doctest.h"

#include <cmath>

#include "oracles.hpp"

#include "omix/batch_em.hpp"
#include "omix/datagen.hpp"
#include "omix/errors.hpp"
#include "omix/online_em.hpp"
#include "omix/source.hpp"

using namespace omix;

TEST_CASE("batch EM log-likelihood trace is non-decreasing") {
    std::mt19937_64 rng(1);
    for (Family family : {Family::Gaussian, Family::Mst}) {
        const auto truth = family == Family::Gaussian ? oracle::random_gaussian(3, 2, rng)
                                                      : oracle::random_mst(3, 2, rng);
        const auto data = sample_mixture(truth, 3000, 2).data;
        BatchEmOptions opts;
        opts.max_iters = 60;
        const auto fit = batch_em(data, 3, family, 7, opts);
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
            CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-9 * std::abs(fit.loglik_trace[i - 1]));
        }
    }
}

TEST_CASE("batch EM is deterministic for a fixed seed") {
    std::mt19937_64 rng(3);
    const auto truth = oracle::random_mst(2, 2, rng);
    const auto data = sample_mixture(truth, 1000, 4).data;
    BatchEmOptions opts;
    opts.max_iters = 10;
    const auto a = batch_em(data, 2, Family::Mst, 11, opts);
    const auto b = batch_em(data, 2, Family::Mst, 11, opts);
    CHECK(a.loglik_trace == b.loglik_trace);
}

TEST_CASE("initialization rejects small or degenerate data") {
    CHECK_THROWS_AS((void)initial_model(Dataset::Random(2, 19), 2, Family::Gaussian, 1), InitError);
    Dataset flat = Dataset::Random(2, 100);
    flat.row(1).setConstant(3.0);
    CHECK_THROWS_AS((void)initial_model(flat, 2, Family::Mst, 1), InitError);
    CHECK_THROWS_AS((void)initial_model(Dataset::Random(2, 100), 0, Family::Mst, 1), UsageError);
}

TEST_CASE("split_component adds one component and preserves total weight") {
    std::mt19937_64 rng(5);
    for (Family family : {Family::Gaussian, Family::Mst}) {
        const auto model = family == Family::Gaussian ? oracle::random_gaussian(2, 3, rng)
                                                      : oracle::random_mst(2, 3, rng);
        const auto split = split_component(model);
        CHECK(split.k() == 3);
        CHECK(split.weights().sum() == doctest::Approx(1.0));
    }
}

TEST_CASE("heldout_loglik is the mean log-density") {
    std::mt19937_64 rng(6);
    const auto model = oracle::random_gaussian(2, 2, rng);
    const auto data = sample_mixture(model, 40, 1).data;
    double ref = 0.0;
    for (Eigen::Index i = 0; i < data.cols(); ++i) {
        double p = 0.0;
        for (int k = 0; k < 2; ++k) {
            const auto& c = model.gaussian()[static_cast<std::size_t>(k)];
            p += model.weights()[k] * std::exp(oracle::gaussian_logpdf(data.col(i), c.mu(), c.sigma()));
        }
        ref += std::log(p);
    }
    CHECK(heldout_loglik(model, data) == doctest::Approx(ref / 40.0).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule") {
    LearningRateSchedule s;
    CHECK(s.gamma(1) == 1.0);
    CHECK(s.gamma(32) == doctest::Approx(std::pow(32.0, -0.6)).epsilon(1e-15));
    CHECK_THROWS_AS((void)s.gamma(0), UsageError);
    CHECK_THROWS_AS((LearningRateSchedule{0.5, 1.0}.validate()), UsageError);
    CHECK_THROWS_AS((LearningRateSchedule{0.7, 1.5}.validate()), UsageError);
    CHECK_NOTHROW((LearningRateSchedule{1.0, 0.5}.validate()));
}

TEST_CASE("online step blends statistics with the scheduled gain") {
    std::mt19937_64 rng(7);
    const auto truth = oracle::random_gaussian(2, 2, rng);
    const auto data = sample_mixture(truth, 2000, 8).data;
    auto state = init_state(data.leftCols(500), 2, Family::Gaussian, {}, 9);
    state.step = 9;
    const auto before = state.stats;
    const auto batch = data.middleCols(500, 64);
    SufficientStats fresh(Family::Gaussian, 2, 2);
    (void)accumulate_sbar(batch, state.theta, fresh);
    const auto out = step(state, batch);
    CHECK(out.gamma == doctest::Approx(std::pow(10.0, -0.6)));
    CHECK(state.step == 10);
    for (std::size_t i = 0; i < before.raw().size(); ++i) {
        const double expect = out.gamma * fresh.raw()[i] + (1.0 - out.gamma) * before.raw()[i];
        CHECK(state.stats.raw()[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    const auto theta = thetabar_gaussian(state.stats);
    CHECK((theta.gaussian()[0].mu() - state.theta.gaussian()[0].mu()).norm() < 1e-12);
}

TEST_CASE("fit_stream makes one pass and recovers a well-separated mixture") {
    std::mt19937_64 rng(10);
    const auto truth = oracle::random_gaussian(2, 2, rng, 20.0);
    const auto data = sample_mixture(truth, 40000, 11).data;
    MatrixSource inner(data);
    CountingSource source(inner);
    FitConfig cfg;
    cfg.k = 2;
    cfg.batch_size = 100;
    cfg.buffer_size = 1000;
    int records = 0;
    cfg.progress = [&](const ProgressRecord&) { ++records; };
    const auto fit = fit_stream(source, cfg);
    CHECK(fit.samples_consumed == 40000);
    CHECK(source.samples_delivered() == 40000);
    CHECK(source.passes() == 1);
    CHECK(source.max_request() <= 1000);
    CHECK(fit.steps == 390);
    CHECK(records == 390);
    for (const auto& c : truth.gaussian()) {
        double best = 1e300;
        for (const auto& f : fit.model.gaussian()) best = std::min(best, (f.mu() - c.mu()).norm());
        CHECK(best < 0.1);
    }
}

TEST_CASE("fit_stream reports short streams and bad configuration") {
    const Dataset data = Dataset::Random(2, 50);
    MatrixSource source(data);
    FitConfig cfg;
    cfg.buffer_size = 100;
    CHECK_THROWS_AS((void)fit_stream(source, cfg), InitError);
    MatrixSource again(data);
    cfg.batch_size = 0;
    CHECK_THROWS_AS((void)fit_stream(again, cfg), UsageError);
}
