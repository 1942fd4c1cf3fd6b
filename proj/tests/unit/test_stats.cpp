#include "doctest.h"

#include "oracles.hpp"

#include "omix/datagen.hpp"
#include "omix/errors.hpp"
#include "omix/stats.hpp"

using namespace omix;

TEST_CASE("Gaussian s-bar of one sample is t_k (1, y, y y^T)") {
    std::mt19937_64 rng(1);
    const auto model = oracle::random_gaussian(3, 2, rng);
    const Vector y = Vector::Random(2);
    const auto s = sbar_gaussian(y, model);
    const auto r = responsibilities(y, model);
    for (int k = 0; k < 3; ++k) {
        CHECK(s.s0(k) == doctest::Approx(r.t[k]).epsilon(1e-14));
        CHECK((s.s1(k) - r.t[k] * y).norm() < 1e-14);
        CHECK((Matrix(s.s2(k)) - r.t[k] * y * y.transpose()).norm() < 1e-14);
    }
}

TEST_CASE("MST s-bar matches quadrature of the posterior scale moments") {
    std::mt19937_64 rng(2);
    const auto model = oracle::random_mst(2, 2, rng, 3.0, 0.7, 25.0);
    const Vector y = Vector::Random(2) * 2.0;
    const auto s = sbar_mst(y, model);
    const auto r = responsibilities(y, model);
    for (int k = 0; k < 2; ++k) {
        const auto& c = model.mst()[k];
        for (int m = 0; m < 2; ++m) {
            const auto ref = oracle::weight_moments(c.d().col(m).dot(y - c.mu()), c.a()[m], c.nu()[m]);
            CHECK(s.s3(k, m) == doctest::Approx(r.t[k] * ref.mean_w).epsilon(1e-10));
            CHECK(s.s4(k, m) == doctest::Approx(r.t[k] * ref.mean_log_w).epsilon(1e-10));
            CHECK((s.s1(k, m) - r.t[k] * ref.mean_w * y).norm() < 1e-10);
            CHECK((Matrix(s.s2(k, m)) - r.t[k] * ref.mean_w * y * y.transpose()).norm() < 1e-10);
        }
    }
}

TEST_CASE("accumulate_sbar is the mean of single-sample s-bar") {
    std::mt19937_64 rng(3);
    const auto model = oracle::random_mst(3, 2, rng);
    const auto data = sample_mixture(model, 50, 4).data;
    SufficientStats acc(Family::Mst, 3, 2);
    const auto summary = accumulate_sbar(data, model, acc);
    SufficientStats sum(Family::Mst, 3, 2);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < data.cols(); ++i) {
        sum.add(sbar(data.col(i), model));
        ll += mixture_logpdf(data.col(i), model);
    }
    sum.scale(1.0 / 50.0);
    for (std::size_t i = 0; i < sum.raw().size(); ++i) {
        CHECK(acc.raw()[i] == doctest::Approx(sum.raw()[i]).epsilon(1e-12));
    }
    CHECK(summary.mean_loglik == doctest::Approx(ll / 50.0).epsilon(1e-13));
    CHECK(acc.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(acc.max_asymmetry() == 0.0);
}

TEST_CASE("blend is the stochastic-approximation convex combination") {
    SufficientStats a(Family::Gaussian, 2, 2), b(Family::Gaussian, 2, 2);
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        a.raw()[i] = static_cast<double>(i);
        b.raw()[i] = 100.0 - static_cast<double>(i);
    }
    auto c = a;
    c.blend(b, 0.25);
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        CHECK(c.raw()[i] == doctest::Approx(0.25 * b.raw()[i] + 0.75 * a.raw()[i]));
    }
    c = a;
    c.blend(b, 1.0);
    CHECK(c.raw() == b.raw());
}

TEST_CASE("component accessors respect the layout") {
    SufficientStats s(Family::Mst, 2, 3);
    CHECK(s.component_size() == 1 + 3 * (3 + 9 + 2));
    s.s3(1, 2) = 5.0;
    s.s0(1) = 2.0;
    const auto n = s.normalized_component(1);
    CHECK(n.s0(0) == 1.0);
    CHECK(n.s3(0, 2) == 2.5);
    CHECK_THROWS(SufficientStats(Family::Gaussian, 0, 2));
}

TEST_CASE("accumulate_sbar validates its input") {
    std::mt19937_64 rng(5);
    const auto model = oracle::random_gaussian(2, 2, rng);
    SufficientStats s(Family::Gaussian, 2, 2);
    Dataset bad = Dataset::Zero(2, 3);
    bad(1, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(accumulate_sbar(bad, model, s), DataError);
    CHECK_THROWS_AS(accumulate_sbar(Dataset::Zero(3, 3), model, s), UsageError);
    SufficientStats wrong(Family::Mst, 2, 2);
    CHECK_THROWS_AS(accumulate_sbar(Dataset::Zero(2, 3), model, wrong), UsageError);
}
