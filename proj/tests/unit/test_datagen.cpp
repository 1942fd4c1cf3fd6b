#include "doctest.h"

#include <algorithm>
#include <set>

#include "oracles.hpp"

#include "omix/datagen.hpp"
#include "omix/errors.hpp"

using namespace omix;

TEST_CASE("sampling is reproducible and seed-sensitive") {
    std::mt19937_64 rng(1);
    const auto model = oracle::random_mst(2, 3, rng);
    const auto a = sample_mixture(model, 100, 5);
    const auto b = sample_mixture(model, 100, 5);
    const auto c = sample_mixture(model, 100, 6);
    CHECK(a.data == b.data);
    CHECK(a.components == b.components);
    CHECK(a.data != c.data);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("Gaussian samples match the model moments") {
    std::mt19937_64 rng(2);
    const auto model = oracle::random_gaussian(2, 2, rng);
    const auto s = sample_mixture(model, 200000, 3);
    Vector mean = Vector::Zero(2);
    for (int k = 0; k < 2; ++k) mean += model.weights()[k] * model.gaussian()[static_cast<std::size_t>(k)].mu();
    CHECK((s.data.rowwise().mean() - mean).norm() < 0.05);
    const auto ones = std::count(s.components.begin(), s.components.end(), 1);
    CHECK(static_cast<double>(ones) / 200000.0 == doctest::Approx(model.weights()[1]).epsilon(0.02));
}

TEST_CASE("anomaly injection shifts exactly the flagged samples") {
    const Dataset data = Dataset::Random(3, 1000);
    AnomalySpec spec;
    spec.fraction = 0.1;
    spec.shift = Vector::Constant(3, 2.0);
    spec.dims = {0, 2};
    spec.amplitude = 1.5;
    const auto out = inject_anomalies(data, spec, 9);
    CHECK(std::count(out.truth.begin(), out.truth.end(), true) == 100);
    for (Eigen::Index i = 0; i < 1000; ++i) {
        const Vector d = out.data.col(i) - data.col(i);
        if (out.truth[static_cast<std::size_t>(i)]) {
            CHECK(d[0] == doctest::Approx(3.0));
            CHECK(d[1] == 0.0);
            CHECK(d[2] == doctest::Approx(3.0));
        } else {
            CHECK(d.norm() == 0.0);
        }
    }
    spec.dims = {5};
    CHECK_THROWS_AS((void)inject_anomalies(data, spec, 1), UsageError);
}

TEST_CASE("cohort layout") {
    std::mt19937_64 rng(3);
    const auto model = oracle::random_gaussian(2, 2, rng);
    AnomalySpec spec;
    spec.shift = Vector::Constant(2, 1.0);
    spec.dims = {0, 1};
    const auto cohort = make_cohort(model, 3, 200, {0.0, 1.0, 2.0}, spec, 4);
    CHECK(cohort.groups.size() == 3);
    CHECK(cohort.subjects.size() == 9);
    std::set<std::string> ids;
    for (const auto& s : cohort.subjects) {
        ids.insert(s.subject_id);
        CHECK(s.data.cols() == 200);
        const auto flagged = std::count(s.truth.begin(), s.truth.end(), true);
        CHECK(flagged == (s.amplitude == 0.0 ? 0 : 20));
    }
    CHECK(ids.size() == 9);
}
