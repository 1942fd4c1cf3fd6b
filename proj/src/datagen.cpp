#include "omix/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "omix/errors.hpp"

namespace omix {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

LabeledSamples sample_mixture(const MixtureModel& model, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw UsageError("sample_mixture: n must be at least 1");
    const int m = model.dim();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick(model.weights().data(), model.weights().data() + model.k());
    std::normal_distribution<double> normal;

    // One gamma sampler per (k, m); shape nu/2, scale 2/nu (rate nu/2).
    std::vector<std::gamma_distribution<double>> gammas;
    if (model.family() == Family::Mst) {
        for (const auto& c : model.mst()) {
            for (int j = 0; j < m; ++j) gammas.emplace_back(0.5 * c.nu()[j], 2.0 / c.nu()[j]);
        }
    }

    LabeledSamples out{Dataset(m, n), std::vector<int>(static_cast<std::size_t>(n))};
    Vector z(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = pick(rng);
        out.components[static_cast<std::size_t>(i)] = k;
        for (int j = 0; j < m; ++j) z[j] = normal(rng);
        if (model.family() == Family::Gaussian) {
            const auto& c = model.gaussian()[static_cast<std::size_t>(k)];
            out.data.col(i) = c.mu() + c.chol().triangularView<Eigen::Lower>() * z;
        } else {
            const auto& c = model.mst()[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j) {
                const double w = gammas[static_cast<std::size_t>(k * m + j)](rng);
                z[j] *= std::sqrt(c.a()[j] / w);
            }
            out.data.col(i) = c.mu() + c.d() * z;
        }
    }
    return out;
}

void AnomalySpec::validate(int dim) const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("anomaly fraction must lie in (0, 1]");
    if (shift.size() != dim) throw UsageError("anomaly shift must have one entry per feature");
    if (dims.empty()) throw UsageError("anomaly dims must not be empty");
    for (int d : dims) {
        if (d < 0 || d >= dim) throw UsageError("anomaly dim index out of range");
    }
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
        throw UsageError("anomaly amplitude must be finite and non-negative");
    }
}

InjectedData inject_anomalies(Dataset data, const AnomalySpec& spec, std::uint64_t seed) {
    spec.validate(static_cast<int>(data.rows()));
    const auto n = static_cast<std::size_t>(data.cols());
    // A zero-amplitude injection moves nothing, so nothing is anomalous.
    const auto count = spec.amplitude == 0.0
                           ? std::size_t{0}
                           : std::min(n, static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `count` entries are a uniform subset.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    InjectedData out{std::move(data), std::vector<bool>(n, false)};
    for (std::size_t i = 0; i < count; ++i) {
        const auto col = static_cast<Eigen::Index>(order[i]);
        out.truth[order[i]] = true;
        for (int d : spec.dims) out.data(d, col) += spec.amplitude * spec.shift[d];
    }
    return out;
}

Cohort make_cohort(const MixtureModel& model, int subjects_per_group, Eigen::Index voxels_per_subject,
                   const std::vector<double>& amplitudes, const AnomalySpec& anomaly, std::uint64_t seed) {
    if (subjects_per_group < 1) throw UsageError("make_cohort: need at least one subject per group");
    if (voxels_per_subject < 1) throw UsageError("make_cohort: need at least one voxel per subject");
    if (amplitudes.empty()) throw UsageError("make_cohort: need at least one group");
    Cohort cohort;
    for (std::size_t g = 0; g < amplitudes.size(); ++g) {
        cohort.groups.push_back(amplitudes[g] == 0.0 ? std::string("control") : "group" + std::to_string(g));
    }
    for (std::size_t g = 0; g < amplitudes.size(); ++g) {
        AnomalySpec spec = anomaly;
        spec.amplitude = amplitudes[g];
        spec.validate(model.dim());
        for (int s = 0; s < subjects_per_group; ++s) {
            const auto stream = static_cast<std::uint64_t>(g) * static_cast<std::uint64_t>(subjects_per_group) +
                                static_cast<std::uint64_t>(s);
            const std::uint64_t subject_seed = derive_seed(seed, stream);
            auto clean = sample_mixture(model, voxels_per_subject, subject_seed);
            auto injected = inject_anomalies(std::move(clean.data), spec, derive_seed(subject_seed, 1));
            CohortSubject subj;
            subj.subject_id = "g" + std::to_string(g) + "_s" + std::to_string(s);
            subj.group = cohort.groups[g];
            subj.group_index = static_cast<int>(g);
            subj.amplitude = amplitudes[g];
            subj.data = std::move(injected.data);
            subj.truth = std::move(injected.truth);
            cohort.subjects.push_back(std::move(subj));
        }
    }
    return cohort;
}

}  // namespace omix
