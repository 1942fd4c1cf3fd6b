#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omix/mixture.hpp"

namespace omix {

/// splitmix64 of (seed, stream): independent per-subject seeds.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

struct LabeledSamples {
    Dataset data;
    /// Generating component of each column.
    std::vector<int> components;
};

/// Exact sampler. Gaussian: y = mu_k + L_k z. MST: w_m ~ Gamma(shape nu_m/2,
/// rate nu_m/2), y = mu_k + D diag(sqrt(A_m / w_m)) z. k ~ pi. Deterministic
/// given the seed.
[[nodiscard]] LabeledSamples sample_mixture(const MixtureModel& model, Eigen::Index n, std::uint64_t seed);

struct AnomalySpec {
    /// Share of rows that receive the shift, in (0, 1].
    double fraction = 0.1;
    /// Additive offset in feature units (size M); only `dims` are applied.
    Vector shift;
    /// Zero-based feature indices that are shifted.
    std::vector<int> dims;
    double amplitude = 1.0;

    void validate(int dim) const;
};

struct InjectedData {
    Dataset data;
    std::vector<bool> truth;
};

/// Adds amplitude * shift[d] on every d in dims to round(fraction n) rows
/// chosen uniformly without replacement.
[[nodiscard]] InjectedData inject_anomalies(Dataset data, const AnomalySpec& spec, std::uint64_t seed);

struct CohortSubject {
    std::string subject_id;
    std::string group;
    int group_index = 0;
    double amplitude = 0.0;
    Dataset data;
    std::vector<bool> truth;
};

struct Cohort {
    std::vector<CohortSubject> subjects;
    std::vector<std::string> groups;
};

/// Group g has `subjects_per_group` subjects, each with `voxels_per_subject`
/// samples from `model` and anomalies injected at amplitudes[g] (using
/// `anomaly` for fraction, shift and dims). Amplitude 0 groups are named
/// "control", the others "group<g>". Subject g:s uses seed
/// derive_seed(seed, g * subjects_per_group + s).
[[nodiscard]] Cohort make_cohort(const MixtureModel& model, int subjects_per_group,
                                 Eigen::Index voxels_per_subject, const std::vector<double>& amplitudes,
                                 const AnomalySpec& anomaly, std::uint64_t seed);

}  // namespace omix
