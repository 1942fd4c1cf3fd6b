#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omix/mixture.hpp"

namespace omix {

/// max_m sum_k t_k(y) u_km(y): the posterior mean of the scale variable W_m,
/// marginalized over components, maximized over directions.
[[nodiscard]] double proximity_mst(const Eigen::Ref<const Vector>& y, const MixtureModel& model);

/// max_k 1 / (1 + delta_k(y)) with delta_k the squared Mahalanobis distance to
/// component k. Bounded in (0, 1], equal to 1 at any component mean.
[[nodiscard]] double proximity_gaussian(const Eigen::Ref<const Vector>& y, const MixtureModel& model);

/// Dispatches on the model family.
[[nodiscard]] double proximity(const Eigen::Ref<const Vector>& y, const MixtureModel& model);

/// Scores every column of `data`.
[[nodiscard]] std::vector<double> score_all(const MixtureModel& model, const Eigen::Ref<const Dataset>& data);

enum class CalibrationMode { Empirical, Simulated };

struct Threshold {
    double tau = 0.0;
    double alpha = 0.0;
    CalibrationMode mode = CalibrationMode::Empirical;
    std::int64_t n_used = 0;
};

/// Lower-interpolation alpha-quantile: the order statistic at index
/// floor(alpha (n - 1)) of the sorted scores.
[[nodiscard]] double lower_quantile(std::vector<double> scores, double alpha);

/// Empirical calibration on scores of held-out normal data.
/// Throws CalibrationError when n < 10 / alpha.
[[nodiscard]] Threshold calibrate_threshold(std::span<const double> normal_scores, double alpha);

/// Empirical calibration on held-out normal samples.
[[nodiscard]] Threshold calibrate_threshold(const MixtureModel& model, double alpha,
                                            const Eigen::Ref<const Dataset>& normal_data);

/// Simulated calibration: draws n samples from `model` itself and scores them.
[[nodiscard]] Threshold calibrate_threshold(const MixtureModel& model, double alpha, std::uint64_t seed,
                                            std::int64_t n);

/// abnormal_i <=> scores_i < tau.
[[nodiscard]] std::vector<bool> label(std::span<const double> scores, double tau);

struct SubjectSummary {
    std::string subject_id;
    std::int64_t n_voxels = 0;
    std::int64_t n_abnormal = 0;
    double fraction = 0.0;
    std::optional<std::string> group_label;
};

[[nodiscard]] SubjectSummary aggregate_subject(const std::vector<bool>& labels, std::string subject_id,
                                               std::optional<std::string> group = std::nullopt);

/// sqrt(sensitivity * specificity); `true` is the positive (abnormal) class.
/// Throws MetricError when `truth` holds a single class.
[[nodiscard]] double gmean(const std::vector<bool>& pred, const std::vector<bool>& truth);

enum class CutoffStrategy { MaximizeGmean, Fixed };

struct SubjectClassification {
    /// Predicted positive (abnormal subject) per summary.
    std::vector<bool> labels;
    double cutoff = 0.0;
    double gmean = 0.0;
};

/// Subjects whose abnormal fraction exceeds the cutoff are predicted
/// positive; ground truth is group_label != control_group.
/// MaximizeGmean evaluates every midpoint between consecutive distinct
/// fractions plus the two all-one-class cutoffs and keeps the lowest cutoff
/// among the best. Requires at least two subjects per class.
[[nodiscard]] SubjectClassification classify_subjects(const std::vector<SubjectSummary>& summaries,
                                                      CutoffStrategy strategy,
                                                      const std::string& control_group = "control",
                                                      double fixed_cutoff = 0.0);

}  // namespace omix
