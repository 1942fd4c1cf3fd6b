#include "omix/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "omix/datagen.hpp"
#include "omix/errors.hpp"
#include "mixture_detail.hpp"

namespace omix {

double proximity_mst(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    const auto& comps = model.mst();
    check_sample(y, model.dim());
    const int m = model.dim();
    const int kk = model.k();
    Vector terms(kk);
    Matrix u(m, kk);
    Vector proj(m);
    for (int k = 0; k < kk; ++k) {
        const auto& c = comps[static_cast<std::size_t>(k)];
        detail::project(y, c, proj.data());
        double logf = model.log_weights()[k];
        for (int j = 0; j < m; ++j) {
            const double nu = c.nu()[j];
            const double q = proj[j] * proj[j] / c.a()[j];
            u(j, k) = (nu + 1.0) / (nu + q);
            logf += c.log_norm()[j] - 0.5 * (nu + 1.0) * std::log1p(q / nu);
        }
        terms[k] = logf;
    }
    bool degenerate = false;
    normalize_log_joint(terms, degenerate);
    return (u * terms).maxCoeff();
}

double proximity_gaussian(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    const auto& comps = model.gaussian();
    check_sample(y, model.dim());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : comps) best = std::min(best, detail::mahalanobis2(y, c));
    return 1.0 / (1.0 + best);
}

double proximity(const Eigen::Ref<const Vector>& y, const MixtureModel& model) {
    return model.family() == Family::Gaussian ? proximity_gaussian(y, model) : proximity_mst(y, model);
}

std::vector<double> score_all(const MixtureModel& model, const Eigen::Ref<const Dataset>& data) {
    if (data.rows() != model.dim()) {
        throw UsageError("dimension mismatch: data has " + std::to_string(data.rows()) +
                         " features, model expects " + std::to_string(model.dim()));
    }
    std::vector<double> out(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index i = 0; i < data.cols(); ++i) out[static_cast<std::size_t>(i)] = proximity(data.col(i), model);
    return out;
}

double lower_quantile(std::vector<double> scores, double alpha) {
    if (scores.empty()) throw CalibrationError("quantile of an empty score set");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    const auto idx = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(scores.size() - 1)));
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(idx), scores.end());
    return scores[idx];
}

Threshold calibrate_threshold(std::span<const double> normal_scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    const auto n = static_cast<std::int64_t>(normal_scores.size());
    const auto needed = static_cast<std::int64_t>(std::ceil(10.0 / alpha));
    if (n < needed) {
        throw CalibrationError("calibration needs at least ceil(10 / alpha) = " + std::to_string(needed) +
                               " samples, got " + std::to_string(n));
    }
    for (double s : normal_scores) {
        if (!std::isfinite(s)) throw DataError("calibration scores contain non-finite values");
    }
    Threshold t;
    t.tau = lower_quantile(std::vector<double>(normal_scores.begin(), normal_scores.end()), alpha);
    t.alpha = alpha;
    t.mode = CalibrationMode::Empirical;
    t.n_used = n;
    return t;
}

Threshold calibrate_threshold(const MixtureModel& model, double alpha, const Eigen::Ref<const Dataset>& normal_data) {
    const auto scores = score_all(model, normal_data);
    return calibrate_threshold(std::span<const double>(scores), alpha);
}

Threshold calibrate_threshold(const MixtureModel& model, double alpha, std::uint64_t seed, std::int64_t n) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    if (static_cast<double>(n) < 10.0 / alpha) {
        throw CalibrationError("simulated calibration needs n >= 10 / alpha");
    }
    const auto draws = sample_mixture(model, n, seed);
    auto t = calibrate_threshold(model, alpha, draws.data);
    t.mode = CalibrationMode::Simulated;
    return t;
}

std::vector<bool> label(std::span<const double> scores, double tau) {
    std::vector<bool> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] < tau;
    return out;
}

SubjectSummary aggregate_subject(const std::vector<bool>& labels, std::string subject_id,
                                 std::optional<std::string> group) {
    if (labels.empty()) throw UsageError("aggregate_subject: subject '" + subject_id + "' has no voxels");
    SubjectSummary s;
    s.subject_id = std::move(subject_id);
    s.n_voxels = static_cast<std::int64_t>(labels.size());
    s.n_abnormal = std::count(labels.begin(), labels.end(), true);
    s.fraction = static_cast<double>(s.n_abnormal) / static_cast<double>(s.n_voxels);
    s.group_label = std::move(group);
    return s;
}

double gmean(const std::vector<bool>& pred, const std::vector<bool>& truth) {
    if (pred.size() != truth.size()) throw UsageError("gmean: prediction and truth sizes differ");
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            pred[i] ? ++tp : ++fn;
        } else {
            pred[i] ? ++fp : ++tn;
        }
    }
    if (tp + fn == 0 || tn + fp == 0) throw MetricError("g-mean is undefined when truth has a single class");
    const double sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return std::sqrt(sens * spec);
}

SubjectClassification classify_subjects(const std::vector<SubjectSummary>& summaries, CutoffStrategy strategy,
                                        const std::string& control_group, double fixed_cutoff) {
    std::vector<bool> truth;
    truth.reserve(summaries.size());
    int positives = 0;
    for (const auto& s : summaries) {
        if (!s.group_label) throw UsageError("classify_subjects: subject '" + s.subject_id + "' has no group");
        truth.push_back(*s.group_label != control_group);
        positives += truth.back() ? 1 : 0;
    }
    const int negatives = static_cast<int>(summaries.size()) - positives;
    if (positives < 2 || negatives < 2) {
        throw MetricError("classify_subjects needs at least two subjects per class");
    }
    auto predict = [&](double cutoff) {
        std::vector<bool> pred;
        pred.reserve(summaries.size());
        for (const auto& s : summaries) pred.push_back(s.fraction > cutoff);
        return pred;
    };

    SubjectClassification out;
    if (strategy == CutoffStrategy::Fixed) {
        out.cutoff = fixed_cutoff;
        out.labels = predict(fixed_cutoff);
        out.gmean = gmean(out.labels, truth);
        return out;
    }

    std::vector<double> fractions;
    for (const auto& s : summaries) fractions.push_back(s.fraction);
    std::sort(fractions.begin(), fractions.end());
    fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

    // Candidate cutoffs in increasing order: below everything (all positive),
    // midpoints, and the maximum (all negative).
    std::vector<double> candidates;
    candidates.push_back(std::nextafter(fractions.front(), -std::numeric_limits<double>::infinity()));
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
        candidates.push_back(0.5 * (fractions[i] + fractions[i + 1]));
    }
    candidates.push_back(fractions.back());

    out.gmean = -1.0;
    for (double c : candidates) {
        auto pred = predict(c);
        const double g = gmean(pred, truth);
        if (g > out.gmean) {
            out.gmean = g;
            out.cutoff = c;
            out.labels = std::move(pred);
        }
    }
    return out;
}

}  // namespace omix
