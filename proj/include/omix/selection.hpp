#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omix/batch_em.hpp"
#include "omix/mixture.hpp"

namespace omix {

struct SelectionCurve {
    std::vector<int> ks;
    /// Free-parameter count of each K (param_count).
    std::vector<double> penalties;
    /// Best mean log-likelihood per K over the restarts.
    std::vector<double> max_logliks;
    /// Sample count the log-likelihoods are averaged over.
    std::int64_t n = 0;

    void validate() const;
};

enum class SelectionScore { Heldout, Training };

struct SelectionConfig {
    Family family = Family::Gaussian;
    int restarts = 3;
    std::uint64_t seed = 0;
    SelectionScore score = SelectionScore::Training;
    /// Share of the columns (taken from the end) held out when scoring on held-out data.
    double heldout_fraction = 0.25;
    /// Also start K from the best (K - 1) fit with its heaviest component split.
    bool split_start = true;
    /// Length of the short EM runs used to rank the starts.
    int short_iters = 50;
    /// Over-fitted K converge slowly; the curve needs near-maximal likelihoods.
    BatchEmOptions em{.max_iters = 1000};
};

/// For each K, runs short_iters EM iterations from `restarts` k-means++
/// starts (restart r uses derive_seed(seed, K * 1000 + r)) and, with
/// split_start, from split_component of the previous K's fit when that K was
/// K - 1. The start with the highest training log-likelihood is then run to
/// convergence and its log-likelihood (training or held-out) is recorded.
[[nodiscard]] SelectionCurve fit_k_range(const Eigen::Ref<const Dataset>& data, const std::vector<int>& ks,
                                         const SelectionConfig& config);

/// Median over i of the median over j != i of pairwise slopes (Siegel).
/// Pairs with equal x are skipped.
[[nodiscard]] double repeated_median_slope(const std::vector<double>& x, const std::vector<double>& y);

struct SlopeResult {
    double kappa = 0.0;
    int k_star = 0;
    /// n * loglik - 2 kappa * penalty per curve point.
    std::vector<double> criterion;
};

inline constexpr std::size_t kMinTailPoints = 4;

/// Fits kappa on the last max(ceil(fit_fraction * size), 4) points (the
/// largest K), then picks argmax n ll - 2 kappa pen, ties to the smallest K.
/// Throws SelectionError when the curve has fewer than 4 points.
[[nodiscard]] SlopeResult slope_heuristic(const SelectionCurve& curve, double fit_fraction = 0.5);

/// Plain columnar text: a "# n <n>" header line, then "K penalty loglik" rows.
[[nodiscard]] std::string serialize_curve(const SelectionCurve& curve);
[[nodiscard]] SelectionCurve deserialize_curve(const std::string& text);

}  // namespace omix
