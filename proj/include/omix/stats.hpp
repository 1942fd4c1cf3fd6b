#pragma once

#include <cstddef>
#include <vector>

#include "omix/mixture.hpp"

namespace omix {

/// Expected complete-data sufficient statistics of a mixture, stored flat so
/// the stochastic-approximation update is a single convex combination.
///
/// Per component k the layout is
///   Gaussian: s0 | s1 (M) | S2 (M*M)
///   MST:      s0 | for m = 0..M-1: s1_m (M) | S2_m (M*M) | s3_m | s4_m
/// with s0 the responsibility mass. S2 blocks are column-major.
class SufficientStats {
public:
    SufficientStats(Family family, int k, int dim);

    [[nodiscard]] Family family() const noexcept { return family_; }
    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] int dim() const noexcept { return dim_; }

    [[nodiscard]] double& s0(int k) { return data_[offset(k)]; }
    [[nodiscard]] double s0(int k) const { return data_[offset(k)]; }

    // Gaussian layout.
    [[nodiscard]] Eigen::Map<Vector> s1(int k);
    [[nodiscard]] Eigen::Map<const Vector> s1(int k) const;
    [[nodiscard]] Eigen::Map<Matrix> s2(int k);
    [[nodiscard]] Eigen::Map<const Matrix> s2(int k) const;

    // MST layout, per direction m.
    [[nodiscard]] Eigen::Map<Vector> s1(int k, int m);
    [[nodiscard]] Eigen::Map<const Vector> s1(int k, int m) const;
    [[nodiscard]] Eigen::Map<Matrix> s2(int k, int m);
    [[nodiscard]] Eigen::Map<const Matrix> s2(int k, int m) const;
    [[nodiscard]] double& s3(int k, int m);
    [[nodiscard]] double s3(int k, int m) const;
    [[nodiscard]] double& s4(int k, int m);
    [[nodiscard]] double s4(int k, int m) const;

    [[nodiscard]] double total_mass() const;

    void set_zero();
    /// this = gamma * other + (1 - gamma) * this
    void blend(const SufficientStats& other, double gamma);
    void scale(double factor);
    void add(const SufficientStats& other);
    /// this += weight * (stats of component `from` in `other`), into component `to`.
    void add_component(int to, const SufficientStats& other, int from, double weight);
    void scale_component(int k, double factor);

    /// Per-component block normalized by its s0 (s0 set to 1).
    [[nodiscard]] SufficientStats normalized_component(int k) const;

    /// Largest |S2 - S2^T| entry over all blocks.
    [[nodiscard]] double max_asymmetry() const;

    [[nodiscard]] std::size_t component_size() const noexcept { return block_; }
    [[nodiscard]] std::size_t byte_size() const noexcept { return data_.capacity() * sizeof(double); }
    [[nodiscard]] const std::vector<double>& raw() const noexcept { return data_; }
    [[nodiscard]] std::vector<double>& raw() noexcept { return data_; }

private:
    [[nodiscard]] std::size_t offset(int k) const { return static_cast<std::size_t>(k) * block_; }
    [[nodiscard]] std::size_t mst_offset(int k, int m) const;
    void check_compatible(const SufficientStats& other) const;

    Family family_;
    int k_;
    int dim_;
    std::size_t block_;
    std::size_t dir_block_;
    std::vector<double> data_;
};

/// Posterior moments of the scale variables of one MST component:
/// u_m = E[W_m | y] = alpha_m / beta_m and utld_m = E[log W_m | y] =
/// digamma(alpha_m) - log(beta_m), with alpha_m = (nu_m + 1) / 2 and
/// beta_m = nu_m / 2 + (d_m^T (y - mu))^2 / (2 A_m).
struct WeightExpectations {
    Vector u;
    Vector utld;
};

[[nodiscard]] WeightExpectations mst_weight_expectations(const Eigen::Ref<const Vector>& y,
                                                         const MstComponent& c);

/// s-bar(y; theta) for a single sample.
[[nodiscard]] SufficientStats sbar_gaussian(const Eigen::Ref<const Vector>& y, const MixtureModel& model);
[[nodiscard]] SufficientStats sbar_mst(const Eigen::Ref<const Vector>& y, const MixtureModel& model);
[[nodiscard]] SufficientStats sbar(const Eigen::Ref<const Vector>& y, const MixtureModel& model);

/// Result of averaging s-bar over a block of samples.
struct EStepSummary {
    double mean_loglik = 0.0;
    /// Index (column) of the sample with the lowest mixture density.
    Eigen::Index lowest_density_index = -1;
    std::size_t degenerate_samples = 0;
};

/// out = mean over the columns of `data` of s-bar(y; model). `out` must have
/// the model's family, K and M; its previous content is overwritten.
/// Validates every sample (dimension and finiteness).
EStepSummary accumulate_sbar(const Eigen::Ref<const Dataset>& data, const MixtureModel& model,
                             SufficientStats& out);

}  // namespace omix
