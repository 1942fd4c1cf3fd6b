#pragma once

#include <cstdint>
#include <optional>

#include "omix/mixture.hpp"

namespace omix {

/// Forward-only stream of feature vectors.
class SampleSource {
public:
    virtual ~SampleSource() = default;

    [[nodiscard]] virtual int dim() const = 0;
    /// Writes up to out.cols() samples into the leading columns of `out` and
    /// returns how many were written; 0 means the stream is exhausted.
    virtual Eigen::Index read(Eigen::Ref<Dataset> out) = 0;
    /// Total number of samples when known in advance.
    [[nodiscard]] virtual std::optional<std::uint64_t> size_hint() const { return std::nullopt; }
};

/// Streams the columns of an in-memory dataset (not copied; must outlive the source).
class MatrixSource final : public SampleSource {
public:
    explicit MatrixSource(const Dataset& data) : data_(data) {}

    [[nodiscard]] int dim() const override { return static_cast<int>(data_.rows()); }
    Eigen::Index read(Eigen::Ref<Dataset> out) override;
    [[nodiscard]] std::optional<std::uint64_t> size_hint() const override {
        return static_cast<std::uint64_t>(data_.cols());
    }

private:
    const Dataset& data_;
    Eigen::Index pos_ = 0;
};

/// Pass-through wrapper that records how the stream was consumed.
class CountingSource final : public SampleSource {
public:
    explicit CountingSource(SampleSource& inner) : inner_(inner) {}

    [[nodiscard]] int dim() const override { return inner_.dim(); }
    Eigen::Index read(Eigen::Ref<Dataset> out) override;
    [[nodiscard]] std::optional<std::uint64_t> size_hint() const override { return inner_.size_hint(); }

    [[nodiscard]] std::uint64_t samples_delivered() const noexcept { return delivered_; }
    [[nodiscard]] std::uint64_t read_calls() const noexcept { return calls_; }
    /// Largest number of samples requested by a single read.
    [[nodiscard]] Eigen::Index max_request() const noexcept { return max_request_; }
    /// Passes over the data implied by the delivered count: ceil(delivered / size).
    /// Falls back to 1 for a non-empty stream of unknown size.
    [[nodiscard]] int passes() const noexcept;

private:
    SampleSource& inner_;
    std::uint64_t delivered_ = 0;
    std::uint64_t calls_ = 0;
    Eigen::Index max_request_ = 0;
};

}  // namespace omix
