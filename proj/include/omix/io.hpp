#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "omix/source.hpp"

namespace omix {

inline constexpr std::uint16_t kFvs1Version = 1;

struct Fvs1Header {
    std::uint16_t version = kFvs1Version;
    std::uint32_t dim = 0;
    /// 0 when the sample count is unknown (stream).
    std::uint64_t n = 0;
};

/// Streams float32 samples from an FVS1 file. With n = 0 in the header the
/// reader runs to end of file; otherwise a short file is a FormatError.
class Fvs1Reader final : public SampleSource {
public:
    explicit Fvs1Reader(const std::string& path);

    [[nodiscard]] int dim() const override { return static_cast<int>(header_.dim); }
    Eigen::Index read(Eigen::Ref<Dataset> out) override;
    [[nodiscard]] std::optional<std::uint64_t> size_hint() const override;
    [[nodiscard]] const Fvs1Header& header() const noexcept { return header_; }

private:
    std::ifstream in_;
    std::string path_;
    Fvs1Header header_;
    std::uint64_t consumed_ = 0;
    std::vector<float> scratch_;
};

/// Writes FVS1. Non-finite values are rejected (DataError) before anything
/// is written for that call. close() patches the sample count into the header.
class Fvs1Writer {
public:
    Fvs1Writer(const std::string& path, int dim);
    ~Fvs1Writer();
    Fvs1Writer(const Fvs1Writer&) = delete;
    Fvs1Writer& operator=(const Fvs1Writer&) = delete;

    void write(const Eigen::Ref<const Dataset>& samples);
    void close();
    [[nodiscard]] std::uint64_t written() const noexcept { return n_; }

private:
    std::ofstream out_;
    std::string path_;
    int dim_;
    std::uint64_t n_ = 0;
    bool closed_ = false;
    std::vector<float> scratch_;
};

/// Comma- or whitespace-separated rows, one sample per row. Fields are parsed
/// as float32 so CSV and FVS1 copies of the same data agree bit for bit. A
/// first line that does not parse as numbers is treated as a header.
class CsvReader final : public SampleSource {
public:
    explicit CsvReader(const std::string& path);

    [[nodiscard]] int dim() const override { return dim_; }
    Eigen::Index read(Eigen::Ref<Dataset> out) override;

private:
    bool next_row(std::vector<float>& row);

    std::ifstream in_;
    std::string path_;
    int dim_ = 0;
    std::uint64_t line_no_ = 0;
    std::optional<std::vector<float>> pending_;
};

/// FVS1 when the file starts with the magic, CSV otherwise.
[[nodiscard]] std::unique_ptr<SampleSource> open_samples(const std::string& path);

/// Drains a source into memory.
[[nodiscard]] Dataset read_all(SampleSource& source);

void write_fvs1(const std::string& path, const Eigen::Ref<const Dataset>& samples);
void write_csv(const std::string& path, const Eigen::Ref<const Dataset>& samples);

struct BenchReport {
    double samples_per_second = 0.0;
    std::uint64_t retained_state_bytes = 0;
    int passes_over_data = 0;
    double wall_time_s = 0.0;
    std::optional<std::uint64_t> peak_tracked_alloc_bytes;
};

[[nodiscard]] std::string to_json(const BenchReport& report);

}  // namespace omix
