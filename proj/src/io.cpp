#include "omix/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "omix/errors.hpp"

namespace omix {

static_assert(std::endian::native == std::endian::little, "FVS1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'V', 'S', '1'};
constexpr std::streamoff kHeaderBytes = 4 + 2 + 4 + 8;
constexpr std::streamoff kCountOffset = 4 + 2 + 4;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(path + ": truncated FVS1 header");
    return v;
}

}  // namespace

Fvs1Reader::Fvs1Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open " + path);
    char magic[4];
    if (!in_.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": not an FVS1 file");
    header_.version = get<std::uint16_t>(in_, path);
    header_.dim = get<std::uint32_t>(in_, path);
    header_.n = get<std::uint64_t>(in_, path);
    if (header_.version != kFvs1Version) {
        throw FormatError(path + ": unsupported FVS1 version " + std::to_string(header_.version));
    }
    if (header_.dim < 1) throw FormatError(path + ": FVS1 dimension must be at least 1");
}

std::optional<std::uint64_t> Fvs1Reader::size_hint() const {
    if (header_.n == 0) return std::nullopt;
    return header_.n;
}

Eigen::Index Fvs1Reader::read(Eigen::Ref<Dataset> out) {
    if (out.rows() != dim()) throw UsageError("Fvs1Reader: output has the wrong number of rows");
    auto want = static_cast<std::uint64_t>(out.cols());
    if (header_.n != 0) want = std::min(want, header_.n - consumed_);
    if (want == 0) return 0;
    const auto m = static_cast<std::size_t>(header_.dim);
    scratch_.resize(static_cast<std::size_t>(want) * m);
    in_.read(reinterpret_cast<char*>(scratch_.data()), static_cast<std::streamsize>(scratch_.size() * sizeof(float)));
    const auto bytes = static_cast<std::size_t>(in_.gcount());
    if (bytes % (m * sizeof(float)) != 0) throw FormatError(path_ + ": truncated FVS1 sample");
    const auto got = bytes / (m * sizeof(float));
    if (header_.n != 0 && got < want) {
        throw FormatError(path_ + ": FVS1 header announces " + std::to_string(header_.n) + " samples, file ends at " +
                          std::to_string(consumed_ + got));
    }
    for (std::size_t i = 0; i < got; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const float v = scratch_[i * m + j];
            if (!std::isfinite(v)) {
                throw DataError(path_ + ": non-finite value in sample " + std::to_string(consumed_ + i));
            }
            out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = static_cast<double>(v);
        }
    }
    consumed_ += got;
    return static_cast<Eigen::Index>(got);
}

Fvs1Writer::Fvs1Writer(const std::string& path, int dim)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), dim_(dim) {
    if (dim < 1) throw UsageError("FVS1 dimension must be at least 1");
    if (!out_) throw DataError("cannot open " + path + " for writing");
    out_.write(kMagic, 4);
    put<std::uint16_t>(out_, kFvs1Version);
    put<std::uint32_t>(out_, static_cast<std::uint32_t>(dim));
    put<std::uint64_t>(out_, 0);
}

Fvs1Writer::~Fvs1Writer() {
    try {
        close();
    } catch (...) {
    }
}

void Fvs1Writer::write(const Eigen::Ref<const Dataset>& samples) {
    if (closed_) throw UsageError("Fvs1Writer: write after close");
    if (samples.rows() != dim_) throw UsageError("Fvs1Writer: sample dimension mismatch");
    if (!samples.allFinite()) throw DataError(path_ + ": refusing to write non-finite values");
    scratch_.resize(static_cast<std::size_t>(samples.size()));
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        for (Eigen::Index j = 0; j < samples.rows(); ++j) scratch_[idx++] = static_cast<float>(samples(j, i));
    }
    out_.write(reinterpret_cast<const char*>(scratch_.data()),
               static_cast<std::streamsize>(scratch_.size() * sizeof(float)));
    if (!out_) throw DataError(path_ + ": write failed");
    n_ += static_cast<std::uint64_t>(samples.cols());
}

void Fvs1Writer::close() {
    if (closed_) return;
    closed_ = true;
    out_.seekp(kCountOffset);
    put<std::uint64_t>(out_, n_);
    out_.close();
    if (!out_) throw DataError(path_ + ": failed to finalize FVS1 file");
}

CsvReader::CsvReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw DataError("cannot open " + path);
    std::vector<float> row;
    std::string line;
    // The first non-empty line fixes the dimension; skip it when it is a header.
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        row.clear();
        std::size_t pos = 0;
        bool numeric = true;
        while (pos < line.size()) {
            pos = line.find_first_not_of(" \t\r,", pos);
            if (pos == std::string::npos) break;
            const auto end = std::min(line.find_first_of(" \t\r,", pos), line.size());
            float v;
            const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
            if (res.ec != std::errc() || res.ptr != line.data() + end) {
                numeric = false;
                break;
            }
            row.push_back(v);
            pos = end;
        }
        if (numeric) {
            dim_ = static_cast<int>(row.size());
            pending_ = row;
        } else {
            std::vector<float> next;
            if (next_row(next)) {
                dim_ = static_cast<int>(next.size());
                pending_ = std::move(next);
            }
        }
        break;
    }
    if (dim_ < 1) throw DataError(path + ": no samples");
}

bool CsvReader::next_row(std::vector<float>& row) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        row.clear();
        std::size_t pos = 0;
        while (pos < line.size()) {
            pos = line.find_first_not_of(" \t\r,", pos);
            if (pos == std::string::npos) break;
            const auto end = std::min(line.find_first_of(" \t\r,", pos), line.size());
            float v;
            const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
            if (res.ec != std::errc() || res.ptr != line.data() + end) {
                throw FormatError(path_ + ":" + std::to_string(line_no_) + ": cannot parse '" +
                                  line.substr(pos, end - pos) + "'");
            }
            row.push_back(v);
            pos = end;
        }
        return true;
    }
    return false;
}

Eigen::Index CsvReader::read(Eigen::Ref<Dataset> out) {
    if (out.rows() != dim_) throw UsageError("CsvReader: output has the wrong number of rows");
    Eigen::Index got = 0;
    std::vector<float> row;
    while (got < out.cols()) {
        if (pending_) {
            row = std::move(*pending_);
            pending_.reset();
        } else if (!next_row(row)) {
            break;
        }
        if (static_cast<int>(row.size()) != dim_) {
            throw FormatError(path_ + ":" + std::to_string(line_no_) + ": expected " + std::to_string(dim_) +
                              " fields, got " + std::to_string(row.size()));
        }
        for (int j = 0; j < dim_; ++j) {
            if (!std::isfinite(row[static_cast<std::size_t>(j)])) {
                throw DataError(path_ + ":" + std::to_string(line_no_) + ": non-finite value");
            }
            out(j, got) = static_cast<double>(row[static_cast<std::size_t>(j)]);
        }
        ++got;
    }
    return got;
}

std::unique_ptr<SampleSource> open_samples(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) return std::make_unique<Fvs1Reader>(path);
    return std::make_unique<CsvReader>(path);
}

Dataset read_all(SampleSource& source) {
    const int m = source.dim();
    Eigen::Index cap = source.size_hint() ? static_cast<Eigen::Index>(*source.size_hint()) : 4096;
    cap = std::max<Eigen::Index>(cap, 1);
    Dataset out(m, cap);
    Eigen::Index n = 0;
    for (;;) {
        if (n == out.cols()) out.conservativeResize(Eigen::NoChange, 2 * out.cols());
        const auto got = source.read(out.middleCols(n, out.cols() - n));
        if (got == 0) break;
        n += got;
    }
    out.conservativeResize(Eigen::NoChange, n);
    return out;
}

void write_fvs1(const std::string& path, const Eigen::Ref<const Dataset>& samples) {
    Fvs1Writer w(path, static_cast<int>(samples.rows()));
    w.write(samples);
    w.close();
}

void write_csv(const std::string& path, const Eigen::Ref<const Dataset>& samples) {
    if (!samples.allFinite()) throw DataError(path + ": refusing to write non-finite values");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    char buf[64];
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        for (Eigen::Index j = 0; j < samples.rows(); ++j) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(samples(j, i)));
            if (j > 0) out << ',';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) throw DataError(path + ": write failed");
}

std::string to_json(const BenchReport& report) {
    nlohmann::json j;
    j["samples_per_second"] = report.samples_per_second;
    j["retained_state_bytes"] = report.retained_state_bytes;
    j["passes_over_data"] = report.passes_over_data;
    j["wall_time_s"] = report.wall_time_s;
    if (report.peak_tracked_alloc_bytes) {
        j["peak_tracked_alloc_bytes"] = *report.peak_tracked_alloc_bytes;
    } else {
        j["peak_tracked_alloc_bytes"] = nullptr;
    }
    return j.dump(2);
}

}  // namespace omix
