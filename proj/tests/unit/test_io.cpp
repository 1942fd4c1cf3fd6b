#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "omix/errors.hpp"
#include "omix/io.hpp"

using namespace omix;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("omix_test_" + name);
}

Dataset float_data(int m, int n) {
    return Dataset::Random(m, n).cast<float>().cast<double>();
}

}  // namespace

TEST_CASE("FVS1 round-trip through writer and reader") {
    const auto path = temp_file("a.fvs1").string();
    const Dataset data = float_data(3, 1000);
    write_fvs1(path, data);
    CHECK(fs::file_size(path) == 18 + 3 * 1000 * 4);
    Fvs1Reader reader(path);
    CHECK(reader.dim() == 3);
    CHECK(reader.header().n == 1000);
    CHECK(read_all(reader) == data);
    auto any = open_samples(path);
    CHECK(read_all(*any) == data);
    fs::remove(path);
}

TEST_CASE("FVS1 streaming writer patches the count") {
    const auto path = temp_file("b.fvs1").string();
    const Dataset data = float_data(2, 10);
    {
        Fvs1Writer w(path, 2);
        w.write(data.leftCols(4));
        w.write(data.rightCols(6));
        CHECK(w.written() == 10);
    }
    Fvs1Reader reader(path);
    CHECK(reader.header().n == 10);
    CHECK(read_all(reader) == data);
    Dataset bad = data;
    bad(0, 0) = std::nan("");
    Fvs1Writer w(path, 2);
    CHECK_THROWS_AS(w.write(bad), DataError);
    fs::remove(path);
}

TEST_CASE("FVS1 rejects corrupt files") {
    const auto path = temp_file("c.fvs1").string();
    write_fvs1(path, float_data(2, 10));
    fs::resize_file(path, fs::file_size(path) - 3);
    {
        Fvs1Reader reader(path);
        CHECK_THROWS_AS((void)read_all(reader), FormatError);
    }
    {
        // Right magic, unsupported version.
        std::ofstream(path, std::ios::binary) << "FVS1" << '\x07' << '\0' << "000000000000";
    }
    CHECK_THROWS_AS((void)open_samples(path), FormatError);
    fs::remove(path);
}

TEST_CASE("CSV and FVS1 agree on the same data") {
    const auto csv = temp_file("d.csv").string();
    const auto bin = temp_file("d.fvs1").string();
    const Dataset data = float_data(4, 50) * 1000.0;
    write_csv(csv, data);
    write_fvs1(bin, data);
    CsvReader reader(csv);
    const auto from_csv = read_all(reader);
    Fvs1Reader breader(bin);
    CHECK(from_csv == read_all(breader));
    fs::remove(csv);
    fs::remove(bin);
}

TEST_CASE("CSV headers, separators and errors") {
    const auto path = temp_file("e.csv").string();
    {
        std::ofstream(path) << "x,y\n1,2\n3 4\n5,\t6\n";
    }
    CsvReader reader(path);
    const auto data = read_all(reader);
    CHECK(data.cols() == 3);
    CHECK(data(1, 2) == 6.0);
    {
        std::ofstream(path) << "1,2\n3,abc\n";
    }
    CsvReader bad(path);
    CHECK_THROWS_AS((void)read_all(bad), FormatError);
    {
        std::ofstream(path) << "1,2\n3\n";
    }
    CsvReader ragged(path);
    CHECK_THROWS_AS((void)read_all(ragged), FormatError);
    fs::remove(path);
}

TEST_CASE("bench report JSON carries every field") {
    BenchReport r;
    r.samples_per_second = 1.5e5;
    r.retained_state_bytes = 4096;
    r.passes_over_data = 1;
    r.wall_time_s = 2.0;
    auto j = nlohmann::json::parse(to_json(r));
    CHECK(j["samples_per_second"] == 1.5e5);
    CHECK(j["retained_state_bytes"] == 4096);
    CHECK(j["passes_over_data"] == 1);
    CHECK(j["peak_tracked_alloc_bytes"].is_null());
    r.peak_tracked_alloc_bytes = 77;
    CHECK(nlohmann::json::parse(to_json(r))["peak_tracked_alloc_bytes"] == 77);
}
