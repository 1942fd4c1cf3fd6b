#include "omix/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "omix/errors.hpp"

namespace omix {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw FormatError("invalid number '" + std::string(token) + "'");
    }
    return v;
}

namespace {

void write_values(std::ostringstream& os, std::string_view key, const double* data, Eigen::Index n) {
    os << key;
    for (Eigen::Index i = 0; i < n; ++i) os << ' ' << format_double(data[i]);
    os << '\n';
}

void write_vector(std::ostringstream& os, std::string_view key, const Vector& v) {
    write_values(os, key, v.data(), v.size());
}

void write_matrix(std::ostringstream& os, std::string_view key, const Matrix& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    write_values(os, key, rm.data(), rm.size());
}

/// Line-oriented reader: each record is "key value value ...".
class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    /// Next non-empty line split on whitespace; false at end of input.
    bool next(std::vector<std::string_view>& tokens) {
        while (pos_ < text_.size()) {
            auto eol = text_.find('\n', pos_);
            if (eol == std::string_view::npos) eol = text_.size();
            std::string_view line = text_.substr(pos_, eol - pos_);
            pos_ = eol + 1;
            ++line_no_;
            tokens.clear();
            std::size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
                std::size_t j = i;
                while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
                if (j > i) tokens.push_back(line.substr(i, j - i));
                i = j;
            }
            if (!tokens.empty()) return true;
        }
        return false;
    }

    std::vector<std::string_view> expect(std::string_view key, std::size_t values) {
        std::vector<std::string_view> tokens;
        if (!next(tokens)) fail("unexpected end of file, expected '" + std::string(key) + "'");
        if (tokens.front() != key) {
            fail("expected '" + std::string(key) + "', found '" + std::string(tokens.front()) + "'");
        }
        if (tokens.size() != values + 1) {
            fail("'" + std::string(key) + "' expects " + std::to_string(values) + " values, got " +
                 std::to_string(tokens.size() - 1));
        }
        return tokens;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("model file line " + std::to_string(line_no_) + ": " + msg);
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_no_ = 0;
};

int parse_int(std::string_view token, const LineReader& reader) {
    int v = 0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) reader.fail("invalid integer '" + std::string(token) + "'");
    return v;
}

Vector read_vector(LineReader& reader, std::string_view key, int n) {
    const auto tokens = reader.expect(key, static_cast<std::size_t>(n));
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = parse_double(tokens[static_cast<std::size_t>(i) + 1]);
    return v;
}

Matrix read_matrix(LineReader& reader, std::string_view key, int m) {
    const Vector flat = read_vector(reader, key, m * m);
    Matrix out(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) out(i, j) = flat[i * m + j];
    }
    return out;
}

}  // namespace

std::string serialize(const MixtureModel& model) {
    std::ostringstream os;
    os << "omix-model " << kModelFormatVersion << '\n';
    os << "family " << family_name(model.family()) << '\n';
    os << "K " << model.k() << '\n';
    os << "M " << model.dim() << '\n';
    write_vector(os, "weights", model.weights());
    for (int k = 0; k < model.k(); ++k) {
        os << "component " << k << '\n';
        if (model.family() == Family::Gaussian) {
            const auto& c = model.gaussian()[static_cast<std::size_t>(k)];
            write_vector(os, "mu", c.mu());
            write_matrix(os, "sigma", c.sigma());
        } else {
            const auto& c = model.mst()[static_cast<std::size_t>(k)];
            write_vector(os, "mu", c.mu());
            write_matrix(os, "D", c.d());
            write_vector(os, "A", c.a());
            write_vector(os, "nu", c.nu());
        }
    }
    os << "end\n";
    return os.str();
}

MixtureModel deserialize(std::string_view text) {
    LineReader reader(text);
    std::vector<std::string_view> tokens;
    if (!reader.next(tokens) || tokens.size() != 2 || tokens[0] != "omix-model") {
        throw FormatError("not an omix model file (missing 'omix-model' header)");
    }
    if (tokens[1] != std::to_string(kModelFormatVersion)) {
        throw FormatError("unsupported model format version '" + std::string(tokens[1]) +
                          "' (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    const Family family = [&] {
        const auto t = reader.expect("family", 1);
        try {
            return parse_family(t[1]);
        } catch (const UsageError& e) {
            reader.fail(e.what());
        }
    }();
    const int k = parse_int(reader.expect("K", 1)[1], reader);
    const int m = parse_int(reader.expect("M", 1)[1], reader);
    if (k < 1) reader.fail("K must be at least 1");
    if (m < 1) reader.fail("M must be at least 1");
    Vector weights = read_vector(reader, "weights", k);

    try {
        if (family == Family::Gaussian) {
            std::vector<GaussianComponent> comps;
            comps.reserve(static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) {
                if (parse_int(reader.expect("component", 1)[1], reader) != i) {
                    reader.fail("components out of order");
                }
                Vector mu = read_vector(reader, "mu", m);
                Matrix sigma = read_matrix(reader, "sigma", m);
                comps.emplace_back(std::move(mu), std::move(sigma));
            }
            reader.expect("end", 0);
            return MixtureModel(std::move(weights), std::move(comps));
        }
        std::vector<MstComponent> comps;
        comps.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            if (parse_int(reader.expect("component", 1)[1], reader) != i) {
                reader.fail("components out of order");
            }
            Vector mu = read_vector(reader, "mu", m);
            Matrix d = read_matrix(reader, "D", m);
            Vector a = read_vector(reader, "A", m);
            Vector nu = read_vector(reader, "nu", m);
            comps.emplace_back(std::move(mu), std::move(d), std::move(a), std::move(nu));
        }
        reader.expect("end", 0);
        return MixtureModel(std::move(weights), std::move(comps));
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        // Invariant violations surface as format errors on load.
        throw FormatError(e.what());
    }
}

void save_model(const MixtureModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
    out << serialize(model);
    if (!out) throw UsageError("failed writing '" + path.string() + "'");
}

MixtureModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open model file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

}  // namespace omix
