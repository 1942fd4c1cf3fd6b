#include "omix/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "omix/datagen.hpp"
#include "omix/errors.hpp"
#include "omix/model_io.hpp"

namespace omix {

void SelectionCurve::validate() const {
    if (ks.empty()) throw SelectionError("selection curve is empty");
    if (penalties.size() != ks.size() || max_logliks.size() != ks.size()) {
        throw SelectionError("selection curve arrays are not aligned");
    }
    for (std::size_t i = 1; i < ks.size(); ++i) {
        if (ks[i] <= ks[i - 1]) throw SelectionError("selection curve K values must be strictly increasing");
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (!std::isfinite(penalties[i]) || !std::isfinite(max_logliks[i])) {
            throw SelectionError("selection curve holds non-finite values");
        }
    }
}

SelectionCurve fit_k_range(const Eigen::Ref<const Dataset>& data, const std::vector<int>& ks,
                           const SelectionConfig& config) {
    if (ks.empty()) throw UsageError("fit_k_range: empty K range");
    if (config.restarts < 1) throw UsageError("fit_k_range: restarts must be at least 1");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1) throw UsageError("fit_k_range: K must be at least 1");
        if (i > 0 && ks[i] <= ks[i - 1]) throw UsageError("fit_k_range: K values must be strictly increasing");
    }

    Eigen::Index n_train = data.cols();
    if (config.score == SelectionScore::Heldout) {
        if (!(config.heldout_fraction > 0.0 && config.heldout_fraction < 1.0)) {
            throw UsageError("fit_k_range: held-out fraction must lie in (0, 1)");
        }
        n_train = data.cols() - static_cast<Eigen::Index>(
                                    std::llround(config.heldout_fraction * static_cast<double>(data.cols())));
        if (n_train == data.cols() || n_train < 1) throw UsageError("fit_k_range: data too small to hold out");
    }
    const auto train = data.leftCols(n_train);
    const auto test = data.rightCols(data.cols() - n_train);

    SelectionCurve curve;
    curve.n = config.score == SelectionScore::Heldout ? test.cols() : train.cols();
    BatchEmOptions short_em = config.em;
    short_em.max_iters = std::min(config.short_iters, config.em.max_iters);
    std::optional<MixtureModel> previous;
    int previous_k = 0;
    for (int k : ks) {
        // Short runs from every start, then the most promising one to convergence.
        std::optional<BatchEmResult> lead;
        auto consider = [&](BatchEmResult fit) {
            if (!lead || fit.loglik_trace.back() > lead->loglik_trace.back()) lead = std::move(fit);
        };
        for (int r = 0; r < config.restarts; ++r) {
            const auto seed = derive_seed(config.seed, static_cast<std::uint64_t>(k) * 1000 + r);
            consider(batch_em(train, k, config.family, seed, short_em));
        }
        if (config.split_start && previous && previous_k == k - 1) {
            consider(batch_em(train, split_component(*previous), short_em));
        }
        auto fit = lead->converged ? std::move(*lead) : batch_em(train, lead->model, config.em);
        const double best = config.score == SelectionScore::Heldout ? heldout_loglik(fit.model, test)
                                                                    : fit.loglik_trace.back();
        previous = std::move(fit.model);
        previous_k = k;
        curve.ks.push_back(k);
        curve.penalties.push_back(static_cast<double>(param_count(config.family, k, static_cast<int>(data.rows()))));
        curve.max_logliks.push_back(best);
    }
    return curve;
}

namespace {

double median(std::vector<double> v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

double repeated_median_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw UsageError("repeated_median_slope: x and y sizes differ");
    std::vector<double> outer;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> inner;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j != i && x[j] != x[i]) inner.push_back((y[j] - y[i]) / (x[j] - x[i]));
        }
        if (!inner.empty()) outer.push_back(median(std::move(inner)));
    }
    if (outer.empty()) throw SelectionError("repeated_median_slope: need two distinct x values");
    return median(std::move(outer));
}

SlopeResult slope_heuristic(const SelectionCurve& curve, double fit_fraction) {
    curve.validate();
    if (!(fit_fraction > 0.0 && fit_fraction <= 1.0)) throw UsageError("fit fraction must lie in (0, 1]");
    const auto size = curve.ks.size();
    if (size < kMinTailPoints) {
        throw SelectionError("slope heuristic needs at least " + std::to_string(kMinTailPoints) +
                             " curve points, got " + std::to_string(size));
    }
    const auto tail = std::max(kMinTailPoints,
                               static_cast<std::size_t>(std::ceil(fit_fraction * static_cast<double>(size))));
    const double n = static_cast<double>(curve.n > 0 ? curve.n : 1);
    std::vector<double> x, y;
    for (std::size_t i = size - tail; i < size; ++i) {
        x.push_back(curve.penalties[i]);
        y.push_back(n * curve.max_logliks[i]);
    }

    SlopeResult out;
    out.kappa = repeated_median_slope(x, y);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size; ++i) {
        const double c = n * curve.max_logliks[i] - 2.0 * out.kappa * curve.penalties[i];
        out.criterion.push_back(c);
        if (c > best) {
            best = c;
            out.k_star = curve.ks[i];
        }
    }
    return out;
}

std::string serialize_curve(const SelectionCurve& curve) {
    curve.validate();
    std::ostringstream os;
    os << "# n " << curve.n << "\n# K penalty loglik\n";
    for (std::size_t i = 0; i < curve.ks.size(); ++i) {
        os << curve.ks[i] << ' ' << format_double(curve.penalties[i]) << ' ' << format_double(curve.max_logliks[i])
           << '\n';
    }
    return os.str();
}

SelectionCurve deserialize_curve(const std::string& text) {
    SelectionCurve curve;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash, key;
            ls >> hash >> key;
            if (key == "n") {
                std::string value;
                ls >> value;
                curve.n = static_cast<std::int64_t>(parse_double(value));
            }
            continue;
        }
        std::string k, pen, ll, extra;
        if (!(ls >> k >> pen >> ll) || (ls >> extra)) throw FormatError("curve row must hold K penalty loglik");
        curve.ks.push_back(static_cast<int>(parse_double(k)));
        curve.penalties.push_back(parse_double(pen));
        curve.max_logliks.push_back(parse_double(ll));
    }
    try {
        curve.validate();
    } catch (const SelectionError& e) {
        throw FormatError(std::string("invalid curve file: ") + e.what());
    }
    return curve;
}

}  // namespace omix
