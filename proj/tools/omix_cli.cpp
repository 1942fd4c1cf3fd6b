// omix command-line front end. Exit codes: 0 ok, 2 usage/format/data, 3
// numeric failure or aborted estimation.

#include <malloc.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "omix/datagen.hpp"
#include "omix/errors.hpp"
#include "omix/io.hpp"
#include "omix/model_io.hpp"
#include "omix/online_em.hpp"
#include "omix/scoring.hpp"
#include "omix/selection.hpp"

// Heap accounting for the bench report: live bytes and their peak.
namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

void note_alloc(void* p) {
    if (!p) return;
    const auto now = g_live.fetch_add(malloc_usable_size(p)) + malloc_usable_size(p);
    auto peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
    }
}
void note_free(void* p) {
    if (p) g_live.fetch_sub(malloc_usable_size(p));
}
}  // namespace

void* operator new(std::size_t n) {
    void* p = std::malloc(n == 0 ? 1 : n);
    if (!p) throw std::bad_alloc();
    note_alloc(p);
    return p;
}
void operator delete(void* p) noexcept {
    note_free(p);
    std::free(p);
}
void operator delete(void* p, std::size_t) noexcept {
    note_free(p);
    std::free(p);
}

using namespace omix;

namespace {

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(parse_double(tok));
    }
    if (out.empty()) throw UsageError("expected a comma-separated list of numbers, got '" + text + "'");
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    return out;
}

Dataset read_nonempty(const std::string& path) {
    auto src = open_samples(path);
    auto data = read_all(*src);
    if (data.cols() == 0) throw DataError(path + ": no samples");
    return data;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_samples(const std::string& path, const Dataset& data) {
    if (ends_with(path, ".csv")) {
        write_csv(path, data);
    } else {
        write_fvs1(path, data);
    }
}

// Threshold from either --tau or --calibrate alpha,PATH.
double resolve_tau(const MixtureModel& model, const std::string& tau_text, const std::string& calibrate) {
    if (!tau_text.empty() && !calibrate.empty()) throw UsageError("give either --tau or --calibrate, not both");
    if (!tau_text.empty()) return parse_double(tau_text);
    if (calibrate.empty()) throw UsageError("one of --tau or --calibrate alpha,PATH is required");
    const auto comma = calibrate.find(',');
    if (comma == std::string::npos) throw UsageError("--calibrate expects alpha,PATH");
    const double alpha = parse_double(calibrate.substr(0, comma));
    const auto data = read_nonempty(calibrate.substr(comma + 1));
    return calibrate_threshold(model, alpha, data).tau;
}

struct FitArgs {
    std::string input, family = "gaussian", out, bench, progress;
    int k = 0;
    long batch = 256, buffer = 4096;
    double rho = 0.6;
    std::uint64_t seed = 0;
};

int run_fit(const FitArgs& a) {
    FitConfig cfg;
    cfg.k = a.k;
    cfg.family = parse_family(a.family);
    cfg.batch_size = a.batch;
    cfg.buffer_size = a.buffer;
    cfg.schedule.rho = a.rho;
    cfg.seed = a.seed;
    if (cfg.k < 1) throw UsageError("--k must be at least 1");
    if (cfg.batch_size < 1) throw UsageError("--batch must be at least 1");

    std::ofstream progress;
    if (!a.progress.empty()) {
        progress = open_out(a.progress);
        cfg.progress = [&](const ProgressRecord& r) {
            progress << r.step << ' ' << format_double(r.gamma) << ' ' << format_double(r.batch_loglik) << '\n';
        };
    }

    auto source = open_samples(a.input);
    CountingSource counting(*source);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = fit_stream(counting, cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_model(result.model, a.out);

    if (!a.bench.empty()) {
        BenchReport report;
        report.wall_time_s = wall;
        report.samples_per_second = static_cast<double>(result.samples_consumed) / std::max(wall, 1e-12);
        report.retained_state_bytes = result.retained_state_bytes;
        report.passes_over_data = counting.passes();
        report.peak_tracked_alloc_bytes = g_peak.load();
        open_out(a.bench) << to_json(report) << '\n';
    }
    std::cerr << "fit: " << result.samples_consumed << " samples, " << result.steps << " steps, "
              << result.skipped_updates << " skipped updates, " << result.reseeded_components
              << " reseeded components\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"omix: online EM for Gaussian and multiple scale t mixtures, with anomaly scoring"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* cmd_fit = app.add_subcommand("fit", "Fit a mixture in one pass over a sample stream");
    cmd_fit->add_option("--input", fit.input, "Samples (FVS1 or CSV)")->required();
    cmd_fit->add_option("--family", fit.family, "gaussian or mst")->capture_default_str();
    cmd_fit->add_option("--k", fit.k, "Number of components")->required();
    cmd_fit->add_option("--batch", fit.batch, "Mini-batch size")->capture_default_str();
    cmd_fit->add_option("--buffer", fit.buffer, "Initialization buffer size")->capture_default_str();
    cmd_fit->add_option("--rho", fit.rho, "Learning-rate exponent")->capture_default_str();
    cmd_fit->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
    cmd_fit->add_option("--out", fit.out, "Model file to write")->required();
    cmd_fit->add_option("--bench", fit.bench, "Write a JSON benchmark report here");
    cmd_fit->add_option("--progress", fit.progress, "Write one 'step gamma batch_ll' line per step here");

    std::string model_path, input_path, out_path, tau_text, calibrate_text;
    auto* cmd_score = app.add_subcommand("score", "Score samples and label them against a threshold");
    cmd_score->add_option("--model", model_path, "Model file")->required();
    cmd_score->add_option("--input", input_path, "Samples (FVS1 or CSV)")->required();
    cmd_score->add_option("--tau", tau_text, "Threshold (labels score < tau as abnormal)");
    cmd_score->add_option("--calibrate", calibrate_text, "alpha,PATH: calibrate tau on normal samples");
    cmd_score->add_option("--out", out_path, "Output: 'index score label' per line")->required();

    double alpha = 0.02;
    long n_sim = 0;
    std::uint64_t seed = 0;
    auto* cmd_cal = app.add_subcommand("calibrate", "Compute the alpha-quantile threshold");
    cmd_cal->add_option("--model", model_path, "Model file")->required();
    cmd_cal->add_option("--alpha", alpha, "Target false positive rate")->capture_default_str();
    cmd_cal->add_option("--input", input_path, "Held-out normal samples (empirical mode)");
    cmd_cal->add_option("--simulate", n_sim, "Draw this many samples from the model instead");
    cmd_cal->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd_cal->add_option("--out", out_path, "Write 'tau alpha mode n' here (stdout otherwise)");

    std::string labels_path;
    auto* cmd_sim = app.add_subcommand("simulate", "Draw samples from a model");
    cmd_sim->add_option("--model", model_path, "Model file")->required();
    cmd_sim->add_option("--n", n_sim, "Number of samples")->required();
    cmd_sim->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd_sim->add_option("--out", out_path, "Samples (.csv for CSV, FVS1 otherwise)")->required();
    cmd_sim->add_option("--labels", labels_path, "Write the generating component per sample here");

    int subjects = 10;
    long voxels = 1000;
    std::string amplitudes_text = "0,1,2", shift_text, dims_text = "0";
    double fraction = 0.1;
    std::string outdir;
    auto* cmd_cohort = app.add_subcommand("cohort", "Generate a synthetic multi-group cohort");
    cmd_cohort->add_option("--model", model_path, "Model file")->required();
    cmd_cohort->add_option("--subjects", subjects, "Subjects per group")->capture_default_str();
    cmd_cohort->add_option("--voxels", voxels, "Samples per subject")->capture_default_str();
    cmd_cohort->add_option("--amplitudes", amplitudes_text, "Anomaly amplitude per group")->capture_default_str();
    cmd_cohort->add_option("--fraction", fraction, "Share of anomalous samples")->capture_default_str();
    cmd_cohort->add_option("--shift", shift_text, "Shift per feature (default all ones)");
    cmd_cohort->add_option("--dims", dims_text, "Zero-based shifted features")->capture_default_str();
    cmd_cohort->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd_cohort->add_option("--outdir", outdir, "Directory for subject files and manifest.tsv")->required();

    std::string family_text = "gaussian", score_text = "training", curve_path;
    int k_min = 1, k_max = 6, restarts = 3, max_iters = 1000;
    double fit_fraction = 0.5;
    auto* cmd_sel = app.add_subcommand("select-k", "Choose K by the slope heuristic");
    cmd_sel->add_option("--input", input_path, "Samples (FVS1 or CSV)")->required();
    cmd_sel->add_option("--family", family_text, "gaussian or mst")->capture_default_str();
    cmd_sel->add_option("--k-min", k_min, "Smallest K")->capture_default_str();
    cmd_sel->add_option("--k-max", k_max, "Largest K")->capture_default_str();
    cmd_sel->add_option("--restarts", restarts, "k-means++ starts per K")->capture_default_str();
    cmd_sel->add_option("--max-iters", max_iters, "EM iterations per fit")->capture_default_str();
    cmd_sel->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd_sel->add_option("--score", score_text, "training or heldout")->capture_default_str();
    cmd_sel->add_option("--fit-fraction", fit_fraction, "Share of the K range used for the slope")
        ->capture_default_str();
    cmd_sel->add_option("--curve-out", curve_path, "Write the 'K penalty loglik' curve here");

    std::string manifest_path, control = "control", cutoff_text;
    auto* cmd_report = app.add_subcommand("report", "Per-subject abnormal fractions and g-mean");
    cmd_report->add_option("--model", model_path, "Model file")->required();
    cmd_report->add_option("--manifest", manifest_path, "TSV: subject_id group file [truth]")->required();
    cmd_report->add_option("--tau", tau_text, "Threshold (labels score < tau as abnormal)");
    cmd_report->add_option("--calibrate", calibrate_text, "alpha,PATH");
    cmd_report->add_option("--control", control, "Name of the control group")->capture_default_str();
    cmd_report->add_option("--cutoff", cutoff_text, "Fixed abnormal-fraction cutoff (default: maximize g-mean)");
    cmd_report->add_option("--out", out_path, "Per-subject table (stdout otherwise)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*cmd_fit) return run_fit(fit);

        if (*cmd_score) {
            const auto model = load_model(model_path);
            const double tau = resolve_tau(model, tau_text, calibrate_text);
            const auto data = read_nonempty(input_path);
            const auto scores = score_all(model, data);
            auto out = open_out(out_path);
            for (std::size_t i = 0; i < scores.size(); ++i) {
                out << i << ' ' << format_double(scores[i]) << ' ' << (scores[i] < tau ? 1 : 0) << '\n';
            }
            return 0;
        }

        if (*cmd_cal) {
            const auto model = load_model(model_path);
            Threshold t;
            if (!input_path.empty() && n_sim > 0) throw UsageError("give either --input or --simulate, not both");
            if (!input_path.empty()) {
                t = calibrate_threshold(model, alpha, read_nonempty(input_path));
            } else if (n_sim > 0) {
                t = calibrate_threshold(model, alpha, seed, n_sim);
            } else {
                throw UsageError("one of --input or --simulate N is required");
            }
            std::ostringstream line;
            line << format_double(t.tau) << ' ' << format_double(t.alpha) << ' '
                 << (t.mode == CalibrationMode::Empirical ? "empirical" : "simulated") << ' ' << t.n_used << '\n';
            if (out_path.empty()) {
                std::cout << line.str();
            } else {
                open_out(out_path) << line.str();
            }
            return 0;
        }

        if (*cmd_sim) {
            if (n_sim < 1) throw UsageError("--n must be at least 1");
            const auto model = load_model(model_path);
            const auto draws = sample_mixture(model, n_sim, seed);
            write_samples(out_path, draws.data);
            if (!labels_path.empty()) {
                auto out = open_out(labels_path);
                for (int c : draws.components) out << c << '\n';
            }
            return 0;
        }

        if (*cmd_cohort) {
            const auto model = load_model(model_path);
            AnomalySpec spec;
            spec.fraction = fraction;
            spec.shift = shift_text.empty() ? Vector::Ones(model.dim()) : Vector();
            if (!shift_text.empty()) {
                const auto v = parse_list(shift_text);
                spec.shift = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
            }
            for (double d : parse_list(dims_text)) spec.dims.push_back(static_cast<int>(d));
            const auto cohort = make_cohort(model, subjects, voxels, parse_list(amplitudes_text), spec, seed);
            std::filesystem::create_directories(outdir);
            auto manifest = open_out((std::filesystem::path(outdir) / "manifest.tsv").string());
            manifest << "subject_id\tgroup\tfile\ttruth\n";
            for (const auto& s : cohort.subjects) {
                const auto file = (std::filesystem::path(outdir) / (s.subject_id + ".fvs1")).string();
                const auto truth = (std::filesystem::path(outdir) / (s.subject_id + ".truth")).string();
                write_fvs1(file, s.data);
                auto t = open_out(truth);
                for (bool b : s.truth) t << (b ? 1 : 0) << '\n';
                manifest << s.subject_id << '\t' << s.group << '\t' << file << '\t' << truth << '\n';
            }
            return 0;
        }

        if (*cmd_sel) {
            if (k_min < 1 || k_max < k_min) throw UsageError("need 1 <= --k-min <= --k-max");
            SelectionConfig sc;
            sc.family = parse_family(family_text);
            sc.restarts = restarts;
            sc.em.max_iters = max_iters;
            sc.seed = seed;
            if (score_text == "training") {
                sc.score = SelectionScore::Training;
            } else if (score_text == "heldout") {
                sc.score = SelectionScore::Heldout;
            } else {
                throw UsageError("--score must be training or heldout");
            }
            std::vector<int> ks;
            for (int k = k_min; k <= k_max; ++k) ks.push_back(k);
            const auto data = read_nonempty(input_path);
            const auto curve = fit_k_range(data, ks, sc);
            if (!curve_path.empty()) open_out(curve_path) << serialize_curve(curve);
            const auto res = slope_heuristic(curve, fit_fraction);
            std::cout << "k_star " << res.k_star << "\nkappa " << format_double(res.kappa) << '\n';
            return 0;
        }

        if (*cmd_report) {
            const auto model = load_model(model_path);
            const double tau = resolve_tau(model, tau_text, calibrate_text);
            std::ifstream manifest(manifest_path);
            if (!manifest) throw DataError("cannot open " + manifest_path);
            std::vector<SubjectSummary> summaries;
            std::string line;
            while (std::getline(manifest, line)) {
                if (line.empty() || line.rfind("subject_id", 0) == 0 || line[0] == '#') continue;
                std::istringstream ls(line);
                std::string id, group, file;
                if (!(ls >> id >> group >> file)) throw FormatError("manifest row needs subject_id group file");
                const auto data = read_nonempty(file);
                summaries.push_back(aggregate_subject(label(score_all(model, data), tau), id, group));
            }
            const auto strategy = cutoff_text.empty() ? CutoffStrategy::MaximizeGmean : CutoffStrategy::Fixed;
            const double fixed = cutoff_text.empty() ? 0.0 : parse_double(cutoff_text);
            const auto cls = classify_subjects(summaries, strategy, control, fixed);

            std::ostringstream table;
            table << "subject_id group n_voxels n_abnormal fraction predicted\n";
            for (std::size_t i = 0; i < summaries.size(); ++i) {
                const auto& s = summaries[i];
                table << s.subject_id << ' ' << *s.group_label << ' ' << s.n_voxels << ' ' << s.n_abnormal << ' '
                      << format_double(s.fraction) << ' ' << (cls.labels[i] ? 1 : 0) << '\n';
            }
            if (out_path.empty()) {
                std::cout << table.str();
            } else {
                open_out(out_path) << table.str();
            }
            std::cout << "cutoff " << format_double(cls.cutoff) << "\ngmean " << format_double(cls.gmean) << '\n';
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
