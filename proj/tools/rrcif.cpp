// rrcif command-line front end: estimate, benchmark, sweep, synth.

#include <rrcif/rrcif.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace rrcif;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string num(double v) {
    char buf[64];
    const auto end = std::to_chars(buf, buf + sizeof(buf), v).ptr;
    return {buf, end};
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

std::string header_line(std::string_view method, std::optional<double> t) {
    std::string h = "# rrcif " RRCIF_VERSION " method=";
    h += method;
    h += " t=";
    h += t ? num(*t) : "-";
    return h + "\n";
}

nlohmann::json json_header(std::string_view method, std::optional<double> t) {
    return {{"tool", "rrcif"}, {"version", RRCIF_VERSION}, {"method", method}, {"t", t ? nlohmann::json(*t) : nlohmann::json()}};
}

/// Writes to `path`, or stdout when path is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
        file_ = detail::open_output(path);
        path_ = path;
    }
    std::ostream& stream() { return path_.empty() ? std::cout : static_cast<std::ostream&>(file_); }
    void close() {
        stream().flush();
        if (!stream()) throw IoError("write failed: '" + (path_.empty() ? std::string("stdout") : path_) + "'");
    }

private:
    std::ofstream file_;
    std::string path_;
};

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RRCIF_THREADS")) {
        std::size_t cap = 0;
        const std::string_view s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (ec != std::errc() || p != s.data() + s.size() || cap == 0) {
            throw UsageError("RRCIF_THREADS must be a positive integer, got '" + std::string(s) + "'");
        }
        n = std::min(n, cap);
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs fn(i) for i in [0, n) on a bounded pool.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
    };
    std::vector<std::jthread> pool;
    const std::size_t workers = worker_count(n);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
}

// ---------------------------------------------------------------------------
// Dataset discovery

struct SubjectSource {
    std::string id;
    fs::path record;
    std::optional<fs::path> reference;  // absent for JSON with embedded reference
};

struct Skipped {
    std::string file;
    std::string reason;
};

/// `<id>.json` with an embedded reference, or `<id>.ppg.csv` + `<id>.rr.csv`.
std::vector<SubjectSource> discover(const fs::path& dir, std::vector<Skipped>& skipped) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<SubjectSource> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path p = entry.path();
        const std::string name = p.filename().string();
        if (name.ends_with(".json")) {
            out.push_back({p.stem().string(), p, std::nullopt});
        } else if (name.ends_with(".ppg.csv")) {
            const std::string id = name.substr(0, name.size() - 8);
            const fs::path ref = dir / (id + ".rr.csv");
            if (fs::exists(ref)) {
                out.push_back({id, p, ref});
            } else {
                skipped.push_back({name, "missing reference " + ref.filename().string()});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

std::optional<Subject> load_subject(const SubjectSource& src, std::string& error) {
    try {
        Recording rec = read_recording(src.record);
        ReferenceRr ref;
        if (src.reference) {
            ref = read_reference(*src.reference);
        } else if (rec.reference) {
            ref = *rec.reference;
        } else {
            throw ValidationError("no reference in '" + src.record.filename().string() + "'");
        }
        ref.validate(rec.record.duration_s());
        RecordAnalysis analysis = analyze(rec.record);
        analysis.id = src.id;
        if (analysis.grid.size() == 0) throw InsufficientSignalError("record shorter than one analysis window");
        return Subject{std::move(analysis), std::move(ref)};
    } catch (const Error& e) {
        error = e.what();
        return std::nullopt;
    }
}

struct Dataset {
    std::vector<Subject> subjects;
    std::vector<Skipped> skipped;
};

Dataset load_dataset(const fs::path& dir) {
    Dataset d;
    const auto sources = discover(dir, d.skipped);
    std::vector<std::optional<Subject>> loaded(sources.size());
    std::vector<std::string> errors(sources.size());
    parallel_for(sources.size(), [&](std::size_t i) { loaded[i] = load_subject(sources[i], errors[i]); });
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (loaded[i]) {
            d.subjects.push_back(std::move(*loaded[i]));
        } else {
            d.skipped.push_back({sources[i].record.filename().string(), errors[i]});
        }
    }
    std::sort(d.skipped.begin(), d.skipped.end(), [](const auto& a, const auto& b) { return a.file < b.file; });
    for (const auto& s : d.skipped) std::cerr << "warning: skipping " << s.file << ": " << s.reason << "\n";
    if (d.subjects.empty()) throw IoError("no usable subjects in '" + dir.string() + "'");
    return d;
}

Method method_from(const std::string& name) {
    const auto m = parse_method(name);
    if (!m) throw UsageError("unknown method '" + name + "'");
    return *m;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
    std::string input;
    std::string method = "cif";
    double t = spectral_constants::kDefaultThreshold;
    std::string out;
    std::string dump_beats;
    std::string dump_riv;
    std::vector<std::string> dump_spectrum;
};

void dump_beats(const RecordAnalysis& a, const std::string& path, std::string_view method, double t) {
    Output o(path);
    auto& s = o.stream();
    s << header_line(method, t) << "t_foot,v_foot,t_peak,v_peak,width50,rise25_75,period,artifact\n";
    for (const auto& b : a.beats) {
        s << num(b.t_foot) << ',' << num(b.v_foot) << ',' << num(b.t_peak) << ',' << num(b.v_peak) << ','
          << num(b.width50) << ',' << num(b.rise25_75) << ',' << opt_num(b.period) << ',' << (b.artifact ? 1 : 0)
          << '\n';
    }
    o.close();
}

void dump_rivs(const RecordAnalysis& a, const fs::path& dir, std::string_view method, double t) {
    fs::create_directories(dir);
    for (RivKind k : kAllRivKinds) {
        const auto& series = a.rivs[index_of(k)];
        if (!series) continue;
        Output o((dir / (std::string(to_string(k)) + ".csv")).string());
        auto& s = o.stream();
        s << header_line(method, t) << "t,value,artifact\n";
        for (std::size_t i = 0; i < series->size(); ++i) {
            s << num(series->time_at(i)) << ',' << num(series->values[i]) << ','
              << (series->artifact_mask[i] ? 1 : 0) << '\n';
        }
        o.close();
    }
}

void dump_spectrum(const RecordAnalysis& a, const std::vector<std::string>& args, const std::string& out,
                   std::string_view method, double t) {
    std::size_t w = 0;
    const auto [p, ec] = std::from_chars(args[0].data(), args[0].data() + args[0].size(), w);
    if (ec != std::errc() || p != args[0].data() + args[0].size()) {
        throw UsageError("--dump-spectrum: window index must be a non-negative integer");
    }
    const auto kind = parse_riv_kind(args[1]);
    if (!kind) throw UsageError("--dump-spectrum: unknown variation '" + args[1] + "'");
    if (w >= a.grid.size()) {
        throw UsageError("--dump-spectrum: window " + args[0] + " out of range (" + std::to_string(a.grid.size()) +
                         " windows)");
    }
    const auto spectrum = spectrum_for(a, w, *kind);
    const fs::path dir = (out.empty() || out == "-") ? fs::path(".") : fs::path(out).parent_path();
    Output o((dir / ("spectrum_" + args[0] + "_" + args[1] + ".csv")).string());
    auto& s = o.stream();
    s << header_line(method, t) << "f,P,P_fit,P_out\n";
    if (spectrum) {
        for (std::size_t i = 0; i < spectrum->freqs.size(); ++i) {
            s << num(spectrum->freqs[i]) << ',' << num(spectrum->power[i]) << ',' << num(spectrum->fit[i]) << ','
              << num(spectrum->out[i]) << '\n';
        }
    }
    o.close();
}

int cmd_estimate(const EstimateArgs& args) {
    const Method method = method_from(args.method);
    const Recording rec = read_recording(args.input);
    const RecordAnalysis a = analyze(rec.record);
    const auto name = to_string(method);

    if (!args.dump_beats.empty()) dump_beats(a, args.dump_beats, name, args.t);
    if (!args.dump_riv.empty()) dump_rivs(a, args.dump_riv, name, args.t);
    if (!args.dump_spectrum.empty()) dump_spectrum(a, args.dump_spectrum, args.out, name, args.t);

    Output o(args.out);
    auto& s = o.stream();
    s << header_line(name, args.t) << "window_start_s,rr_fusion,c_fusion,retained,contributors\n";
    for (const auto& f : fuse_all(a, method, args.t)) {
        std::string contributors;
        for (RivKind k : f.contributors) {
            if (!contributors.empty()) contributors += ';';
            contributors += to_string(k);
        }
        s << num(a.grid.windows[f.window_index].start_s) << ',' << opt_num(f.rr_fusion) << ','
          << opt_num(f.c_fusion) << ',' << (f.retained ? 1 : 0) << ',' << contributors << '\n';
    }
    o.close();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkArgs {
    std::string dir;
    std::vector<std::string> methods{"cif", "sf3", "sf5"};
    double t = spectral_constants::kDefaultThreshold;
    std::string out = "rrcif_benchmark";
};

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json agreement_json(const std::vector<EstimatePair>& pairs) {
    if (pairs.size() < 2) return nullptr;
    const auto a = agreement_stats(pairs);
    return {{"r", optional_json(a.r)},
            {"bias", a.bias},
            {"loa_low", a.loa_low},
            {"loa_high", a.loa_high},
            {"n_pairs", a.n_pairs}};
}

/// Paired Wilcoxon p over subjects where both methods have the metric.
std::optional<double> paired_p(const std::vector<SubjectResult>& a, const std::vector<SubjectResult>& b, bool rmse) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (rmse) {
            if (!a[i].rmse || !b[i].rmse) continue;
            x.push_back(*a[i].rmse);
            y.push_back(*b[i].rmse);
        } else {
            x.push_back(a[i].retention);
            y.push_back(b[i].retention);
        }
    }
    if (x.size() < 6) return std::nullopt;
    return wilcoxon_signed_rank(x, y);
}

int cmd_benchmark(const BenchmarkArgs& args) {
    std::vector<Method> methods;
    for (const auto& m : args.methods) {
        const Method parsed = method_from(m);
        if (std::find(methods.begin(), methods.end(), parsed) == methods.end()) methods.push_back(parsed);
    }
    const Dataset d = load_dataset(args.dir);
    std::string method_names;
    for (Method m : methods) method_names += (method_names.empty() ? "" : ",") + std::string(to_string(m));

    std::vector<std::vector<SubjectResult>> results(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        results[m].resize(d.subjects.size());
        parallel_for(d.subjects.size(),
                     [&](std::size_t i) { results[m][i] = evaluate_subject(d.subjects[i], methods[m], args.t); });
    }

    fs::create_directories(args.out);
    Output csv((fs::path(args.out) / "subjects.csv").string());
    auto& s = csv.stream();
    s << header_line(method_names, args.t) << "id,method,t,rmse,retention\n";
    for (std::size_t i = 0; i < d.subjects.size(); ++i) {
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const auto& r = results[m][i];
            s << r.id << ',' << to_string(r.method) << ',' << num(r.t) << ',' << opt_num(r.rmse) << ','
              << num(r.retention) << '\n';
        }
    }
    csv.close();

    nlohmann::json report;
    report["generator"] = json_header(method_names, args.t);
    report["n_subjects"] = d.subjects.size();
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json agreement = nlohmann::json::object();
    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<double> rmses, retentions;
        std::vector<EstimatePair> pooled;
        for (const auto& r : results[m]) {
            if (r.rmse) rmses.push_back(*r.rmse);
            retentions.push_back(r.retention);
            pooled.insert(pooled.end(), r.pairs.begin(), r.pairs.end());
        }
        const std::string name(to_string(methods[m]));
        summary[name] = {{"rmse_median", rmses.empty() ? nlohmann::json() : nlohmann::json(median(rmses))},
                         {"retention_median", median(retentions)},
                         {"subjects_with_rmse", rmses.size()}};
        agreement[name] = agreement_json(pooled);
    }
    report["summary"] = summary;
    report["agreement"] = agreement;

    nlohmann::json tests = nlohmann::json::array();
    const std::size_t comparisons = methods.size() * (methods.size() - 1) / 2;
    for (std::size_t a = 0; a < methods.size(); ++a) {
        for (std::size_t b = a + 1; b < methods.size(); ++b) {
            for (const bool rmse : {true, false}) {
                const auto p = paired_p(results[a], results[b], rmse);
                tests.push_back({{"a", to_string(methods[a])},
                                 {"b", to_string(methods[b])},
                                 {"metric", rmse ? "rmse" : "retention"},
                                 {"p", optional_json(p)},
                                 {"p_bonferroni",
                                  p ? nlohmann::json(std::min(1.0, *p * static_cast<double>(comparisons)))
                                    : nlohmann::json()}});
            }
        }
    }
    report["wilcoxon"] = tests;
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& k : d.skipped) skipped.push_back({{"file", k.file}, {"reason", k.reason}});
    report["skipped"] = skipped;

    Output json((fs::path(args.out) / "report.json").string());
    json.stream() << report.dump(2) << '\n';
    json.close();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    std::string dir;
    std::string method = "cif";
    double t_min = 0.0;
    double t_max = 0.3;
    double t_step = 0.01;
    std::string out;
};

int cmd_sweep(const SweepArgs& args) {
    if (args.t_min > args.t_max) throw UsageError("--t-min must not exceed --t-max");
    if (!(args.t_step > 0.0)) throw UsageError("--t-step must be positive");
    const Method method = method_from(args.method);
    const auto grid = threshold_grid(args.t_min, args.t_max, args.t_step);
    const Dataset d = load_dataset(args.dir);

    std::vector<std::vector<SubjectResult>> per_t(grid.size(), std::vector<SubjectResult>(d.subjects.size()));
    parallel_for(d.subjects.size(), [&](std::size_t i) {
        for (std::size_t k = 0; k < grid.size(); ++k) per_t[k][i] = evaluate_subject(d.subjects[i], method, grid[k]);
    });

    Output o(args.out);
    auto& s = o.stream();
    s << header_line(to_string(method), std::nullopt) << "t,rmse_p25,rmse_median,rmse_p75,retention_median\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
        std::vector<double> rmses, retentions;
        for (const auto& r : per_t[k]) {
            if (r.rmse) rmses.push_back(*r.rmse);
            retentions.push_back(r.retention);
        }
        s << num(grid[k]) << ',';
        if (rmses.empty()) {
            s << ",,,";
        } else {
            s << num(percentile(rmses, 0.25)) << ',' << num(percentile(rmses, 0.5)) << ','
              << num(percentile(rmses, 0.75)) << ',';
        }
        s << num(median(retentions)) << '\n';
    }
    o.close();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    SynthSpec spec;
    std::optional<double> depth;
    std::string format = "csv";
    std::string out = ".";
};

int cmd_synth(SynthArgs args) {
    if (args.depth) args.spec.depths = ModulationDepths::all(*args.depth);
    const auto [record, reference] = synthesize(args.spec);
    const fs::path dir(args.out);
    fs::create_directories(dir);
    if (args.format == "json") {
        auto doc = recording_to_json(record, &reference);
        doc["generator"] = json_header("synth", std::nullopt);
        Output o((dir / (args.spec.id + ".json")).string());
        o.stream() << doc.dump() << '\n';
        o.close();
    } else {
        const std::string header = header_line("synth", std::nullopt);
        Output ppg((dir / (args.spec.id + ".ppg.csv")).string());
        ppg.stream() << header;
        write_record_csv(ppg.stream(), record);
        ppg.close();
        Output rr((dir / (args.spec.id + ".rr.csv")).string());
        rr.stream() << header;
        write_reference_csv(rr.stream(), reference);
        rr.close();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Respiratory rate from PPG by covariance intersection fusion of respiratory-induced variations"};
    app.set_version_flag("--version", RRCIF_VERSION);
    app.require_subcommand(1);

    const auto methods = CLI::IsMember({"cif", "sf3", "sf5"});

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Per-window respiratory rate for one recording");
    estimate->add_option("input", est.input, "PPG CSV (t,ppg) or JSON recording")->required();
    estimate->add_option("--method", est.method, "Fusion method")->check(methods)->capture_default_str();
    estimate->add_option("--t", est.t, "Noise-index threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    estimate->add_option("--out", est.out, "Output CSV (default stdout)");
    estimate->add_option("--dump-beats", est.dump_beats, "Write detected beats to this CSV");
    estimate->add_option("--dump-riv", est.dump_riv, "Write each variation series to <dir>/<KIND>.csv");
    estimate->add_option("--dump-spectrum", est.dump_spectrum, "Write the spectrum of window <w> and variation <kind>")
        ->expected(2)
        ->type_name("<w> <kind>");

    BenchmarkArgs bench;
    auto* benchmark = app.add_subcommand("benchmark", "Per-subject and aggregate scores over a dataset directory");
    benchmark->add_option("dataset", bench.dir, "Directory of <id>.ppg.csv + <id>.rr.csv or <id>.json")->required();
    benchmark->add_option("--method", bench.methods, "Methods to compare")->check(methods)->capture_default_str();
    benchmark->add_option("--t", bench.t, "Noise-index threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    benchmark->add_option("--out", bench.out, "Output directory")->capture_default_str();

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "RMSE quartiles and retention over a threshold range");
    sweep_cmd->add_option("dataset", sw.dir, "Dataset directory")->required();
    sweep_cmd->add_option("--method", sw.method, "Fusion method")->check(methods)->capture_default_str();
    sweep_cmd->add_option("--t-min", sw.t_min)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sweep_cmd->add_option("--t-max", sw.t_max)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sweep_cmd->add_option("--t-step", sw.t_step)->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_option("--out", sw.out, "Output CSV (default stdout)");

    SynthArgs syn;
    auto* synth = app.add_subcommand("synth", "Write a synthetic PPG recording and its reference");
    synth->add_option("--rr", syn.spec.rr, "Respiratory rate, breaths/min")->capture_default_str();
    synth->add_option("--hr", syn.spec.hr, "Heart rate, beats/min")->capture_default_str();
    synth->add_option("--duration", syn.spec.duration_s, "Seconds")->capture_default_str();
    synth->add_option("--fs", syn.spec.fs, "Sampling rate, Hz")->capture_default_str();
    synth->add_option("--depth", syn.depth, "All five modulation depths");
    synth->add_option("--depth-intensity", syn.spec.depths.intensity);
    synth->add_option("--depth-amplitude", syn.spec.depths.amplitude);
    synth->add_option("--depth-frequency", syn.spec.depths.frequency);
    synth->add_option("--depth-width", syn.spec.depths.width);
    synth->add_option("--depth-slope", syn.spec.depths.slope);
    synth->add_option("--noise", syn.spec.noise_sd, "Gaussian noise SD")->capture_default_str();
    synth->add_option("--seed", syn.spec.seed)->capture_default_str();
    synth->add_option("--id", syn.spec.id)->capture_default_str();
    synth->add_option("--format", syn.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    synth->add_option("--out", syn.out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*estimate) return cmd_estimate(est);
        if (*benchmark) return cmd_benchmark(bench);
        if (*sweep_cmd) return cmd_sweep(sw);
        if (*synth) return cmd_synth(syn);
    } catch (const UsageError& e) {
        std::cerr << "rrcif: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::cerr << "rrcif: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "rrcif: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "rrcif: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
