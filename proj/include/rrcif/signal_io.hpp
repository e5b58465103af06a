#pragma once

// PPG record and reference-rate ingestion, serialization, and the
// deterministic synthetic PPG generator used as ground truth in tests.
//
// File formats
//   PPG CSV        header `t,ppg`; t in seconds, strictly increasing with a
//                  uniform step (tolerance 1e-6 of the step)
//   Reference CSV  header `t,rr`; seconds and breaths/min
//   Record JSON    {"id", "fs", "samples": [...], "reference": {"t": [...], "rr": [...]}}
// Lines starting with '#' and blank lines are ignored by the CSV readers.

#include <rrcif/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rrcif {

/// Uniformly sampled PPG waveform.
class PpgRecord {
public:
    PpgRecord() = default;

    /// Throws ValidationError unless fs > 0 and samples is nonempty and finite.
    PpgRecord(std::string id, double fs, std::vector<double> samples)
        : id_(std::move(id)), fs_(fs), samples_(std::move(samples)) {
        if (!(fs_ > 0.0) || !std::isfinite(fs_)) {
            throw ValidationError("record '" + id_ + "': sampling rate must be > 0");
        }
        if (samples_.empty()) {
            throw ValidationError("record '" + id_ + "': no samples");
        }
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            if (!std::isfinite(samples_[i])) {
                throw ValidationError("record '" + id_ + "': non-finite sample at index " +
                                      std::to_string(i));
            }
        }
    }

    const std::string& id() const noexcept { return id_; }
    double fs() const noexcept { return fs_; }
    const std::vector<double>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    double duration_s() const noexcept { return static_cast<double>(samples_.size()) / fs_; }
    double time_at(std::size_t i) const noexcept { return static_cast<double>(i) / fs_; }

    /// Same id and rate, new sample values.
    PpgRecord with_samples(std::vector<double> samples) const {
        return PpgRecord(id_, fs_, std::move(samples));
    }

private:
    std::string id_;
    double fs_ = 1.0;
    std::vector<double> samples_;
};

/// Reference respiratory rate annotations (breaths/min) at timestamps (s).
struct ReferenceRr {
    std::vector<double> times_s;
    std::vector<double> rr;

    std::size_t size() const noexcept { return rr.size(); }

    /// Checks lengths, ordering and the physiological range (0, 120).
    /// When `duration_s` is given, timestamps must also lie within [0, duration].
    void validate(std::optional<double> duration_s = std::nullopt) const {
        if (times_s.size() != rr.size()) {
            throw ValidationError("reference: t and rr lengths differ");
        }
        if (rr.empty()) {
            throw ValidationError("reference: no rows");
        }
        for (std::size_t i = 0; i < rr.size(); ++i) {
            if (!std::isfinite(times_s[i]) || !std::isfinite(rr[i])) {
                throw ValidationError("reference: non-finite value at row " + std::to_string(i + 1));
            }
            if (!(rr[i] > 0.0 && rr[i] < 120.0)) {
                throw ValidationError("reference: rr out of range (0, 120) at row " +
                                      std::to_string(i + 1));
            }
            if (i > 0 && times_s[i] < times_s[i - 1]) {
                throw ValidationError("reference: decreasing timestamp at row " + std::to_string(i + 1));
            }
            if (duration_s && (times_s[i] < 0.0 || times_s[i] > *duration_s)) {
                throw ValidationError("reference: timestamp outside recording at row " +
                                      std::to_string(i + 1));
            }
        }
    }
};

/// A record with its optional reference annotations.
struct Recording {
    PpgRecord record;
    std::optional<ReferenceRr> reference;
};

enum class RecordFormat { csv, json };

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_number(std::string_view field, std::size_t line, std::string_view name) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("line " + std::to_string(line) + ": field '" + std::string(name) +
                         "' is not a number: '" + std::string(field) + "'");
    }
    return value;
}

/// Reads a two-column CSV with the given header, skipping comments and blank lines.
inline std::pair<std::vector<double>, std::vector<double>> read_two_columns(std::istream& in,
                                                                            std::string_view col0,
                                                                            std::string_view col1) {
    std::vector<double> a;
    std::vector<double> b;
    std::string raw;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected exactly 2 fields");
        }
        const auto f0 = trim(line.substr(0, comma));
        const auto f1 = trim(line.substr(comma + 1));
        if (!have_header) {
            if (f0 != col0 || f1 != col1) {
                throw ParseError("line " + std::to_string(line_no) + ": expected header '" +
                                 std::string(col0) + "," + std::string(col1) + "'");
            }
            have_header = true;
            continue;
        }
        a.push_back(parse_number(f0, line_no, col0));
        b.push_back(parse_number(f1, line_no, col1));
    }
    if (!have_header) {
        throw ParseError("line " + std::to_string(line_no) + ": missing header '" + std::string(col0) +
                         "," + std::string(col1) + "'");
    }
    return {std::move(a), std::move(b)};
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.precision(17);
    return out;
}

/// Record id from a file name: stem with a trailing ".ppg" removed.
inline std::string id_from_path(const std::filesystem::path& path) {
    std::string stem = path.stem().string();
    if (stem.ends_with(".ppg")) stem.resize(stem.size() - 4);
    return stem;
}

}  // namespace detail

/// Parses a `t,ppg` CSV stream. The sampling rate is derived from the time column.
inline PpgRecord parse_record_csv(std::istream& in, std::string id) {
    auto [t, ppg] = detail::read_two_columns(in, "t", "ppg");
    if (t.size() < 2) {
        throw ValidationError("record '" + id + "': at least 2 rows are required to derive fs");
    }
    const double step = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    if (!(step > 0.0)) {
        throw ValidationError("record '" + id + "': time column must be strictly increasing");
    }
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double d = t[i] - t[i - 1];
        if (!(d > 0.0)) {
            throw ValidationError("record '" + id + "': time not strictly increasing at data row " +
                                  std::to_string(i + 1));
        }
        if (std::abs(d - step) > 1e-6 * step) {
            throw ValidationError("record '" + id + "': non-uniform time step at data row " +
                                  std::to_string(i + 1));
        }
    }
    return PpgRecord(std::move(id), 1.0 / step, std::move(ppg));
}

inline ReferenceRr parse_reference_csv(std::istream& in) {
    auto [t, rr] = detail::read_two_columns(in, "t", "rr");
    ReferenceRr ref{std::move(t), std::move(rr)};
    ref.validate();
    return ref;
}

/// Parses the record JSON object, including its optional `reference` member.
inline Recording parse_recording_json(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("json: ") + e.what());
    }
    auto field = [&](const nlohmann::json& obj, const char* name) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(name)) {
            throw ParseError(std::string("json: missing field '") + name + "'");
        }
        return obj.at(name);
    };
    auto numbers = [&](const nlohmann::json& arr, const char* name) {
        if (!arr.is_array()) throw ParseError(std::string("json: field '") + name + "' must be an array");
        std::vector<double> out;
        out.reserve(arr.size());
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_number()) {
                throw ParseError(std::string("json: field '") + name + "[" + std::to_string(i) +
                                 "]' is not a number");
            }
            out.push_back(arr[i].get<double>());
        }
        return out;
    };
    const auto& id = field(doc, "id");
    const auto& fs = field(doc, "fs");
    if (!id.is_string()) throw ParseError("json: field 'id' must be a string");
    if (!fs.is_number()) throw ParseError("json: field 'fs' must be a number");
    Recording out{PpgRecord(id.get<std::string>(), fs.get<double>(), numbers(field(doc, "samples"), "samples")),
                  std::nullopt};
    if (doc.contains("reference") && !doc.at("reference").is_null()) {
        const auto& ref = doc.at("reference");
        ReferenceRr r{numbers(field(ref, "t"), "reference.t"), numbers(field(ref, "rr"), "reference.rr")};
        r.validate(out.record.duration_s());
        out.reference = std::move(r);
    }
    return out;
}

inline PpgRecord read_record(const std::filesystem::path& path, RecordFormat format) {
    auto in = detail::open_input(path);
    if (format == RecordFormat::json) return parse_recording_json(in).record;
    return parse_record_csv(in, detail::id_from_path(path));
}

/// Format picked from the extension (.json, anything else is CSV).
inline Recording read_recording(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    if (path.extension() == ".json") return parse_recording_json(in);
    return Recording{parse_record_csv(in, detail::id_from_path(path)), std::nullopt};
}

inline ReferenceRr read_reference(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return parse_reference_csv(in);
}

inline void write_record_csv(std::ostream& out, const PpgRecord& record) {
    out << "t,ppg\n";
    char buf[64];
    for (std::size_t i = 0; i < record.size(); ++i) {
        auto* end = std::to_chars(buf, buf + sizeof(buf), record.time_at(i)).ptr;
        *end++ = ',';
        end = std::to_chars(end, buf + sizeof(buf), record.samples()[i]).ptr;
        *end++ = '\n';
        out.write(buf, end - buf);
    }
}

inline void write_reference_csv(std::ostream& out, const ReferenceRr& ref) {
    out << "t,rr\n";
    char buf[64];
    for (std::size_t i = 0; i < ref.size(); ++i) {
        auto* end = std::to_chars(buf, buf + sizeof(buf), ref.times_s[i]).ptr;
        *end++ = ',';
        end = std::to_chars(end, buf + sizeof(buf), ref.rr[i]).ptr;
        *end++ = '\n';
        out.write(buf, end - buf);
    }
}

inline nlohmann::json recording_to_json(const PpgRecord& record, const ReferenceRr* reference = nullptr) {
    nlohmann::json doc;
    doc["id"] = record.id();
    doc["fs"] = record.fs();
    doc["samples"] = record.samples();
    if (reference) doc["reference"] = {{"t", reference->times_s}, {"rr", reference->rr}};
    return doc;
}

inline void write_record(const PpgRecord& record, const std::filesystem::path& path,
                         RecordFormat format = RecordFormat::csv, const ReferenceRr* reference = nullptr) {
    auto out = detail::open_output(path);
    if (format == RecordFormat::json) {
        out << recording_to_json(record, reference).dump() << '\n';
    } else {
        write_record_csv(out, record);
    }
    if (!out) throw IoError("write failed: '" + path.string() + "'");
}

inline void write_reference(const ReferenceRr& ref, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    write_reference_csv(out, ref);
    if (!out) throw IoError("write failed: '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthetic PPG
// ---------------------------------------------------------------------------

/// Relative modulation depths of the five respiratory-induced variations.
struct ModulationDepths {
    double intensity = 0.0;  ///< baseline offset, in units of pulse amplitude
    double amplitude = 0.0;  ///< pulse amplitude
    double frequency = 0.0;  ///< instantaneous heart rate
    double width = 0.0;      ///< decay time constant
    double slope = 0.0;      ///< upstroke duration

    static constexpr ModulationDepths all(double d) { return {d, d, d, d, d}; }
};

struct SynthSpec {
    double rr = 15.0;          ///< breaths/min
    double hr = 75.0;          ///< beats/min
    double duration_s = 480.0;
    double fs = 100.0;
    ModulationDepths depths{};
    double noise_sd = 0.0;     ///< relative to the nominal pulse amplitude of 1
    std::uint64_t seed = 1;
    std::string id = "synth";

    void validate() const {
        if (!(rr >= 4.0 && rr <= 65.0)) throw ParameterError("synth: rr must lie in [4, 65]");
        if (!(hr > 2.0 * rr)) throw ParameterError("synth: hr must exceed 2*rr");
        if (!(duration_s > 0.0) || !(fs > 0.0)) throw ParameterError("synth: duration and fs must be > 0");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ParameterError("synth: noise_sd must be >= 0");
        for (double d : {depths.intensity, depths.amplitude, depths.frequency, depths.width, depths.slope}) {
            if (!(d >= 0.0 && d <= 1.0)) throw ParameterError("synth: modulation depths must lie in [0, 1]");
        }
        if (depths.frequency >= 1.0) throw ParameterError("synth: frequency depth must be < 1");
    }
};

/// Standard normal deviates from mt19937_64 via the Box-Muller transform.
/// Uniforms take the top 53 bits of each draw, so a given seed produces the
/// same sequence with any conforming standard library.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (cached_) {
            cached_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        cached_ = true;
        return radius * std::cos(angle);
    }

private:
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool cached_ = false;
};

/// Builds a pulse train whose baseline, amplitude, beat period, width and
/// upstroke duration are sinusoidally modulated at rr/60 Hz.
///
/// Each pulse is a raised-cosine upstroke lasting 0.3 of the nominal beat
/// period followed by an exponential decay with time constant 0.2 of the
/// nominal period; overlapping tails add. Pulse peaks solve
/// phase(t) = k where phase integrates hr(t)/60, and every per-beat
/// modulation uses sin(2 pi rr/60 t_peak). The reference is the constant
/// spec.rr every 2 s.
inline std::pair<PpgRecord, ReferenceRr> synthesize(const SynthSpec& spec) {
    spec.validate();
    const double two_pi = 2.0 * std::numbers::pi;
    const double fr = spec.rr / 60.0;
    const double wr = two_pi * fr;
    const double beat_rate = spec.hr / 60.0;
    const double nominal_period = 1.0 / beat_rate;
    const double d_f = spec.depths.frequency;

    // phase(t) = beat_rate * (t - d_f/wr * (cos(wr t) - 1)), strictly increasing for d_f < 1.
    auto phase = [&](double t) { return beat_rate * (t - d_f / wr * (std::cos(wr * t) - 1.0)); };
    auto phase_rate = [&](double t) { return beat_rate * (1.0 + d_f * std::sin(wr * t)); };

    // Peak times sit on the phase grid so that only the frequency depth moves
    // them; the upstroke starts `rise` earlier.
    std::vector<double> peaks;
    double t = 0.0;
    for (int k = 0;; ++k) {
        for (int it = 0; it < 50; ++it) {
            const double step = (phase(t) - k) / phase_rate(t);
            t -= step;
            if (std::abs(step) < 1e-13) break;
        }
        if (t > spec.duration_s + nominal_period) break;
        peaks.push_back(t);
        t += nominal_period;
    }

    const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
    std::vector<double> x(n, 0.0);
    const double rise0 = 0.3 * nominal_period;
    const double decay0 = 0.2 * nominal_period;
    for (double peak : peaks) {
        const double s = std::sin(wr * peak);
        const double amp = 1.0 + spec.depths.amplitude * s;
        const double rise = rise0 * (1.0 + spec.depths.slope * s);
        const double decay = decay0 * (1.0 + spec.depths.width * s);
        const double onset = peak - rise;
        const double end = peak + 12.0 * decay;
        auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(onset * spec.fs)));
        for (std::size_t i = first; i < n; ++i) {
            const double ti = static_cast<double>(i) / spec.fs;
            if (ti > end) break;
            const double tau = ti - onset;
            const double g = tau < rise ? 0.5 * (1.0 - std::cos(std::numbers::pi * tau / rise))
                                        : std::exp(-(tau - rise) / decay);
            x[i] += amp * g;
        }
    }

    GaussianSource noise(spec.seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / spec.fs;
        x[i] += spec.depths.intensity * std::sin(wr * ti);
        if (spec.noise_sd > 0.0) x[i] += spec.noise_sd * noise();
    }

    PpgRecord record(spec.id, spec.fs, std::move(x));
    ReferenceRr ref;
    for (double tr = 0.0; tr <= record.duration_s() + 1e-9; tr += 2.0) {
        ref.times_s.push_back(std::min(tr, record.duration_s()));
        ref.rr.push_back(spec.rr);
    }
    return {std::move(record), std::move(ref)};
}

}  // namespace rrcif
