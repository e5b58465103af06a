#pragma once

// End-to-end chain for one recording: band-pass, beats, RIVs, windowed
// estimates. Fusion at a given threshold is a cheap second step so a
// threshold sweep reuses the spectral work.

#include <rrcif/fusion.hpp>
#include <rrcif/preprocess.hpp>
#include <rrcif/riv.hpp>
#include <rrcif/signal_io.hpp>
#include <rrcif/spectral.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rrcif {

enum class Method { cif, sf3, sf5 };

inline constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::cif: return "cif";
        case Method::sf3: return "sf3";
        case Method::sf5: return "sf5";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) noexcept {
    for (Method m : {Method::cif, Method::sf3, Method::sf5}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

struct RecordAnalysis {
    std::string id;
    double duration_s = 0.0;
    std::vector<Beat> beats;
    std::array<std::optional<RivSeries>, 5> rivs;  // absent when a kind had too few beats
    WindowGrid grid;
    /// estimates[w][index_of(kind)]
    std::vector<std::array<WindowEstimate, 5>> estimates;
};

/// Runs every stage up to the ungated per-window estimates. Windows that a
/// variation cannot cover are reported as artifact-skipped for that kind.
inline RecordAnalysis analyze(const PpgRecord& record) {
    RecordAnalysis a;
    a.id = record.id();
    a.duration_s = record.duration_s();
    const PpgRecord filtered = bandpass(record);
    a.beats = flag_artifacts(segment_beats(filtered, &record));
    for (RivKind kind : kAllRivKinds) {
        try {
            a.rivs[index_of(kind)] = extract(a.beats, kind, a.duration_s);
        } catch (const InsufficientSignalError&) {
        }
    }
    a.grid = WindowGrid::for_duration(a.duration_s);
    a.estimates.resize(a.grid.size());
    for (std::size_t w = 0; w < a.grid.size(); ++w) {
        for (RivKind kind : kAllRivKinds) {
            WindowEstimate& e = a.estimates[w][index_of(kind)];
            e.kind = kind;
            e.window_index = w;
            e.artifact = true;
            const auto& series = a.rivs[index_of(kind)];
            if (!series) continue;
            try {
                e = estimate_window(*series, a.grid.windows[w], w);
            } catch (const BoundsError&) {
            }
        }
    }
    return a;
}

inline FusionResult fuse(const std::array<WindowEstimate, 5>& cell, Method method, double t, std::size_t window_index) {
    switch (method) {
        case Method::cif: return fuse_window(std::span<const WindowEstimate>(cell), t, window_index);
        case Method::sf3: return smart_fusion(std::span<const WindowEstimate>(cell), SfConfig::sf3(), window_index);
        case Method::sf5: return smart_fusion(std::span<const WindowEstimate>(cell), SfConfig::sf5(), window_index);
    }
    return {};
}

/// One FusionResult per window of the analysis grid.
inline std::vector<FusionResult> fuse_all(const RecordAnalysis& a, Method method, double t) {
    check_threshold(t);
    std::vector<FusionResult> out;
    out.reserve(a.estimates.size());
    for (std::size_t w = 0; w < a.estimates.size(); ++w) out.push_back(fuse(a.estimates[w], method, t, w));
    return out;
}

/// Fitted spectrum of one (window, kind) cell, or nullopt when the window
/// is artifact-skipped or the variation is unavailable.
inline std::optional<PowerSpectrum> spectrum_for(const RecordAnalysis& a, std::size_t window_index, RivKind kind) {
    if (window_index >= a.grid.size()) throw BoundsError("window index out of range");
    const auto& series = a.rivs[index_of(kind)];
    if (!series) return std::nullopt;
    auto s = window_spectrum(*series, a.grid.windows[window_index]);
    if (std::holds_alternative<ArtifactSkip>(s)) return std::nullopt;
    return fit_power_law(std::get<PowerSpectrum>(std::move(s)));
}

}  // namespace rrcif
