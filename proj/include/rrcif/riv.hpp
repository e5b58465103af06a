#pragma once

// Respiratory-induced variation series derived from the beat sequence.

#include <rrcif/error.hpp>
#include <rrcif/preprocess.hpp>

#include <algorithm>
#include <array>
#include <limits>
#include <span>
#include <string>
#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

namespace rrcif {

enum class RivKind { RIIV, RIAV, RIFV, RIWV, RISV };

inline constexpr std::array<RivKind, 5> kAllRivKinds{RivKind::RIIV, RivKind::RIAV, RivKind::RIFV, RivKind::RIWV,
                                                     RivKind::RISV};

inline constexpr std::size_t index_of(RivKind kind) noexcept { return static_cast<std::size_t>(kind); }

inline constexpr std::string_view to_string(RivKind kind) noexcept {
    switch (kind) {
        case RivKind::RIIV: return "RIIV";
        case RivKind::RIAV: return "RIAV";
        case RivKind::RIFV: return "RIFV";
        case RivKind::RIWV: return "RIWV";
        case RivKind::RISV: return "RISV";
    }
    return "?";
}

inline std::optional<RivKind> parse_riv_kind(std::string_view name) noexcept {
    for (RivKind k : kAllRivKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

inline constexpr double kRivRate = 5.0;  // Hz
inline constexpr double kRivStep = 1.0 / kRivRate;

/// One variation resampled to the uniform 5 Hz grid t0 + i * 0.2 s.
struct RivSeries {
    RivKind kind = RivKind::RIIV;
    double t0 = 0.0;
    std::vector<double> values;
    std::vector<bool> artifact_mask;

    static constexpr double fs = kRivRate;

    std::size_t size() const noexcept { return values.size(); }
    double time_at(std::size_t i) const noexcept { return t0 + static_cast<double>(i) * kRivStep; }
    double t_last() const noexcept { return time_at(values.empty() ? 0 : values.size() - 1); }
};

/// Per-beat feature carried by each variation kind.
///   RIIV v_peak, RIAV v_peak - v_foot, RIFV period (s), RIWV width50 (s), RISV rise25_75 (s).
inline std::optional<double> beat_feature(const Beat& beat, RivKind kind) noexcept {
    switch (kind) {
        case RivKind::RIIV: return beat.v_peak;
        case RivKind::RIAV: return beat.amplitude();
        case RivKind::RIFV: return beat.period;
        case RivKind::RIWV: return beat.width50;
        case RivKind::RISV: return beat.rise25_75;
    }
    return std::nullopt;
}

/// Piecewise-linear interpolant through the non-artifact beats' features,
/// knots at t_peak; constant beyond the first and last knot.
class FeatureInterpolant {
public:
    FeatureInterpolant(std::span<const Beat> beats, RivKind kind) {
        for (const auto& b : beats) {
            if (b.artifact) {
                artifact_times_.push_back(b.t_peak);
            } else if (auto v = beat_feature(b, kind)) {
                knot_t_.push_back(b.t_peak);
                knot_v_.push_back(*v);
            }
        }
    }

    std::size_t knot_count() const noexcept { return knot_t_.size(); }

    double operator()(double t) const {
        const auto hi = std::upper_bound(knot_t_.begin(), knot_t_.end(), t);
        if (hi == knot_t_.begin()) return knot_v_.front();
        if (hi == knot_t_.end()) return knot_v_.back();
        const auto k = static_cast<std::size_t>(hi - knot_t_.begin()) - 1;
        const double w = (t - knot_t_[k]) / (knot_t_[k + 1] - knot_t_[k]);
        return knot_v_[k] + w * (knot_v_[k + 1] - knot_v_[k]);
    }

    /// True when the knots bracketing t enclose an artifact beat. Outside the
    /// knot range the open interval toward the record edge is used. A point
    /// on a knot (to rounding) takes that knot's clean value.
    bool contaminated(double t) const {
        const auto hi = std::upper_bound(knot_t_.begin(), knot_t_.end(), t);
        if (hi != knot_t_.begin() && t - *(hi - 1) <= kKnotTolerance) return false;
        if (hi != knot_t_.end() && *hi - t <= kKnotTolerance) return false;
        const double lo_t = hi == knot_t_.begin() ? -std::numeric_limits<double>::infinity() : *(hi - 1);
        const double hi_t = hi == knot_t_.end() ? std::numeric_limits<double>::infinity() : *hi;
        const auto a = std::upper_bound(artifact_times_.begin(), artifact_times_.end(), lo_t);
        return a != artifact_times_.end() && *a < hi_t;
    }

private:
    static constexpr double kKnotTolerance = 1e-9;
    std::vector<double> knot_t_;
    std::vector<double> knot_v_;
    std::vector<double> artifact_times_;
};

/// Places each non-artifact beat's feature at its t_peak and linearly
/// interpolates onto the 5 Hz grid running from the first beat's t_peak to
/// t_end. Grid points whose bracketing knots enclose an artifact beat are
/// masked rather than dropped.
inline RivSeries extract(std::span<const Beat> beats, RivKind kind, double t_end) {
    if (beats.empty()) throw InsufficientSignalError("extract: no beats");
    const FeatureInterpolant interp(beats, kind);
    if (interp.knot_count() < 3) {
        throw InsufficientSignalError("extract " + std::string(to_string(kind)) + ": fewer than 3 usable beats");
    }
    RivSeries out;
    out.kind = kind;
    out.t0 = beats.front().t_peak;
    if (t_end < out.t0) throw ParameterError("extract: t_end precedes the first beat");
    const auto count = static_cast<std::size_t>(std::floor((t_end - out.t0) / kRivStep + 1e-9)) + 1;
    out.values.resize(count);
    out.artifact_mask.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = out.time_at(i);
        out.values[i] = interp(t);
        out.artifact_mask[i] = interp.contaminated(t);
    }
    return out;
}

}  // namespace rrcif
