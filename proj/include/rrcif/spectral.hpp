#pragma once

// Windowed power spectra of RIV series, power-law background removal,
// dominant-rate picking and the noise index.

#include <rrcif/error.hpp>
#include <rrcif/riv.hpp>

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rrcif {

namespace spectral_constants {
inline constexpr double kWindowSeconds = 32.0;
inline constexpr double kShiftSeconds = 2.0;
inline constexpr std::size_t kWindowSamples = 160;  // 32 s at 5 Hz
inline constexpr std::size_t kFftSize = 4096;
inline constexpr double kBandLow = 4.0;             // breaths/min
inline constexpr double kBandHigh = 65.0;
inline constexpr double kFitLowMin = 2.0;
inline constexpr double kFitLowMax = 4.0;
inline constexpr double kFitHighMin = 65.0;
inline constexpr double kFitHighMax = 100.0;
inline constexpr std::size_t kMinFitBins = 5;
inline constexpr double kDefaultThreshold = 0.13;
}  // namespace spectral_constants

struct Window {
    double start_s;
    double end_s;
};

/// 32 s analysis windows advanced by 2 s over a recording of a given duration.
struct WindowGrid {
    double window_s = spectral_constants::kWindowSeconds;
    double shift_s = spectral_constants::kShiftSeconds;
    std::vector<Window> windows;

    /// floor((D - 32) / 2) + 1 windows, none when D < 32.
    static std::size_t count_for(double duration_s,
                                 double window_s = spectral_constants::kWindowSeconds,
                                 double shift_s = spectral_constants::kShiftSeconds) {
        if (duration_s + 1e-9 < window_s) return 0;
        return static_cast<std::size_t>(std::floor((duration_s - window_s) / shift_s + 1e-9)) + 1;
    }

    static WindowGrid for_duration(double duration_s) {
        WindowGrid g;
        const std::size_t n = count_for(duration_s, g.window_s, g.shift_s);
        g.windows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double start = static_cast<double>(i) * g.shift_s;
            g.windows.push_back({start, start + g.window_s});
        }
        return g;
    }

    std::size_t size() const noexcept { return windows.size(); }
};

/// Power spectrum on a breaths/min frequency grid with the fitted
/// background `fit` = e^k * f^a and the residual `out` = power - fit.
struct PowerSpectrum {
    std::vector<double> freqs;
    std::vector<double> power;
    std::vector<double> fit;
    std::vector<double> out;
    double slope = 0.0;      // a
    double intercept = 0.0;  // k, natural log
    bool fit_degenerate = false;
    /// Zero-padding factor (FFT length / block length). Adjacent padded bins
    /// are not independent; the noise index divides the in-band sum by it.
    double oversampling = 1.0;
};

/// Marker for a window that overlaps an artifact-masked RIV sample.
struct ArtifactSkip {};

using WindowSpectrum = std::variant<PowerSpectrum, ArtifactSkip>;

namespace detail {

/// FFTW plan for the fixed 4096-point real transform. Plan creation is not
/// thread-safe in FFTW, execution with new-array functions is.
class RealFft {
public:
    static const RealFft& instance() {
        static const RealFft fft;
        return fft;
    }

    /// Power |X_k|^2 for k = 0 .. N/2 of the zero-padded input.
    std::vector<double> power(std::span<const double> input) const {
        struct Buffers {
            double* in = static_cast<double*>(fftw_malloc(sizeof(double) * spectral_constants::kFftSize));
            fftw_complex* out = static_cast<fftw_complex*>(
                fftw_malloc(sizeof(fftw_complex) * (spectral_constants::kFftSize / 2 + 1)));
            ~Buffers() {
                fftw_free(in);
                fftw_free(out);
            }
        };
        thread_local Buffers buf;
        constexpr std::size_t n = spectral_constants::kFftSize;
        std::fill(buf.in, buf.in + n, 0.0);
        std::copy(input.begin(), input.end(), buf.in);
        fftw_execute_dft_r2c(plan_, buf.in, buf.out);
        std::vector<double> p(n / 2 + 1);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = buf.out[k][0] * buf.out[k][0] + buf.out[k][1] * buf.out[k][1];
        return p;
    }

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

private:
    RealFft() {
        constexpr std::size_t n = spectral_constants::kFftSize;
        double* in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
    }
    ~RealFft() { fftw_destroy_plan(plan_); }

    fftw_plan plan_ = nullptr;
};

inline bool in_fit_band(double f) {
    using namespace spectral_constants;
    return (f >= kFitLowMin && f <= kFitLowMax) || (f >= kFitHighMin && f <= kFitHighMax);
}

inline bool in_rate_band(double f) {
    using namespace spectral_constants;
    return f >= kBandLow && f <= kBandHigh;
}

}  // namespace detail

/// Spectrum of a 160-sample block: mean removal, Hamming taper, zero padding
/// to 4096 points, magnitude squared. Frequencies in breaths/min.
inline PowerSpectrum block_spectrum(std::span<const double> block, double fs = kRivRate) {
    using namespace spectral_constants;
    if (block.empty() || block.size() > kFftSize) throw ParameterError("block_spectrum: bad block length");
    const std::size_t m = block.size();
    double mean = 0.0;
    for (double v : block) mean += v;
    mean /= static_cast<double>(m);
    std::vector<double> tapered(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double w = m == 1 ? 1.0
                                : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                         static_cast<double>(m - 1));
        tapered[i] = (block[i] - mean) * w;
    }
    PowerSpectrum s;
    s.power = detail::RealFft::instance().power(tapered);
    s.freqs.resize(s.power.size());
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
        s.freqs[k] = 60.0 * fs * static_cast<double>(k) / static_cast<double>(kFftSize);
    }
    s.fit.assign(s.power.size(), 0.0);
    s.out = s.power;
    s.oversampling = static_cast<double>(kFftSize) / static_cast<double>(m);
    return s;
}

/// Spectrum of the 160 samples of `series` covering `window`.
///
/// The block starts at the grid sample nearest window.start_s. A window may
/// overhang the series edge by up to one window shift (2 s); the block is
/// then moved inward. Larger overhangs throw BoundsError. Any masked sample
/// in the block yields ArtifactSkip.
inline WindowSpectrum window_spectrum(const RivSeries& series, const Window& window) {
    using namespace spectral_constants;
    const std::size_t m = kWindowSamples;
    if (series.size() < m) throw BoundsError("window_spectrum: series shorter than one window");
    const double series_end = series.t_last() + kRivStep;
    if (window.start_s < series.t0 - kShiftSeconds - 1e-9 || window.end_s > series_end + kShiftSeconds + 1e-9 ||
        window.end_s <= window.start_s) {
        throw BoundsError("window_spectrum: window [" + std::to_string(window.start_s) + ", " +
                          std::to_string(window.end_s) + "] s outside series extent");
    }
    const double pos = std::round((window.start_s - series.t0) / kRivStep);
    const auto first = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(series.size() - m)));
    for (std::size_t i = first; i < first + m; ++i) {
        if (series.artifact_mask[i]) return ArtifactSkip{};
    }
    return block_spectrum(std::span<const double>(series.values).subspan(first, m));
}

/// Least-squares line through (ln f, ln P) over the fit bands [2,4] and
/// [65,100] breaths/min using bins with P > 0, then fit = e^k f^a and
/// out = power - fit over the whole grid. Fewer than 5 usable bins leaves
/// fit at zero and sets fit_degenerate.
inline PowerSpectrum fit_power_law(PowerSpectrum s) {
    using namespace spectral_constants;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
        const double f = s.freqs[k];
        if (!detail::in_fit_band(f) || !(s.power[k] > 0.0)) continue;
        const double x = std::log(f);
        const double y = std::log(s.power[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    s.fit.assign(s.power.size(), 0.0);
    s.slope = 0.0;
    s.intercept = 0.0;
    s.fit_degenerate = true;
    if (n >= kMinFitBins) {
        const double dn = static_cast<double>(n);
        const double mx = sx / dn;
        const double my = sy / dn;
        const double var = sxx / dn - mx * mx;
        if (var > 1e-12) {
            s.slope = (sxy / dn - mx * my) / var;
            s.intercept = my - s.slope * mx;
            s.fit_degenerate = false;
            for (std::size_t k = 0; k < s.freqs.size(); ++k) {
                s.fit[k] = s.freqs[k] > 0.0 ? std::exp(s.intercept) * std::pow(s.freqs[k], s.slope) : 0.0;
            }
        }
    }
    s.out.resize(s.power.size());
    for (std::size_t k = 0; k < s.power.size(); ++k) s.out[k] = s.power[k] - s.fit[k];
    return s;
}

struct RateAndIndex {
    double rr;  // breaths/min
    double ni;  // [0, 1]
};

/// Rate at the maximum of the background-subtracted spectrum inside 4-65
/// breaths/min, and the noise index: the peak's positive residual over the
/// sum of positive residuals in the same band (0 when that sum is 0).
/// The sum is taken per native-resolution cell, i.e. divided by the
/// zero-padding factor, and the ratio is capped at 1.
inline RateAndIndex estimate_rr(const PowerSpectrum& s) {
    std::optional<std::size_t> best;
    double total = 0.0;
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
        if (!detail::in_rate_band(s.freqs[k])) continue;
        total += std::max(s.out[k], 0.0);
        if (!best || s.out[k] > s.out[*best]) best = k;
    }
    if (!best) throw ParameterError("estimate_rr: spectrum has no bins in the 4-65 breaths/min band");
    const double peak = std::max(s.out[*best], 0.0);
    const double cells = total / s.oversampling;
    return {s.freqs[*best], cells > 0.0 ? std::min(1.0, peak / cells) : 0.0};
}

enum class InvalidReason { none, artifact, low_ni, fit_degenerate };

inline constexpr std::string_view to_string(InvalidReason r) noexcept {
    switch (r) {
        case InvalidReason::none: return "none";
        case InvalidReason::artifact: return "artifact";
        case InvalidReason::low_ni: return "low_ni";
        case InvalidReason::fit_degenerate: return "fit_degenerate";
    }
    return "?";
}

struct RrEstimate {
    RivKind kind = RivKind::RIIV;
    std::size_t window_index = 0;
    std::optional<double> rr;
    std::optional<double> ni;
    bool valid = false;
    InvalidReason invalid_reason = InvalidReason::none;
};

inline void check_threshold(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("threshold t must lie in [0, 1], got " + std::to_string(t));
}

/// Passes the estimate when ni >= t.
inline RrEstimate gate(const RateAndIndex& estimate, double t, RivKind kind = RivKind::RIIV,
                       std::size_t window_index = 0) {
    check_threshold(t);
    RrEstimate e;
    e.kind = kind;
    e.window_index = window_index;
    e.rr = estimate.rr;
    e.ni = estimate.ni;
    e.valid = estimate.ni >= t;
    e.invalid_reason = e.valid ? InvalidReason::none : InvalidReason::low_ni;
    return e;
}

/// Ungated outcome of one (window, kind) cell; `gate_at` applies a threshold.
struct WindowEstimate {
    RivKind kind = RivKind::RIIV;
    std::size_t window_index = 0;
    bool artifact = false;
    bool fit_degenerate = false;
    std::optional<RateAndIndex> value;

    RrEstimate gate_at(double t) const {
        if (artifact || !value) {
            check_threshold(t);
            RrEstimate e;
            e.kind = kind;
            e.window_index = window_index;
            e.invalid_reason = InvalidReason::artifact;
            return e;
        }
        RrEstimate e = gate(*value, t, kind, window_index);
        if (fit_degenerate) {
            e.valid = false;
            e.invalid_reason = InvalidReason::fit_degenerate;
        }
        return e;
    }
};

/// Full spectral chain for one series and window.
inline WindowEstimate estimate_window(const RivSeries& series, const Window& window, std::size_t window_index) {
    WindowEstimate e;
    e.kind = series.kind;
    e.window_index = window_index;
    auto spectrum = window_spectrum(series, window);
    if (std::holds_alternative<ArtifactSkip>(spectrum)) {
        e.artifact = true;
        return e;
    }
    const auto fitted = fit_power_law(std::get<PowerSpectrum>(std::move(spectrum)));
    e.fit_degenerate = fitted.fit_degenerate;
    e.value = estimate_rr(fitted);
    return e;
}

}  // namespace rrcif
