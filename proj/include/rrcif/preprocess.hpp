#pragma once

// Band-pass filtering, pulse segmentation and artifact flagging.

#include <rrcif/error.hpp>
#include <rrcif/signal_io.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace rrcif {

namespace preprocess_constants {
inline constexpr double kMinSampleRate = 25.0;     // Hz
inline constexpr double kLowCut = 0.4;             // Hz
inline constexpr double kHighCut = 8.0;            // Hz
inline constexpr int kFilterOrder = 3;             // Butterworth prototype order
inline constexpr double kRefractory = 0.3;         // s between accepted peaks
inline constexpr double kThresholdFraction = 0.5;  // of the median recent prominence
inline constexpr std::size_t kProminenceHistory = 10;
inline constexpr double kArtifactRatio = 1.75;
inline constexpr std::size_t kArtifactHistory = 10;
inline constexpr std::size_t kClippingRun = 3;
}  // namespace preprocess_constants

/// Second-order section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

/// Digital Butterworth band-pass as a cascade of second-order sections.
///
/// Analog low-pass prototype of the given order, low-pass to band-pass
/// transform around the prewarped edges, then the bilinear transform. Every
/// section carries one zero at z = 1 and one at z = -1; the overall gain sits
/// in the first section.
inline std::vector<Biquad> butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
    using cd = std::complex<double>;
    if (order < 1 || !(low_hz > 0.0) || !(high_hz > low_hz) || !(high_hz < fs / 2.0)) {
        throw ParameterError("butterworth_bandpass: need 0 < low < high < fs/2");
    }
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / fs);
    const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    std::vector<cd> poles;
    for (int k = 0; k < order; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order));
        const cd half = p * bw / 2.0;
        const cd root = std::sqrt(half * half - w0sq);
        poles.push_back(half + root);
        poles.push_back(half - root);
    }
    // Analog gain bw^N with N zeros at s = 0, bilinear maps them to z = 1 and
    // the N zeros at infinity to z = -1.
    cd gain = std::pow(bw, order) * std::pow(fs2, order);
    std::vector<cd> zpoles;
    for (const cd& p : poles) {
        gain /= (fs2 - p);
        zpoles.push_back((fs2 + p) / (fs2 - p));
    }

    constexpr double tol = 1e-10;
    std::vector<cd> complex_poles;
    std::vector<double> real_poles;
    for (const cd& z : zpoles) {
        if (std::abs(z.imag()) <= tol * std::max(1.0, std::abs(z))) {
            real_poles.push_back(z.real());
        } else if (z.imag() > 0.0) {
            complex_poles.push_back(z);
        }
    }
    std::sort(real_poles.begin(), real_poles.end());

    std::vector<Biquad> sections;
    for (const cd& z : complex_poles) {
        sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        const double p = real_poles[i];
        const double q = real_poles[i + 1];
        sections.push_back({1.0, 0.0, -1.0, -(p + q), p * q});
    }
    if (real_poles.size() % 2 != 0 || sections.size() != static_cast<std::size_t>(order)) {
        throw ParameterError("butterworth_bandpass: unexpected pole layout");
    }
    const double g = gain.real();
    sections.front().b0 *= g;
    sections.front().b1 *= g;
    sections.front().b2 *= g;
    return sections;
}

/// Magnitude response |H(e^{jw})| of a section cascade at frequency `hz`.
inline double magnitude_response(std::span<const Biquad> sections, double hz, double fs) {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * hz / fs);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return std::abs(h);
}

namespace detail {

// Steady-state transposed direct-form II state of each section for a unit step.
inline std::vector<std::array<double, 2>> sos_step_state(std::span<const Biquad> sections) {
    std::vector<std::array<double, 2>> zi;
    double scale = 1.0;
    for (const auto& s : sections) {
        // [1 + a1, -1; a2, 1] z = [b1 - a1 b0, b2 - a2 b0]
        const double r0 = s.b1 - s.a1 * s.b0;
        const double r1 = s.b2 - s.a2 * s.b0;
        const double det = (1.0 + s.a1) + s.a2;
        const double z0 = (r0 + r1) / det;
        const double z1 = r1 - s.a2 * z0;
        zi.push_back({scale * z0, scale * z1});
        scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    }
    return zi;
}

inline void sos_filter_inplace(std::span<const Biquad> sections, std::vector<double>& x,
                               const std::vector<std::array<double, 2>>& unit_state) {
    const double x0 = x.front();
    for (std::size_t k = 0; k < sections.size(); ++k) {
        const auto& s = sections[k];
        double z0 = unit_state[k][0] * x0;
        double z1 = unit_state[k][1] * x0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z0;
            z0 = s.b1 * in - s.a1 * out + z1;
            z1 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

}  // namespace detail

/// Forward-backward filtering with odd-extension padding and steady-state
/// initial conditions, so a constant input yields a constant output.
inline std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x) {
    const std::size_t pad = 3 * (2 * sections.size() + 1);
    if (x.size() <= pad) {
        throw InsufficientSignalError("filtfilt: signal shorter than the padding length");
    }
    std::vector<double> ext;
    ext.reserve(x.size() + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    const std::size_t n = x.size();
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    const auto state = detail::sos_step_state(sections);
    detail::sos_filter_inplace(sections, ext, state);
    std::reverse(ext.begin(), ext.end());
    detail::sos_filter_inplace(sections, ext, state);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

/// Zero-phase 0.4-8 Hz band-pass (3rd-order Butterworth prototype run
/// forward and backward), followed by removal of the remaining mean.
inline PpgRecord bandpass(const PpgRecord& record) {
    using namespace preprocess_constants;
    if (record.fs() < kMinSampleRate) {
        throw UnsupportedRateError("bandpass: sampling rate " + std::to_string(record.fs()) +
                                   " Hz is below the supported minimum of 25 Hz");
    }
    const auto sections = butterworth_bandpass(kFilterOrder, kLowCut, kHighCut, record.fs());
    auto y = filtfilt(sections, record.samples());
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (double& v : y) v -= mean;
    return record.with_samples(std::move(y));
}

/// One detected cardiac pulse.
struct Beat {
    double t_foot = 0.0;
    double v_foot = 0.0;
    double t_peak = 0.0;
    double v_peak = 0.0;
    double width50 = 0.0;    ///< s, width at half pulse amplitude
    double rise25_75 = 0.0;  ///< s, upstroke transit between 25 % and 75 % amplitude
    std::optional<double> period;  ///< s, t_peak minus the previous t_peak
    bool artifact = false;
    /// Longest run of consecutive saturated raw samples between this beat's foot and the next foot.
    std::size_t clipped_run = 0;

    double amplitude() const noexcept { return v_peak - v_foot; }
};

namespace detail {

// Vertex of the parabola through (i-1, i, i+1); returns (offset, value).
inline std::pair<double, double> parabolic_vertex(std::span<const double> x, std::size_t i) {
    if (i == 0 || i + 1 >= x.size()) return {0.0, x[i]};
    const double ym = x[i - 1], y0 = x[i], yp = x[i + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom == 0.0) return {0.0, y0};
    const double off = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
    return {off, y0 - 0.25 * (ym - yp) * off};
}

// Sample-index position where x crosses `level` between j and j+1 (linear).
inline double crossing(std::span<const double> x, std::size_t j, double level) {
    const double a = x[j], b = x[j + 1];
    if (b == a) return static_cast<double>(j);
    return static_cast<double>(j) + (level - a) / (b - a);
}

// Last upstroke crossing of `level` searching back from the peak toward the foot.
inline std::optional<double> upstroke_crossing(std::span<const double> x, std::size_t foot, std::size_t peak,
                                               double level) {
    for (std::size_t j = peak; j > foot; --j) {
        if (x[j - 1] < level && x[j] >= level) return crossing(x, j - 1, level);
    }
    return std::nullopt;
}

inline std::optional<double> downstroke_crossing(std::span<const double> x, std::size_t peak, std::size_t limit,
                                                 double level) {
    for (std::size_t j = peak; j < limit && j + 1 < x.size(); ++j) {
        if (x[j] >= level && x[j + 1] < level) return crossing(x, j, level);
    }
    return std::nullopt;
}

inline double median_of(std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
    return 0.5 * (lo + hi);
}

// Robust initial pulse-amplitude guess: 5th-95th percentile range of the first 3 s.
inline double initial_prominence(std::span<const double> x, double fs) {
    const std::size_t n = std::min(x.size(), static_cast<std::size_t>(3.0 * fs) + 1);
    std::vector<double> head(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(head.begin(), head.end());
    const auto at = [&](double q) { return head[static_cast<std::size_t>(q * static_cast<double>(n - 1))]; };
    return at(0.95) - at(0.05);
}

}  // namespace detail

/// Finds pulse peaks and feet in a band-passed record.
///
/// Peaks are local maxima of the signal (sign change of the first
/// difference). A candidate is accepted when its prominence over the
/// minimum since the previous accepted peak reaches half the median of the
/// last 10 accepted prominences; within the 0.3 s refractory period only the
/// higher of two candidates is kept. Feet are the minima between consecutive
/// peaks; the first peak needs an interior minimum before it. Peak and foot
/// positions are refined by parabolic interpolation, amplitude crossings by
/// linear interpolation.
///
/// When `raw` is given, clipped_run counts consecutive raw samples equal to
/// the global minimum or maximum of the raw record.
inline std::vector<Beat> segment_beats(const PpgRecord& filtered, const PpgRecord* raw = nullptr) {
    using namespace preprocess_constants;
    const std::span<const double> x = filtered.samples();
    const double fs = filtered.fs();
    const std::size_t n = x.size();
    const auto refractory = static_cast<std::size_t>(std::ceil(kRefractory * fs));

    struct Peak {
        std::size_t index;
        double prominence;
    };
    std::vector<Peak> peaks;
    std::vector<double> history;
    const double seed = detail::initial_prominence(x, fs);
    if (!(seed > 0.0)) throw InsufficientSignalError("segment_beats: flat signal");
    history.push_back(seed);

    auto threshold = [&] {
        const std::size_t k = std::min(history.size(), kProminenceHistory);
        std::vector<double> recent(history.end() - static_cast<std::ptrdiff_t>(k), history.end());
        return kThresholdFraction * detail::median_of(std::move(recent));
    };
    auto min_between = [&](std::size_t a, std::size_t b) {
        return *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(a), x.begin() + static_cast<std::ptrdiff_t>(b + 1));
    };

    bool seeded = true;  // history[0] is the initial guess, dropped once real peaks exist
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(x[i] > x[i - 1] && x[i] >= x[i + 1])) continue;
        if (!peaks.empty() && i - peaks.back().index < refractory) {
            if (x[i] > x[peaks.back().index]) {
                const std::size_t from = peaks.size() >= 2 ? peaks[peaks.size() - 2].index : 0;
                peaks.back() = {i, x[i] - min_between(from, i)};
                history.back() = peaks.back().prominence;
            }
            continue;
        }
        const std::size_t from = peaks.empty() ? 0 : peaks.back().index;
        const double prominence = x[i] - min_between(from, i);
        if (prominence < threshold()) continue;
        peaks.push_back({i, prominence});
        if (seeded) {
            history.clear();
            seeded = false;
        }
        history.push_back(prominence);
    }

    double raw_min = 0.0, raw_max = 0.0;
    if (raw) {
        const auto [lo, hi] = std::minmax_element(raw->samples().begin(), raw->samples().end());
        raw_min = *lo;
        raw_max = *hi;
    }
    auto clipped_run = [&](std::size_t a, std::size_t b) {
        std::size_t best = 0, run = 0;
        const auto& r = raw->samples();
        for (std::size_t j = a; j <= b && j < r.size(); ++j) {
            run = (r[j] == raw_min || r[j] == raw_max) ? run + 1 : 0;
            best = std::max(best, run);
        }
        return best;
    };

    std::vector<Beat> beats;
    std::vector<std::size_t> feet(peaks.size());
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        const std::size_t from = k == 0 ? 0 : peaks[k - 1].index;
        const auto it = std::min_element(x.begin() + static_cast<std::ptrdiff_t>(from),
                                         x.begin() + static_cast<std::ptrdiff_t>(peaks[k].index));
        feet[k] = static_cast<std::size_t>(it - x.begin());
    }
    std::optional<double> previous_peak;
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        const std::size_t p = peaks[k].index;
        const std::size_t f = feet[k];
        if (f == 0 || f >= p) continue;
        const auto [p_off, v_peak] = detail::parabolic_vertex(x, p);
        const auto [f_off, v_foot] = detail::parabolic_vertex(x, f);
        const double amp = v_peak - v_foot;
        if (!(amp > 0.0)) continue;
        const std::size_t limit = k + 1 < peaks.size() ? peaks[k + 1].index : n - 1;
        const auto up50 = detail::upstroke_crossing(x, f, p, v_foot + 0.5 * amp);
        const auto up25 = detail::upstroke_crossing(x, f, p, v_foot + 0.25 * amp);
        const auto up75 = detail::upstroke_crossing(x, f, p, v_foot + 0.75 * amp);
        const auto down50 = detail::downstroke_crossing(x, p, limit, v_foot + 0.5 * amp);
        if (!up50 || !up25 || !up75 || !down50) {
            // Pulse shape not resolvable (typically the truncated last beat).
            continue;
        }
        Beat b;
        b.t_foot = (static_cast<double>(f) + f_off) / fs;
        b.v_foot = v_foot;
        b.t_peak = (static_cast<double>(p) + p_off) / fs;
        b.v_peak = v_peak;
        b.width50 = (*down50 - *up50) / fs;
        b.rise25_75 = (*up75 - *up25) / fs;
        if (!(b.t_foot < b.t_peak) || !(b.width50 > 0.0) || !(b.rise25_75 > 0.0)) continue;
        if (previous_peak) b.period = b.t_peak - *previous_peak;
        previous_peak = b.t_peak;
        if (raw) {
            const std::size_t next_foot = k + 1 < peaks.size() ? feet[k + 1] : n - 1;
            b.clipped_run = clipped_run(f, next_foot);
        }
        beats.push_back(b);
    }
    if (beats.size() < 3) {
        throw InsufficientSignalError("segment_beats: fewer than 3 beats detected");
    }
    return beats;
}

/// Flags beats whose period or amplitude deviates from the median of the
/// preceding 10 beats by more than a factor of 1.75, or that contain a run
/// of at least 3 saturated samples. The first beats borrow following beats
/// so every reference median spans up to 10 neighbours. Flags are a
/// function of beat values only, so the operation is idempotent.
inline std::vector<Beat> flag_artifacts(std::vector<Beat> beats) {
    using namespace preprocess_constants;
    const std::size_t n = beats.size();
    const std::size_t span = std::min(kArtifactHistory, n > 0 ? n - 1 : 0);
    auto outside = [](double value, double ref) {
        if (!(ref > 0.0)) return false;
        const double ratio = value / ref;
        return ratio > kArtifactRatio || ratio < 1.0 / kArtifactRatio;
    };
    std::vector<bool> flags(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        // Reference neighbourhood: previous `span` beats, padded with following beats near the start.
        std::vector<std::size_t> idx;
        for (std::size_t j = i > span ? i - span : 0; j < i; ++j) idx.push_back(j);
        for (std::size_t j = i + 1; idx.size() < span && j < n; ++j) idx.push_back(j);
        std::vector<double> amps, periods;
        for (std::size_t j : idx) {
            amps.push_back(beats[j].amplitude());
            if (beats[j].period) periods.push_back(*beats[j].period);
        }
        bool bad = beats[i].clipped_run >= kClippingRun;
        if (!amps.empty() && outside(beats[i].amplitude(), detail::median_of(amps))) bad = true;
        if (beats[i].period && !periods.empty() && outside(*beats[i].period, detail::median_of(periods))) bad = true;
        flags[i] = bad;
    }
    for (std::size_t i = 0; i < n; ++i) beats[i].artifact = flags[i];
    return beats;
}

}  // namespace rrcif
