#pragma once

// Covariance intersection fusion of per-RIV rate estimates, and the Smart
// Fusion (mean with agreement check) baselines.

#include <rrcif/error.hpp>
#include <rrcif/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrcif {

inline constexpr double kCovarianceFloor = 1e-6;

struct FusionResult {
    std::size_t window_index = 0;
    std::optional<double> rr_fusion;
    std::optional<double> c_fusion;
    std::vector<double> weights;       // parallel to contributors
    std::vector<RivKind> contributors;
    bool retained = false;
};

/// Weights satisfying w_1 C_1 = ... = w_n C_n and sum(w) = 1, i.e.
/// w_i = (1 / C_i) / sum_j (1 / C_j).
inline std::vector<double> cif_weights(std::span<const double> covariances) {
    if (covariances.empty()) throw ParameterError("cif_weights: no covariances");
    double total = 0.0;
    for (double c : covariances) {
        if (!(c > 0.0) || !std::isfinite(c)) throw ParameterError("cif_weights: covariances must be > 0");
        total += 1.0 / c;
    }
    std::vector<double> w;
    w.reserve(covariances.size());
    for (double c : covariances) w.push_back((1.0 / c) / total);
    return w;
}

struct CifInput {
    double x;   // breaths/min
    double ni;  // noise index in [0, 1]
};

struct CifOutput {
    double x_fusion;
    double c_fusion;
    std::vector<double> weights;
};

/// One-dimensional covariance intersection with C_i = max(1 - ni_i, 1e-6):
///   1/C_fusion = sum w_i / C_i,   x_fusion = C_fusion * sum w_i x_i / C_i,
/// which with the equal-product weights reduces to
///   x_fusion = sum(x_i / C_i^2) / sum(1 / C_i^2).
inline CifOutput cif_fuse(std::span<const CifInput> estimates) {
    if (estimates.empty()) throw EmptyFusionError("cif_fuse: no estimates to fuse");
    std::vector<double> cov;
    cov.reserve(estimates.size());
    for (const auto& e : estimates) {
        if (!(e.ni >= 0.0 && e.ni <= 1.0)) throw ParameterError("cif_fuse: ni must lie in [0, 1]");
        if (!std::isfinite(e.x)) throw ParameterError("cif_fuse: non-finite estimate");
        cov.push_back(std::max(1.0 - e.ni, kCovarianceFloor));
    }
    auto w = cif_weights(cov);
    double info = 0.0;
    double num = 0.0;
    double x_min = estimates.front().x, x_max = x_min;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        info += w[i] / cov[i];
        num += w[i] / cov[i] * estimates[i].x;
        x_min = std::min(x_min, estimates[i].x);
        x_max = std::max(x_max, estimates[i].x);
    }
    const double c_fusion = 1.0 / info;
    // Rounding can leave the convex combination a few ulps outside the hull.
    const double x = std::clamp(num / info, x_min, x_max);
    return {x, c_fusion, std::move(w)};
}

/// Fuses every estimate that passes `gate` at threshold t. No passing
/// estimate gives a gap (retained = false).
inline FusionResult fuse_window(std::span<const WindowEstimate> estimates, double t, std::size_t window_index = 0) {
    check_threshold(t);
    FusionResult r;
    r.window_index = window_index;
    std::vector<CifInput> inputs;
    for (const auto& est : estimates) {
        const RrEstimate g = est.gate_at(t);
        if (!g.valid) continue;
        inputs.push_back({*g.rr, *g.ni});
        r.contributors.push_back(g.kind);
    }
    if (inputs.empty()) return r;
    auto fused = cif_fuse(inputs);
    r.rr_fusion = fused.x_fusion;
    r.c_fusion = fused.c_fusion;
    r.weights = std::move(fused.weights);
    r.retained = true;
    return r;
}

/// Same as above for already-gated estimates.
inline FusionResult fuse_window(std::span<const RrEstimate> estimates, std::size_t window_index = 0) {
    FusionResult r;
    r.window_index = window_index;
    std::vector<CifInput> inputs;
    for (const auto& e : estimates) {
        if (!e.valid || !e.rr || !e.ni) continue;
        inputs.push_back({*e.rr, *e.ni});
        r.contributors.push_back(e.kind);
    }
    if (inputs.empty()) return r;
    auto fused = cif_fuse(inputs);
    r.rr_fusion = fused.x_fusion;
    r.c_fusion = fused.c_fusion;
    r.weights = std::move(fused.weights);
    r.retained = true;
    return r;
}

/// Smart Fusion configuration: which variations are averaged and the
/// agreement limit on their sample standard deviation.
struct SfConfig {
    std::vector<RivKind> kinds;
    double sd_limit = 4.0;  // breaths/min

    static SfConfig sf3() { return {{RivKind::RIIV, RivKind::RIAV, RivKind::RIFV}, 4.0}; }
    static SfConfig sf5() { return {{kAllRivKinds.begin(), kAllRivKinds.end()}, 4.0}; }
};

/// Sample (n - 1) standard deviation.
inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Mean of the configured variations' rates. The window is dropped when any
/// configured variation has no rate (artifact) or the rates' sample SD
/// exceeds the limit. Noise-index gating is not applied.
template <class Estimate>
FusionResult smart_fusion_impl(std::span<const Estimate> estimates, const SfConfig& config,
                               std::size_t window_index, auto rate_of) {
    FusionResult r;
    r.window_index = window_index;
    std::vector<double> rates;
    for (RivKind kind : config.kinds) {
        const auto it = std::find_if(estimates.begin(), estimates.end(), [&](const Estimate& e) { return e.kind == kind; });
        if (it == estimates.end()) return r;
        const std::optional<double> rate = rate_of(*it);
        if (!rate) return r;
        rates.push_back(*rate);
        r.contributors.push_back(kind);
    }
    if (rates.empty() || sample_sd(rates) > config.sd_limit) {
        r.contributors.clear();
        return r;
    }
    double mean = 0.0;
    for (double x : rates) mean += x;
    mean /= static_cast<double>(rates.size());
    r.rr_fusion = mean;
    r.weights.assign(rates.size(), 1.0 / static_cast<double>(rates.size()));
    r.retained = true;
    return r;
}

inline FusionResult smart_fusion(std::span<const RrEstimate> estimates, const SfConfig& config,
                                 std::size_t window_index = 0) {
    return smart_fusion_impl(estimates, config, window_index, [](const RrEstimate& e) -> std::optional<double> {
        if (e.invalid_reason == InvalidReason::artifact) return std::nullopt;
        return e.rr;
    });
}

inline FusionResult smart_fusion(std::span<const WindowEstimate> estimates, const SfConfig& config,
                                 std::size_t window_index = 0) {
    return smart_fusion_impl(estimates, config, window_index, [](const WindowEstimate& e) -> std::optional<double> {
        if (e.artifact || !e.value) return std::nullopt;
        return e.value->rr;
    });
}

}  // namespace rrcif
