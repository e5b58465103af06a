#pragma once

// Benchmark metrics: reference alignment, per-subject RMSE and retention,
// threshold sweeps, agreement statistics and the Wilcoxon signed-rank test.

#include <rrcif/error.hpp>
#include <rrcif/fusion.hpp>
#include <rrcif/pipeline.hpp>
#include <rrcif/signal_io.hpp>
#include <rrcif/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrcif {

/// Mean of reference samples inside [start, end]; if none, linear
/// interpolation at the window centre (clamped to the end values).
inline double reference_at(const ReferenceRr& ref, const Window& window) {
    if (ref.size() == 0) throw ParameterError("reference_at: empty reference");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref.times_s[i] >= window.start_s && ref.times_s[i] <= window.end_s) {
            sum += ref.rr[i];
            ++n;
        }
    }
    if (n > 0) return sum / static_cast<double>(n);
    const double c = 0.5 * (window.start_s + window.end_s);
    const auto& t = ref.times_s;
    if (c <= t.front()) return ref.rr.front();
    if (c >= t.back()) return ref.rr.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), c) - t.begin());
    const std::size_t lo = hi - 1;
    if (t[hi] == t[lo]) return ref.rr[lo];
    const double w = (c - t[lo]) / (t[hi] - t[lo]);
    return ref.rr[lo] + w * (ref.rr[hi] - ref.rr[lo]);
}

struct EstimatePair {
    double estimate;
    double reference;
};

struct SubjectResult {
    std::string id;
    Method method = Method::cif;
    double t = 0.0;
    std::optional<double> rmse;  // absent when no window was retained
    double retention = 0.0;
    std::size_t retained_windows = 0;
    std::size_t total_windows = 0;
    std::vector<EstimatePair> pairs;
};

/// RMSE over retained windows and retained / total window ratio.
inline SubjectResult score_subject(std::span<const FusionResult> fusions, const ReferenceRr& reference,
                                   const WindowGrid& grid) {
    if (fusions.size() != grid.size()) throw ParameterError("score_subject: fusions must cover the window grid");
    SubjectResult r;
    r.total_windows = fusions.size();
    double ss = 0.0;
    for (std::size_t w = 0; w < fusions.size(); ++w) {
        if (!fusions[w].retained) continue;
        const double ref = reference_at(reference, grid.windows[w]);
        const double est = *fusions[w].rr_fusion;
        r.pairs.push_back({est, ref});
        ss += (est - ref) * (est - ref);
    }
    r.retained_windows = r.pairs.size();
    r.retention = r.total_windows == 0 ? 0.0
                                       : static_cast<double>(r.retained_windows) / static_cast<double>(r.total_windows);
    if (!r.pairs.empty()) r.rmse = std::sqrt(ss / static_cast<double>(r.pairs.size()));
    return r;
}

/// Percentile by linear interpolation between order statistics (q in [0, 1]).
inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw ParameterError("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

/// A recording analysed once, with its reference.
struct Subject {
    RecordAnalysis analysis;
    ReferenceRr reference;
};

inline SubjectResult evaluate_subject(const Subject& s, Method method, double t) {
    const auto fusions = fuse_all(s.analysis, method, t);
    SubjectResult r = score_subject(fusions, s.reference, s.analysis.grid);
    r.id = s.analysis.id;
    r.method = method;
    r.t = t;
    return r;
}

struct SweepRow {
    double t;
    std::optional<double> rmse_p25;
    std::optional<double> rmse_median;
    std::optional<double> rmse_p75;
    double retention_median;
};

/// Thresholds lo, lo + step, ... up to hi (inclusive, tolerant to rounding).
inline std::vector<double> threshold_grid(double lo = 0.0, double hi = 0.3, double step = 0.01) {
    if (!(step > 0.0) || lo > hi) throw ParameterError("threshold grid: need step > 0 and lo <= hi");
    std::vector<double> ts;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) ts.push_back(lo + static_cast<double>(i) * step);
    return ts;
}

/// One row per threshold: RMSE quartiles across subjects (subjects with no
/// retained window do not contribute an RMSE) and the median retention.
inline std::vector<SweepRow> sweep(std::span<const Subject> dataset, std::span<const double> t_grid,
                                   Method method = Method::cif) {
    if (dataset.empty()) throw ParameterError("sweep: empty dataset");
    std::vector<SweepRow> rows;
    for (double t : t_grid) {
        std::vector<double> rmses, retentions;
        for (const auto& s : dataset) {
            const auto r = evaluate_subject(s, method, t);
            if (r.rmse) rmses.push_back(*r.rmse);
            retentions.push_back(r.retention);
        }
        SweepRow row{t, std::nullopt, std::nullopt, std::nullopt, median(retentions)};
        if (!rmses.empty()) {
            row.rmse_p25 = percentile(rmses, 0.25);
            row.rmse_median = percentile(rmses, 0.5);
            row.rmse_p75 = percentile(rmses, 0.75);
        }
        rows.push_back(row);
    }
    return rows;
}

struct AgreementStats {
    std::optional<double> r;  // absent when either coordinate has zero variance
    double bias = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    std::size_t n_pairs = 0;
};

/// Bland-Altman bias and 95 % limits (sample SD of differences) plus Pearson r.
inline AgreementStats agreement_stats(std::span<const EstimatePair> pairs) {
    if (pairs.size() < 2) throw ParameterError("agreement: at least 2 pairs are required");
    const double n = static_cast<double>(pairs.size());
    double me = 0.0, mr = 0.0, md = 0.0;
    for (const auto& p : pairs) {
        me += p.estimate;
        mr += p.reference;
        md += p.estimate - p.reference;
    }
    me /= n;
    mr /= n;
    md /= n;
    double see = 0.0, srr = 0.0, ser = 0.0, sdd = 0.0;
    for (const auto& p : pairs) {
        const double de = p.estimate - me;
        const double dr = p.reference - mr;
        const double dd = (p.estimate - p.reference) - md;
        see += de * de;
        srr += dr * dr;
        ser += de * dr;
        sdd += dd * dd;
    }
    const double sd = std::sqrt(sdd / (n - 1.0));
    AgreementStats a;
    a.bias = md;
    a.loa_low = md - 1.96 * sd;
    a.loa_high = md + 1.96 * sd;
    a.n_pairs = pairs.size();
    if (see > 0.0 && srr > 0.0) a.r = std::clamp(ser / std::sqrt(see * srr), -1.0, 1.0);
    return a;
}

/// Throwing variant: UndefinedCorrelationError when r is undefined.
inline AgreementStats agreement(std::span<const EstimatePair> pairs) {
    AgreementStats a = agreement_stats(pairs);
    if (!a.r) throw UndefinedCorrelationError("agreement: zero variance, Pearson r undefined");
    return a;
}

namespace detail {

/// Mid-ranks (1-based) of |d| for nonzero differences.
inline std::vector<double> mid_ranks(std::span<const double> absd) {
    std::vector<std::size_t> order(absd.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return absd[a] < absd[b]; });
    std::vector<double> ranks(absd.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && absd[order[j + 1]] == absd[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Two-sided Wilcoxon signed-rank p-value for paired samples. Zero
/// differences are dropped and ties get mid-ranks. Up to 25 nonzero
/// differences the null distribution of W+ is enumerated exactly (counting
/// over doubled ranks so mid-ranks stay integral); above that the normal
/// approximation with tie and continuity corrections is used. Bonferroni
/// correction is left to the caller.
inline double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ParameterError("wilcoxon: samples must have equal length");
    if (a.size() < 6) throw ParameterError("wilcoxon: at least 6 pairs are required");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (diff != 0.0) d.push_back(diff);
    }
    if (d.empty()) return 1.0;
    std::vector<double> absd(d.size());
    std::transform(d.begin(), d.end(), absd.begin(), [](double x) { return std::abs(x); });
    const auto ranks = detail::mid_ranks(absd);
    const std::size_t n = d.size();

    if (n <= kWilcoxonExactLimit) {
        std::vector<long> doubled(n);
        long total = 0;
        long observed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = std::lround(2.0 * ranks[i]);
            total += doubled[i];
            if (d[i] > 0.0) observed += doubled[i];
        }
        // counts[s] = number of sign patterns with doubled W+ equal to s.
        std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
        counts[0] = 1.0;
        long reach = 0;
        for (long r : doubled) {
            reach += r;
            for (long s = reach; s >= r; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
        }
        double le = 0.0, ge = 0.0, all = 0.0;
        for (long s = 0; s <= total; ++s) {
            const double c = counts[static_cast<std::size_t>(s)];
            all += c;
            if (s <= observed) le += c;
            if (s >= observed) ge += c;
        }
        return std::min(1.0, 2.0 * std::min(le, ge) / all);
    }

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] > 0.0) w_plus += ranks[i];
    }
    const double dn = static_cast<double>(n);
    const double mean = dn * (dn + 1.0) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = absd;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace rrcif
