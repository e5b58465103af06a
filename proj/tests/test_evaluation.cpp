#include <rrcif/evaluation.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace rrcif;

namespace {

ReferenceRr constant_reference(double rr, double duration) {
    ReferenceRr ref;
    for (double t = 0.0; t <= duration + 1e-9; t += 2.0) {
        ref.times_s.push_back(t);
        ref.rr.push_back(rr);
    }
    return ref;
}

std::vector<FusionResult> fused(const std::vector<std::optional<double>>& rates) {
    std::vector<FusionResult> out;
    for (std::size_t w = 0; w < rates.size(); ++w) {
        FusionResult f;
        f.window_index = w;
        f.rr_fusion = rates[w];
        f.retained = rates[w].has_value();
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST(ReferenceAt, MeanInsideWindow) {
    ReferenceRr ref{{0, 10, 20, 30, 40}, {10, 12, 14, 16, 18}};
    EXPECT_DOUBLE_EQ(reference_at(ref, {0, 32}), 13.0);
    EXPECT_DOUBLE_EQ(reference_at(ref, {10, 42}), 15.0);
}

TEST(ReferenceAt, InterpolatesAtCentreWhenEmpty) {
    ReferenceRr ref{{0, 100}, {10, 20}};
    EXPECT_DOUBLE_EQ(reference_at(ref, {34, 66}), 15.0);
    ReferenceRr late{{200}, {9}};
    EXPECT_DOUBLE_EQ(reference_at(late, {0, 32}), 9.0);
}

TEST(ScoreSubject, PerfectEstimates) {
    const auto grid = WindowGrid::for_duration(480.0);
    ASSERT_EQ(grid.size(), 225u);
    const auto ref = constant_reference(15.0, 480.0);
    const auto r = score_subject(fused(std::vector<std::optional<double>>(225, 15.0)), ref, grid);
    EXPECT_EQ(*r.rmse, 0.0);
    EXPECT_EQ(r.retention, 1.0);
}

TEST(ScoreSubject, ConstantErrorAndPartialRetention) {
    const auto grid = WindowGrid::for_duration(480.0);
    const auto ref = constant_reference(15.0, 480.0);
    const auto r = score_subject(fused(std::vector<std::optional<double>>(225, 17.0)), ref, grid);
    EXPECT_NEAR(*r.rmse, 2.0, 1e-12);

    std::vector<std::optional<double>> partial(225);
    for (std::size_t i = 0; i < 90; ++i) partial[i * 2] = 15.0;
    const auto p = score_subject(fused(partial), ref, grid);
    EXPECT_DOUBLE_EQ(p.retention, 0.4);
    EXPECT_EQ(p.retained_windows, 90u);

    const auto none = score_subject(fused(std::vector<std::optional<double>>(225)), ref, grid);
    EXPECT_FALSE(none.rmse);
    EXPECT_EQ(none.retention, 0.0);
}

TEST(ScoreSubject, RmseMatchesDirectComputation) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> err(0.0, 2.0);
    const auto grid = WindowGrid::for_duration(200.0);
    const auto ref = constant_reference(12.0, 200.0);
    std::vector<std::optional<double>> rates(grid.size());
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (i % 3 == 0) continue;
        rates[i] = 12.0 + err(rng);
        ss += (*rates[i] - 12.0) * (*rates[i] - 12.0);
        ++n;
    }
    const auto r = score_subject(fused(rates), ref, grid);
    EXPECT_NEAR(*r.rmse, std::sqrt(ss / static_cast<double>(n)), 1e-12);
    EXPECT_GE(*r.rmse, 0.0);
    EXPECT_GE(r.retention, 0.0);
    EXPECT_LE(r.retention, 1.0);
}

TEST(Percentile, LinearBetweenOrderStatistics) {
    const std::vector<double> v{4, 1, 3, 2};
    EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(percentile(v, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile(v, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(median({7.0}), 7.0);
}

TEST(ThresholdGrid, DefaultAndCoarse) {
    const auto def = threshold_grid();
    ASSERT_EQ(def.size(), 31u);
    EXPECT_DOUBLE_EQ(def.front(), 0.0);
    EXPECT_NEAR(def.back(), 0.3, 1e-12);
    EXPECT_EQ(threshold_grid(0.0, 0.3, 0.1).size(), 4u);
    EXPECT_THROW(threshold_grid(0.3, 0.0, 0.01), ParameterError);
    EXPECT_THROW(threshold_grid(0.0, 0.3, 0.0), ParameterError);
}

TEST(Sweep, SingleSubjectAndMonotoneRetention) {
    SynthSpec s;
    s.duration_s = 120.0;
    s.depths = ModulationDepths::all(0.1);
    s.noise_sd = 0.1;
    const auto [rec, ref] = synthesize(s);
    const std::vector<Subject> data{{analyze(rec), ref}};
    const auto ts = threshold_grid(0.0, 0.6, 0.05);
    const auto rows = sweep(data, ts);
    ASSERT_EQ(rows.size(), ts.size());
    EXPECT_EQ(rows.front().retention_median, 1.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].rmse_median) {
            EXPECT_EQ(*rows[i].rmse_p25, *rows[i].rmse_median);
            EXPECT_EQ(*rows[i].rmse_p75, *rows[i].rmse_median);
        }
        if (i > 0) EXPECT_LE(rows[i].retention_median, rows[i - 1].retention_median);
    }
}

TEST(Agreement, IdentityAndBias) {
    std::vector<EstimatePair> same, shifted;
    for (int i = 0; i < 20; ++i) {
        same.push_back({10.0 + i, 10.0 + i});
        shifted.push_back({12.0 + i, 10.0 + i});
    }
    const auto a = agreement(same);
    EXPECT_NEAR(*a.r, 1.0, 1e-12);
    EXPECT_EQ(a.bias, 0.0);
    EXPECT_EQ(a.loa_low, 0.0);
    EXPECT_EQ(a.loa_high, 0.0);
    const auto b = agreement(shifted);
    EXPECT_NEAR(b.bias, 2.0, 1e-12);
    EXPECT_NEAR(b.loa_low, 2.0, 1e-12);
    EXPECT_NEAR(b.loa_high, 2.0, 1e-12);
    EXPECT_EQ(b.n_pairs, 20u);
}

TEST(Agreement, MatchesTextbookFormulas) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> rr(6.0, 40.0);
    std::normal_distribution<double> err(0.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> est, ref;
        std::vector<EstimatePair> pairs;
        for (int i = 0; i < 100; ++i) {
            ref.push_back(rr(rng));
            est.push_back(ref.back() + err(rng));
            pairs.push_back({est.back(), ref.back()});
        }
        const auto got = agreement(pairs);
        const auto want = oracle::agreement_direct(est, ref);
        ASSERT_NEAR(*got.r, want.r, 1e-9);
        ASSERT_NEAR(got.bias, want.bias, 1e-9);
        ASSERT_NEAR(got.loa_low, want.lo, 1e-9);
        ASSERT_NEAR(got.loa_high, want.hi, 1e-9);
        // Limits are symmetric about the bias.
        ASSERT_NEAR(got.loa_high - got.bias, got.bias - got.loa_low, 1e-9);
        ASSERT_LE(got.loa_low, got.bias);
        ASSERT_GE(*got.r, -1.0);
        ASSERT_LE(*got.r, 1.0);
    }
}

TEST(Agreement, ZeroVarianceIsUndefined) {
    std::vector<EstimatePair> flat(10, {15.0, 15.0});
    EXPECT_THROW(agreement(flat), UndefinedCorrelationError);
    EXPECT_FALSE(agreement_stats(flat).r);
}

TEST(Wilcoxon, Examples) {
    const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_EQ(wilcoxon_signed_rank(a, a), 1.0);
    std::vector<double> b;
    for (double x : a) b.push_back(x - 0.1 * x);
    // Every difference positive, n = 8: p = 2 / 2^8.
    EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(a, b), 0.0078125);
    EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}), ParameterError);
}

TEST(Wilcoxon, ExactMatchesEnumeration) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> len(6, 12), val(-4, 4);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<double> a(n), b(n);
        // Small integers force ties and zeros.
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = val(rng);
            b[i] = val(rng) * 0.5;
        }
        ASSERT_NEAR(wilcoxon_signed_rank(a, b), oracle::wilcoxon_enumerated(a, b), 1e-12);
        // Symmetric under swapping the samples.
        ASSERT_NEAR(wilcoxon_signed_rank(a, b), wilcoxon_signed_rank(b, a), 1e-12);
        const double p = wilcoxon_signed_rank(a, b);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
    }
}

TEST(Wilcoxon, NormalApproximationAboveExactLimit) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t n : {26u, 40u, 100u}) {
        std::vector<double> a(n), b(n, 0.0);
        for (double& x : a) x = noise(rng) + 0.3;
        // Continuous data: no ties, so the plain normal approximation applies.
        std::vector<std::pair<double, double>> by_abs;
        for (double x : a) by_abs.push_back({std::abs(x), x});
        std::sort(by_abs.begin(), by_abs.end());
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (by_abs[i].second > 0) w += static_cast<double>(i + 1);
        }
        const double dn = static_cast<double>(n);
        const double mu = dn * (dn + 1) / 4.0;
        const double sigma = std::sqrt(dn * (dn + 1) * (2 * dn + 1) / 24.0);
        const double z = (std::abs(w - mu) - 0.5) / sigma;
        const double want = std::min(1.0, 2.0 * 0.5 * std::erfc(z / std::sqrt(2.0)));
        EXPECT_NEAR(wilcoxon_signed_rank(a, b), want, 1e-12) << n;
    }
}

TEST(Wilcoxon, ExactAndNormalAgreeNearBoundary) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> noise(0.2, 1.0);
    std::vector<double> a(25), b(25, 0.0);
    for (double& x : a) x = noise(rng);
    const double exact = wilcoxon_signed_rank(a, b);
    a.push_back(1e-3);
    b.push_back(0.0);
    const double approx = wilcoxon_signed_rank(a, b);
    EXPECT_NEAR(exact, approx, 0.05);
}
