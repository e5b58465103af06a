#include <rrcif/preprocess.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace rrcif;

namespace {

PpgRecord tone(double hz, double fs, double seconds, double amplitude = 1.0) {
    std::vector<double> x(static_cast<std::size_t>(fs * seconds));
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / fs);
    }
    return PpgRecord("tone", fs, std::move(x));
}

SynthSpec clean(double hr, double seconds) {
    SynthSpec s;
    s.rr = 15.0;
    s.hr = hr;
    s.duration_s = seconds;
    return s;
}

void expect_beat_invariants(const std::vector<Beat>& beats) {
    for (std::size_t i = 0; i < beats.size(); ++i) {
        const auto& b = beats[i];
        ASSERT_LT(b.t_foot, b.t_peak);
        ASSERT_GT(b.v_peak, b.v_foot);
        ASSERT_GT(b.width50, 0.0);
        ASSERT_GT(b.rise25_75, 0.0);
        if (i > 0) {
            ASSERT_GT(b.t_peak, beats[i - 1].t_peak);
            ASSERT_TRUE(b.period.has_value());
        }
    }
    ASSERT_FALSE(beats.front().period.has_value());
}

}  // namespace

TEST(Butterworth, ResponseShape) {
    const auto sos = butterworth_bandpass(3, 0.4, 8.0, 100.0);
    ASSERT_EQ(sos.size(), 3u);
    EXPECT_NEAR(magnitude_response(sos, std::sqrt(0.4 * 8.0), 100.0), 1.0, 1e-9);
    EXPECT_NEAR(magnitude_response(sos, 0.4, 100.0), std::sqrt(0.5), 1e-6);
    EXPECT_NEAR(magnitude_response(sos, 8.0, 100.0), std::sqrt(0.5), 1e-6);
    EXPECT_LT(magnitude_response(sos, 0.0, 100.0), 1e-12);
    EXPECT_THROW(butterworth_bandpass(3, 0.4, 8.0, 12.0), ParameterError);
}

TEST(Bandpass, DriftAttenuatedAtLeast20dB) {
    // 0.05 Hz over 200 s at 100 Hz; measured by least-squares tone fit.
    const auto in = tone(0.05, 100.0, 200.0);
    const auto out = bandpass(in);
    const double gain = oracle::tone_amplitude(out.samples(), 100.0, 0.05) /
                        oracle::tone_amplitude(in.samples(), 100.0, 0.05);
    EXPECT_LT(20.0 * std::log10(gain), -20.0);
}

TEST(Bandpass, CardiacTonePreservedWithin1dB) {
    const auto in = tone(1.3, 100.0, 60.0, 2.5);
    const auto out = bandpass(in);
    ASSERT_EQ(out.size(), in.size());
    const double gain = oracle::tone_amplitude(out.samples(), 100.0, 1.3) / 2.5;
    EXPECT_LT(std::abs(20.0 * std::log10(gain)), 1.0);
}

TEST(Bandpass, ConstantGivesZeros) {
    const PpgRecord flat("c", 50.0, std::vector<double>(1000, 3.7));
    const auto out = bandpass(flat);
    for (double v : out.samples()) ASSERT_NEAR(v, 0.0, 1e-9);
}

TEST(Bandpass, OutputMeanRemoved) {
    SynthSpec s = clean(75.0, 40.0);
    s.depths = ModulationDepths::all(0.2);
    s.noise_sd = 0.05;
    const auto [rec, ref] = synthesize(s);
    const auto out = bandpass(rec);
    double mean = 0, sd = 0;
    for (double v : out.samples()) mean += v;
    mean /= static_cast<double>(out.size());
    for (double v : out.samples()) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / static_cast<double>(out.size()));
    EXPECT_LT(std::abs(mean), 1e-6 * sd);
}

TEST(Bandpass, LowRateRejected) {
    const PpgRecord slow("s", 20.0, std::vector<double>(500, 0.0));
    EXPECT_THROW(bandpass(slow), UnsupportedRateError);
}

TEST(SegmentBeats, EightyBeatsPerMinute) {
    const auto [rec, ref] = synthesize(clean(80.0, 60.0));
    const auto beats = segment_beats(bandpass(rec), &rec);
    EXPECT_NEAR(static_cast<double>(beats.size()), 80.0, 1.0);
    expect_beat_invariants(beats);
}

TEST(SegmentBeats, PeriodsMatchGeneratorWithoutFrequencyModulation) {
    SynthSpec s = clean(80.0, 60.0);
    s.depths = {0.1, 0.1, 0.0, 0.1, 0.1};
    const auto [rec, ref] = synthesize(s);
    const auto beats = segment_beats(bandpass(rec), &rec);
    for (const auto& b : beats) {
        if (b.period) ASSERT_NEAR(*b.period, 0.75, 0.0075);
    }
}

TEST(SegmentBeats, FlatlineIsInsufficient) {
    const PpgRecord flat("f", 100.0, std::vector<double>(3000, 0.0));
    EXPECT_THROW(segment_beats(flat), InsufficientSignalError);
}

TEST(SegmentBeats, StableUnderSmallNoise) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthSpec s = clean(70.0 + 5.0 * static_cast<double>(seed), 120.0);
        s.depths = ModulationDepths::all(0.1);
        const auto [rec, ref] = synthesize(s);
        const auto n0 = segment_beats(bandpass(rec)).size();
        s.noise_sd = 0.01;
        s.seed = seed;
        const auto [noisy, ref2] = synthesize(s);
        const auto n1 = segment_beats(bandpass(noisy)).size();
        EXPECT_LE(std::abs(static_cast<double>(n1) - static_cast<double>(n0)), 0.02 * static_cast<double>(n0));
    }
}

TEST(SegmentBeats, InvariantsHoldOnRandomSpecs) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> rr(6.0, 40.0), depth(0.0, 0.3), noise(0.0, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        SynthSpec s;
        s.rr = rr(rng);
        s.hr = std::uniform_real_distribution<double>(2.2 * s.rr + 10.0, 2.2 * s.rr + 60.0)(rng);
        s.hr = std::min(s.hr, 180.0);
        s.duration_s = 60.0;
        s.depths = {depth(rng), depth(rng), depth(rng), depth(rng), depth(rng)};
        s.noise_sd = noise(rng);
        s.seed = static_cast<std::uint64_t>(trial);
        const auto [rec, ref] = synthesize(s);
        const auto beats = flag_artifacts(segment_beats(bandpass(rec), &rec));
        SCOPED_TRACE(trial);
        expect_beat_invariants(beats);
    }
}

TEST(FlagArtifacts, CleanTrainUnflagged) {
    SynthSpec s = clean(75.0, 120.0);
    s.depths = ModulationDepths::all(0.1);
    const auto [rec, ref] = synthesize(s);
    const auto beats = flag_artifacts(segment_beats(bandpass(rec), &rec));
    for (const auto& b : beats) EXPECT_FALSE(b.artifact);
}

TEST(FlagArtifacts, TripledAmplitudeFlagsExactlyThatBeat) {
    const auto [rec, ref] = synthesize(clean(75.0, 60.0));
    auto beats = segment_beats(bandpass(rec), &rec);
    const std::size_t target = 20;
    beats[target].v_peak = beats[target].v_foot + 3.0 * beats[target].amplitude();
    const auto flagged = flag_artifacts(beats);
    for (std::size_t i = 0; i < flagged.size(); ++i) EXPECT_EQ(flagged[i].artifact, i == target) << i;
}

TEST(FlagArtifacts, IdenticalBeatsUnflagged) {
    std::vector<Beat> beats;
    for (int i = 0; i < 15; ++i) {
        Beat b{0.1 + i * 0.8, -0.5, 0.3 + i * 0.8, 0.5, 0.25, 0.1, std::nullopt, true, 0};
        if (i > 0) b.period = 0.8;
        beats.push_back(b);
    }
    for (const auto& b : flag_artifacts(beats)) EXPECT_FALSE(b.artifact);
}

TEST(FlagArtifacts, LongPeriodAndClippingFlagged) {
    std::vector<Beat> beats;
    for (int i = 0; i < 20; ++i) {
        Beat b{0.1 + i * 0.8, -0.5, 0.3 + i * 0.8, 0.5, 0.25, 0.1, std::nullopt, false, 0};
        if (i > 0) b.period = 0.8;
        beats.push_back(b);
    }
    beats[12].period = 1.6;
    beats[5].clipped_run = 3;
    beats[7].clipped_run = 2;
    const auto f = flag_artifacts(beats);
    EXPECT_TRUE(f[12].artifact);
    EXPECT_TRUE(f[5].artifact);
    EXPECT_FALSE(f[7].artifact);
    EXPECT_FALSE(f[13].artifact);
}

TEST(FlagArtifacts, Idempotent) {
    SynthSpec s = clean(90.0, 90.0);
    s.depths = ModulationDepths::all(0.3);
    s.noise_sd = 0.3;
    const auto [rec, ref] = synthesize(s);
    auto beats = segment_beats(bandpass(rec), &rec);
    beats[10].v_peak += 5.0;
    const auto once = flag_artifacts(beats);
    const auto twice = flag_artifacts(once);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].artifact, twice[i].artifact);
}

TEST(SegmentBeats, SaturatedRunCounted) {
    auto [rec, ref] = synthesize(clean(75.0, 30.0));
    auto x = rec.samples();
    const double top = *std::max_element(x.begin(), x.end());
    for (std::size_t i = 1500; i < 1506; ++i) x[i] = top;
    const PpgRecord clipped = rec.with_samples(x);
    const auto beats = flag_artifacts(segment_beats(bandpass(clipped), &clipped));
    bool any = false;
    for (const auto& b : beats) any = any || (b.clipped_run >= 3 && b.artifact);
    EXPECT_TRUE(any);
}
