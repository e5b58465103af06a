#include <rrcif/signal_io.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

using namespace rrcif;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "rrcif_signal_io_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string ppg_csv(double fs, std::size_t n) {
    std::ostringstream os;
    os.precision(17);
    os << "t,ppg\n";
    for (std::size_t i = 0; i < n; ++i) os << static_cast<double>(i) / fs << "," << std::sin(0.1 * i) << "\n";
    return os.str();
}

}  // namespace

TEST(ReadRecord, CsvAt100HzFor8Seconds) {
    std::istringstream in(ppg_csv(100.0, 800));
    const auto rec = parse_record_csv(in, "r1");
    EXPECT_EQ(rec.size(), 800u);
    EXPECT_NEAR(rec.fs(), 100.0, 1e-9);
    EXPECT_NEAR(rec.duration_s(), 8.0, 1e-9);
    EXPECT_DOUBLE_EQ(rec.samples()[3], std::sin(0.3));
}

TEST(ReadRecord, EightMinuteExportHasDuration480) {
    // CapnoBase-style 300 Hz export, 8 minutes.
    std::istringstream in(ppg_csv(300.0, 300 * 480));
    const auto rec = parse_record_csv(in, "0009_8min");
    EXPECT_NEAR(rec.duration_s(), 480.0, 1e-6);
}

TEST(ReadRecord, CrlfCommentsAndBomAccepted) {
    std::istringstream in("\xEF\xBB\xBF# exported\r\nt,ppg\r\n0,1.5\r\n0.04,2\r\n\r\n0.08,2.5\r\n");
    const auto rec = parse_record_csv(in, "x");
    ASSERT_EQ(rec.size(), 3u);
    EXPECT_NEAR(rec.fs(), 25.0, 1e-9);
}

TEST(ReadRecord, NanSampleIsValidationError) {
    std::istringstream in("t,ppg\n0,1\n0.01,nan\n0.02,1\n");
    EXPECT_THROW(parse_record_csv(in, "x"), ValidationError);
}

TEST(ReadRecord, MalformedFieldNamesLine) {
    std::istringstream in("t,ppg\n0,1\n0.01,abc\n");
    try {
        parse_record_csv(in, "x");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("ppg"), std::string::npos);
    }
}

TEST(ReadRecord, WrongHeaderAndNonUniformStepRejected) {
    std::istringstream bad_header("time,ppg\n0,1\n");
    EXPECT_THROW(parse_record_csv(bad_header, "x"), ParseError);
    std::istringstream jitter("t,ppg\n0,1\n0.01,1\n0.0201,1\n0.03,1\n");
    EXPECT_THROW(parse_record_csv(jitter, "x"), ValidationError);
    std::istringstream extra("t,ppg\n0,1,2\n");
    EXPECT_THROW(parse_record_csv(extra, "x"), ParseError);
}

TEST(ReadRecord, MissingFileIsIoError) {
    EXPECT_THROW(read_record("/nonexistent/rrcif.csv", RecordFormat::csv), IoError);
}

TEST(ReadRecord, JsonWithReference) {
    std::istringstream in(R"({"id":"s1","fs":50,"samples":[1,2,3,4],"reference":{"t":[0,0.05],"rr":[12,13]}})");
    const auto r = parse_recording_json(in);
    EXPECT_EQ(r.record.id(), "s1");
    EXPECT_EQ(r.record.size(), 4u);
    ASSERT_TRUE(r.reference);
    EXPECT_EQ(r.reference->rr[1], 13.0);
    std::istringstream missing(R"({"id":"s1","samples":[1]})");
    EXPECT_THROW(parse_recording_json(missing), ParseError);
    std::istringstream bad(R"({"id":"s1","fs":50,"samples":[1,"x"]})");
    EXPECT_THROW(parse_recording_json(bad), ParseError);
}

TEST(ReadReference, TwoRows) {
    std::istringstream in("t,rr\n0,20\n2,20\n");
    const auto ref = parse_reference_csv(in);
    EXPECT_EQ(ref.size(), 2u);
}

TEST(ReadReference, ErrorCases) {
    std::istringstream high("t,rr\n0,20\n2,150\n");
    EXPECT_THROW(parse_reference_csv(high), ValidationError);
    std::istringstream empty("t,rr\n");
    EXPECT_THROW(parse_reference_csv(empty), ValidationError);
    std::istringstream decreasing("t,rr\n4,20\n2,20\n");
    EXPECT_THROW(parse_reference_csv(decreasing), ValidationError);
}

TEST(PpgRecord, Invariants) {
    EXPECT_THROW(PpgRecord("x", 0.0, {1.0}), ValidationError);
    EXPECT_THROW(PpgRecord("x", 100.0, {}), ValidationError);
    EXPECT_THROW(PpgRecord("x", 100.0, {1.0, std::numeric_limits<double>::infinity()}), ValidationError);
    const PpgRecord r("x", 4.0, std::vector<double>(10, 0.0));
    EXPECT_EQ(r.duration_s(), 2.5);
}

TEST(RoundTrip, CsvAndJsonPreserveSamples) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist(0.0, 1e3);
    for (double fs : {25.0, 100.0, 300.0, 125.0}) {
        std::vector<double> x(997);
        for (double& v : x) v = dist(rng);
        const PpgRecord rec("rt", fs, x);
        for (auto format : {RecordFormat::csv, RecordFormat::json}) {
            const auto path = temp_dir() / (format == RecordFormat::csv ? "rt.ppg.csv" : "rt.json");
            write_record(rec, path, format);
            const auto back = read_record(path, format);
            ASSERT_EQ(back.size(), x.size());
            EXPECT_NEAR(back.fs(), fs, 1e-9 * fs);
            for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(back.samples()[i], x[i], 1e-9 * std::abs(x[i]));
        }
    }
}

TEST(Synthesize, DeterministicForEqualSeeds) {
    SynthSpec spec;
    spec.duration_s = 30.0;
    spec.depths = ModulationDepths::all(0.1);
    spec.noise_sd = 0.05;
    const auto [a, ra] = synthesize(spec);
    const auto [b, rb] = synthesize(spec);
    EXPECT_EQ(a.samples(), b.samples());
    spec.seed = 2;
    const auto [c, rc] = synthesize(spec);
    EXPECT_NE(a.samples(), c.samples());
}

TEST(Synthesize, ReferenceConstantEveryTwoSeconds) {
    SynthSpec spec;
    spec.rr = 18.0;
    spec.hr = 72.0;
    spec.duration_s = 60.0;
    const auto [rec, ref] = synthesize(spec);
    EXPECT_EQ(rec.size(), 6000u);
    ASSERT_EQ(ref.size(), 31u);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        EXPECT_EQ(ref.times_s[i], 2.0 * static_cast<double>(i));
        EXPECT_EQ(ref.rr[i], 18.0);
    }
    ref.validate(rec.duration_s());
}

TEST(Synthesize, UnmodulatedTrainIsPeriodic) {
    SynthSpec spec;
    spec.rr = 20.0;
    spec.hr = 80.0;  // 75 samples per beat at 100 Hz
    spec.duration_s = 30.0;
    const auto [rec, ref] = synthesize(spec);
    const auto& x = rec.samples();
    for (std::size_t i = 300; i + 75 < x.size() - 300; ++i) ASSERT_NEAR(x[i], x[i + 75], 1e-9);
}

TEST(Synthesize, RejectsInvalidSpecs) {
    SynthSpec spec;
    spec.rr = 3.0;
    EXPECT_THROW(synthesize(spec), ParameterError);
    spec.rr = 45.0;
    spec.hr = 90.0;  // hr must exceed 2 rr
    EXPECT_THROW(synthesize(spec), ParameterError);
    spec = SynthSpec{};
    spec.depths.width = 1.5;
    EXPECT_THROW(synthesize(spec), ParameterError);
}

TEST(GaussianSource, MomentsAndReproducibility) {
    GaussianSource g(42), h(42);
    double s = 0, ss = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = g();
        ASSERT_EQ(v, h());
        s += v;
        ss += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(ss / n, 1.0, 0.02);
}
