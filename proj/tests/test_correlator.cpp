#include "fixtures.hpp"
#include "oracles.hpp"
#include "qdas/correlator.hpp"
#include "qdas/pipeline.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace qdas;

namespace {

constexpr double kPi = std::numbers::pi;

RawCapture single_tap_capture(const LegendreCode& code, int os, double delay, double periods,
                              std::complex<double> amp = 1.0) {
    Tap t;
    t.delay = delay;
    t.amplitude = amp;
    CaptureRequest r;
    r.sample_rate = os / code.chip_duration;
    r.duration = periods * code.period_duration();
    r.oversampling = os;
    return simulate_capture({t}, synthesize_waveform(code, os), {}, {}, r);
}

PeakTrack track(int sensor, int peak, std::vector<cplx> v) {
    PeakTrack t;
    t.ref = {sensor, peak};
    t.values = std::move(v);
    return t;
}

std::vector<SpectrumReport> noiseless_ladder_spectra(const std::vector<Excitation>& ex, double duration,
                                                    Window w = Window::none) {
    const auto s = fixtures::ladder_scenario();
    const auto d = demodulate(simulate_scenario(s, ex, {}, duration), s);
    std::vector<SpectrumReport> out;
    for (const auto& p : d.phases) out.push_back(spectrum(p, w));
    return out;
}

double db(double ratio) { return 10.0 * std::log10(ratio); }

}  // namespace

TEST(Segment, Examples) {
    const auto code = legendre_sequence(103);
    EXPECT_EQ(segment_periods(single_tap_capture(code, 2, 0, 1.0), code).rows(), 1u);
    const auto cap = single_tap_capture(code, 2, 0, 2.5);
    const auto m = segment_periods(cap, code);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 206u);
    EXPECT_EQ(m(1, 5), cap.samples[206 + 5]);
    RawCapture tiny;
    tiny.oversampling = 2;
    tiny.samples.resize(100);
    EXPECT_THROW(segment_periods(tiny, code), DecodeError);
}

TEST(Segment, LadderFifteenMillisecondsIs187Rows) {
    const auto s = fixtures::ladder_scenario();
    RawCapture cap;
    cap.oversampling = 4;
    cap.sample_rate = 200e6;
    cap.samples.resize(static_cast<std::size_t>(std::llround(15e-3 * 200e6)));
    EXPECT_EQ(segment_periods(cap, *s.code).rows(), 187u);
}

TEST(Correlate, SingleTapNoiselessMainLobeOnly) {
    const auto code = legendre_sequence(4003);
    const int os = 4;
    const auto prof = correlate_profile(segment_periods(single_tap_capture(code, os, 0.0, 3.0), code), code, os,
                                        ReferenceMode::perfect);
    ASSERT_EQ(prof.periods(), 3u);
    const std::size_t P = prof.bins();
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_NEAR(prof.traces(r, 0).real(), (code.n + 1.0) * os, 1e-6);
        for (std::size_t b = 1; b < P; ++b) {
            const std::size_t d = std::min(b, P - b);
            // triangular main lobe: partial-chip overlap times n+1
            const double want = d < static_cast<std::size_t>(os) ? (code.n + 1.0) * (os - double(d)) : 0.0;
            ASSERT_NEAR(std::abs(prof.traces(r, b)), want, 1e-6) << b;
        }
    }
    EXPECT_DOUBLE_EQ(prof.meters_per_bin, 1.0);
}

TEST(Correlate, NoCodeNoiseFloorSpotLengths) {
    for (int n : {7, 19, 103, 991}) {
        const auto code = legendre_sequence(n);
        for (int os : {1, 4}) {
            const auto prof = correlate_profile(segment_periods(single_tap_capture(code, os, 37 * 5e-9, 1.0), code),
                                                code, os, ReferenceMode::perfect);
            const std::size_t P = prof.bins(), peak = static_cast<std::size_t>(std::llround(37 * 5e-9 * os / 20e-9)) % P;
            const double top = std::abs(prof.traces(0, peak));
            for (std::size_t b = 0; b < P; ++b) {
                const std::size_t d = std::min((b + P - peak) % P, (peak + P - b) % P);
                if (d >= static_cast<std::size_t>(os)) ASSERT_LT(std::abs(prof.traces(0, b)), 1e-6 * top) << n << " " << b;
            }
        }
    }
}

TEST(Correlate, SpotLength1009IsNotAValidLegendreLength) {
    // 1009 is prime but 1 mod 4; 991 is the largest valid length below it
    EXPECT_FALSE(is_valid_length(1009));
    EXPECT_TRUE(is_valid_length(991));
    for (int n = 992; n <= 1009; ++n) EXPECT_FALSE(is_valid_length(n));
}

TEST(Correlate, MatchedModeHasMinusOneFloor) {
    const auto code = legendre_sequence(103);
    const auto prof = correlate_profile(segment_periods(single_tap_capture(code, 1, 0.0, 1.0), code), code, 1,
                                        ReferenceMode::matched);
    EXPECT_NEAR(prof.traces(0, 0).real(), 103.0, 1e-9);
    for (std::size_t b = 1; b < 103; ++b) ASSERT_NEAR(prof.traces(0, b).real(), -1.0, 1e-9);
}

TEST(Correlate, ZeroRowsAndMismatch) {
    const auto code = legendre_sequence(19);
    const ComplexMatrix zeros(3, 19 * 2);
    const auto prof = correlate_profile(zeros, code, 2, ReferenceMode::perfect);
    for (std::size_t r = 0; r < 3; ++r)
        for (auto v : prof.traces.row(r)) ASSERT_EQ(std::abs(v), 0.0);
    EXPECT_THROW(correlate_profile(ComplexMatrix(1, 19), code, 2, ReferenceMode::perfect), LengthMismatchError);
}

TEST(Correlate, RowsMatchNaiveOracleAndThreadCount) {
    const auto code = legendre_sequence(211);
    std::mt19937_64 rng(3);
    ComplexMatrix rows(9, 211 * 3);
    for (std::size_t r = 0; r < 9; ++r)
        for (auto& v : rows.row(r)) v = oracle::random_complex(1, rng)[0];
    const auto ref = oversampled_reference(code, 3, ReferenceMode::perfect);
    const auto one = correlate_rows(rows, ref, 1);
    const auto four = correlate_rows(rows, ref, 4);
    for (std::size_t r = 0; r < 9; ++r) {
        const auto naive = periodic_correlation_naive<cplx>(rows.row(r), std::span<const cplx>(ref)).values;
        for (std::size_t b = 0; b < naive.size(); ++b) {
            ASSERT_NEAR(std::abs(one(r, b) - naive[b]), 0.0, 1e-9 * (1.0 + std::abs(naive[b])));
            ASSERT_EQ(one(r, b), four(r, b));
        }
    }
}

TEST(Profile, ThreeSensorEightPeaksAtResidueBins) {
    const auto s = fixtures::ladder_scenario();
    const auto cap = simulate_scenario(s, {}, {}, 3 * s.code->period_duration());
    const auto prof = correlate_profile(segment_periods(cap, *s.code), *s.code, 4, ReferenceMode::perfect);
    const auto residues = roundtrip_delays(s);
    const auto tracks = locate_peaks(prof, residues, {2, 6.0});
    ASSERT_EQ(tracks.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i)
        EXPECT_EQ(tracks[i].bin, static_cast<std::size_t>(std::llround(residues.peaks[i].residue * 200e6)));
    const std::size_t want[] = {2000, 2212, 3964, 4079, 7892, 8022, 8152, 8282};
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(tracks[i].bin, want[i]);

    const auto pp = average_power_profile(prof);
    const auto peaks = find_profile_peaks(pp.db, 6.0, 4);
    ASSERT_EQ(peaks.size(), 8u);
    EXPECT_DOUBLE_EQ(pp.distance_m[peaks[1]] - pp.distance_m[peaks[0]], 212.0);
    EXPECT_DOUBLE_EQ(pp.distance_m[peaks[3]] - pp.distance_m[peaks[2]], 115.0);
    for (int k = 5; k < 8; ++k) EXPECT_DOUBLE_EQ(pp.distance_m[peaks[k]] - pp.distance_m[peaks[k - 1]], 130.0);
}

TEST(Profile, SingleAndEqualTaps) {
    const auto code = legendre_sequence(1019);
    auto prof = correlate_profile(segment_periods(single_tap_capture(code, 4, 1e-6, 2.0), code), code, 4,
                                  ReferenceMode::perfect);
    auto pp = average_power_profile(prof);
    auto peaks = find_profile_peaks(pp.db, 6.0, 4);
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_EQ(peaks[0], 200u);
    EXPECT_DOUBLE_EQ(pp.db[200], 0.0);

    const auto s = fixtures::single_mzi(500.0, 300.0, 1019);
    const auto cap = simulate_scenario(s, {}, {}, 2 * s.code->period_duration());
    pp = average_power_profile(correlate_profile(segment_periods(cap, *s.code), *s.code, 4, ReferenceMode::perfect));
    peaks = find_profile_peaks(pp.db, 6.0, 4);
    ASSERT_EQ(peaks.size(), 2u);
    EXPECT_NEAR(pp.db[peaks[0]], pp.db[peaks[1]], 0.1);
}

TEST(LocatePeaks, MissingTapAndTolerance) {
    const auto code = legendre_sequence(1019);
    const auto prof = correlate_profile(segment_periods(single_tap_capture(code, 4, 1e-6, 2.0), code), code, 4,
                                        ReferenceMode::perfect);
    ResidueSet present{code.period_duration(), {{{1, 0}, 1e-6, 1e-6}}};
    EXPECT_EQ(locate_peaks(prof, present).at(0).bin, 200u);

    ResidueSet absent{code.period_duration(), {{{1, 0}, 0, 5e-6}}};
    EXPECT_THROW(locate_peaks(prof, absent), DecodeError);

    // 4.6 bins off: tolerance 0 looks only at round(residue) = 205, outside
    // the main lobe
    ResidueSet off{code.period_duration(), {{{1, 0}, 0, 1e-6 + 4.6 * 5e-9}}};
    EXPECT_THROW(locate_peaks(prof, off, {0, 6.0}), DecodeError);
    EXPECT_EQ(locate_peaks(prof, off, {5, 6.0}).at(0).bin, 200u);
    // 1.4 bins off: tolerance 0 returns the single rounded bin, inside the lobe
    ResidueSet near{code.period_duration(), {{{1, 0}, 0, 1e-6 + 1.4 * 5e-9}}};
    EXPECT_EQ(locate_peaks(prof, near, {0, 6.0}).at(0).bin, 201u);
}

TEST(LocatePeaks, Collision) {
    const auto code = legendre_sequence(1019);
    const auto prof = correlate_profile(segment_periods(single_tap_capture(code, 4, 1e-6, 2.0), code), code, 4,
                                        ReferenceMode::perfect);
    ResidueSet two{code.period_duration(), {{{1, 0}, 0, 1e-6}, {{2, 0}, 0, 1e-6 + 5e-9}}};
    EXPECT_THROW(locate_peaks(prof, two, {2, 6.0}), DecodeError);
}

TEST(DifferentialPhase, Examples) {
    std::mt19937_64 rng(8);
    const auto a = oracle::random_complex(50, rng);
    auto p = differential_phase(track(1, 0, a), track(1, 1, a), 100.0);
    for (double v : p.phases) EXPECT_NEAR(v, 0.0, 1e-15);
    std::vector<cplx> b(a);
    for (auto& v : b) v *= std::polar(1.0, kPi / 3);
    p = differential_phase(track(1, 0, a), track(1, 1, b), 100.0);
    for (double v : p.phases) EXPECT_NEAR(v, kPi / 3, 1e-12);
    EXPECT_EQ(p.sensor_id, 1);
    EXPECT_EQ(p.scan_rate, 100.0);
    b.pop_back();
    EXPECT_THROW(differential_phase(track(1, 0, a), track(1, 1, b), 100.0), LengthMismatchError);
    EXPECT_THROW(differential_phase(track(1, 0, a), track(2, 1, a), 100.0), DecodeError);
}

TEST(DifferentialPhase, RingConsecutivePassesRecoverUnitPhase) {
    // pass m carries m * phi; each consecutive pair differs by phi
    std::vector<PeakTrack> tr;
    const std::vector<double> phi{0.1, 0.5, 1.1, 1.9, 2.8, 3.5, 2.6, 1.4};
    for (int m = 0; m < 4; ++m) {
        std::vector<cplx> v;
        for (double f : phi) v.push_back(std::polar(std::pow(0.5, m), m * f + 0.4));
        tr.push_back(track(3, m, v));
    }
    const auto p = sensor_phase(tr, 1.0);
    for (std::size_t k = 0; k < phi.size(); ++k) EXPECT_NEAR(p.phases[k], phi[k], 1e-12);
}

TEST(Unwrap, Examples) {
    const std::vector<double> x{0.0, kPi - 0.1, -kPi + 0.1};
    const auto u = unwrap(x);
    EXPECT_DOUBLE_EQ(u[0], 0.0);
    EXPECT_DOUBLE_EQ(u[1], kPi - 0.1);
    EXPECT_NEAR(u[2], kPi + 0.1, 1e-12);
    const std::vector<double> smooth{0.0, 0.3, 0.1, -0.5, -1.0};
    EXPECT_EQ(unwrap(smooth), smooth);
    EXPECT_TRUE(unwrap(std::vector<double>{}).empty());
}

TEST(Unwrap, SawtoothRampRestored) {
    std::vector<double> wrapped, ramp;
    for (int k = 0; k < 200; ++k) {
        ramp.push_back(0.5 * k);
        wrapped.push_back(std::remainder(0.5 * k, 2 * kPi));
    }
    const auto u = unwrap(wrapped);
    for (int k = 0; k < 200; ++k) ASSERT_NEAR(u[k], ramp[k], 1e-9);
}

// Any series with steps below pi survives wrap -> unwrap up to the offset of
// its first sample.
TEST(Unwrap, PropertyRandomWalks) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> step(-3.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x{std::uniform_real_distribution<double>(-kPi, kPi)(rng)};
        for (int k = 1; k < 300; ++k) x.push_back(x.back() + step(rng));
        std::vector<double> w;
        for (double v : x) w.push_back(std::arg(std::polar(1.0, v)));
        const auto u = unwrap(w);
        for (std::size_t k = 0; k < x.size(); ++k) ASSERT_NEAR(u[k] - u[0], x[k] - x[0], 1e-9);
    }
}

TEST(Spectrum, PureToneDominantWithinOneBin) {
    const double fs = 1.0 / (4003 * 20e-9);
    PhaseSeries s{2, {}, fs};
    for (int k = 0; k < 312; ++k) s.phases.push_back(std::sin(2 * kPi * 2500.0 * k / fs));
    const auto r = spectrum(s);
    ASSERT_TRUE(r.dominant_tone);
    const double df = fs / 312;
    EXPECT_LE(std::abs(*r.dominant_tone - 2500.0), df);
    EXPECT_LT(df, 40.1);
    EXPECT_DOUBLE_EQ(r.frequencies.front(), 0.0);
    EXPECT_NEAR(r.frequencies.back(), fs / 2, 1e-9);
    EXPECT_EQ(r.psd_db.size(), r.frequencies.size());
    EXPECT_DOUBLE_EQ(r.psd_db[r.dominant_bin], 0.0);
    EXPECT_GT(r.snr_db, 22.0);
}

TEST(Spectrum, OnBinAmplitudeMatchesDirectDft) {
    PhaseSeries s{1, {}, 1000.0};
    for (int k = 0; k < 256; ++k) s.phases.push_back(0.8 * std::cos(2 * kPi * 32 * k / 256.0 + 0.3) + 0.1);
    const auto r = spectrum(s);
    EXPECT_EQ(r.dominant_bin, 32u);
    EXPECT_NEAR(r.peak_amplitude, 0.8, 1e-12);
    EXPECT_NEAR(std::sqrt(r.power[32]), oracle::dft_amplitude(s.phases, 32), 1e-12);
    const auto h = spectrum(s, Window::hann);
    EXPECT_EQ(h.dominant_bin, 32u);
    EXPECT_NEAR(h.peak_amplitude, 0.8, 1e-12);
    EXPECT_NEAR(tone_power(r, 125.0), 0.64, 1e-12);
}

TEST(Spectrum, DegenerateAndShort) {
    PhaseSeries z{1, std::vector<double>(64, 0.0), 100.0};
    EXPECT_TRUE(spectrum(z).degenerate());
    EXPECT_FALSE(spectrum(z).dominant_tone);
    PhaseSeries c{1, std::vector<double>(64, 1.7), 100.0};
    EXPECT_TRUE(spectrum(c).degenerate());
    PhaseSeries s{1, std::vector<double>(7, 0.1), 100.0};
    EXPECT_THROW(spectrum(s), DecodeError);
}

// Noiseless loopback through simulator and decoder. The decoder sees the
// code-weighted average of exp(i*phi) over each period, so the oracle is
// that average computed directly from the excitation, and the recovered
// amplitude is A * sinc(pi f tau_p).
TEST(Loopback, MziMatchesPeriodIntegratedOracle) {
    const double A = 1.0, f = 2500.0;
    const auto s = fixtures::single_mzi();
    const auto cap = simulate_scenario(s, {{1, f, A, 0.0}}, {}, 25e-3);
    const auto d = demodulate(cap, s);
    ASSERT_EQ(d.phases.size(), 1u);
    const auto& ph = d.phases[0].phases;
    ASSERT_EQ(ph.size(), 312u);

    const auto& code = *s.code;
    const std::size_t P = 16012, delay = 2212;  // sensing arm at 1060 m of path
    const double fs = 200e6, tp = code.period_duration();
    double sq = 0.0, sn = 0.0, cs = 0.0, ss = 0.0, cc = 0.0, worst = 0.0;
    for (std::size_t p = 0; p < ph.size(); ++p) {
        cplx acc{};
        for (std::size_t k = 0; k < P; ++k) {
            const std::size_t g = p * P + k;
            if (code.chips[((g + P - delay) % P) / 4] > 0) acc += std::polar(1.0, A * std::sin(2 * kPi * f * g / fs));
        }
        const double err = ph[p] - std::arg(acc);
        sq += err * err;
        worst = std::max(worst, std::abs(err));
        const double t = (p + 0.5) * tp;
        sn += ph[p] * std::sin(2 * kPi * f * t);
        cs += ph[p] * std::cos(2 * kPi * f * t);
        ss += std::pow(std::sin(2 * kPi * f * t), 2);
        cc += std::pow(std::cos(2 * kPi * f * t), 2);
    }
    EXPECT_LT(std::sqrt(sq / double(ph.size())), 0.01 * A);
    EXPECT_LT(worst, 0.02 * A);
    const double fitted = std::hypot(sn / ss, cs / cc);
    const double x = kPi * f * tp;
    EXPECT_NEAR(fitted, A * std::sin(x) / x, 0.01 * A * std::sin(x) / x);
    const auto r = spectrum(d.phases[0]);
    ASSERT_TRUE(r.dominant_tone);
    EXPECT_LE(std::abs(*r.dominant_tone - f), 1.0 / (312 * tp));
}

TEST(Loopback, PhaseLinearityDoublingAmplitude) {
    const auto s = fixtures::single_mzi();
    auto amp = [&](double A) {
        const auto d = demodulate(simulate_scenario(s, {{1, 2500.0, A, 0.0}}, {}, 25e-3), s);
        const auto r = spectrum(d.phases[0], Window::hann);
        return std::sqrt(tone_power(r, 2500.0, 1));
    };
    for (double A : {0.2, 0.5, 0.75}) {
        const double ratio = amp(2 * A) / amp(A);
        EXPECT_NEAR(ratio, 2.0, 0.04) << A;
    }
}

TEST(Spectrum, RingElementDetectsFarAboveRoundTripLimit) {
    const auto spectra = noiseless_ladder_spectra({{3, 4500.0, 1.0, 0.0}}, 25e-3);
    const double tp = 4003 * 20e-9;
    const double tau_max = 2 * 76000.0 / 2e8;
    EXPECT_LT(1.0 / tau_max, 1400.0);
    ASSERT_TRUE(spectra[2].dominant_tone);
    EXPECT_LE(std::abs(*spectra[2].dominant_tone - 4500.0), 1.0 / (312 * tp));
}

// Stated bound: with only sensor 2 excited, the 2.5 kHz spur in sensors 1
// and 3 sits at least 40 dB under sensor 2's tone.
TEST(CrossTalk, SensorTwoOnlyIsFortyDecibelsDown) {
    const auto spectra = noiseless_ladder_spectra({{2, 2500.0, 1.0, 0.0}}, 25e-3, Window::hann);
    const double main = tone_power(spectra[1], 2500.0);
    ASSERT_GT(main, 0.0);
    for (int victim : {0, 2}) {
        const double rel = db(tone_power(spectra[victim], 2500.0) / main);
        RecordProperty("sensor" + std::to_string(victim + 1) + "_db", std::to_string(rel));
        EXPECT_LE(rel, -40.0) << "sensor " << victim + 1 << " spur at " << rel << " dB";
    }
}

TEST(ProcessingGain, PerfectAndMatchedModes) {
    for (int n : {103, 991}) {
        const auto perfect = measure_processing_gain(n, 1, ReferenceMode::perfect, 0.5, 64, 5);
        const auto matched = measure_processing_gain(n, 1, ReferenceMode::matched, 0.5, 64, 5);
        EXPECT_NEAR(perfect.gain_db(), db((n + 1) / 2.0), 1.5) << n;
        EXPECT_NEAR(matched.gain_db(), db(n), 1.5) << n;
    }
}

TEST(PeakSnr, MatchesAnalyticNoiseFloor) {
    const auto code = legendre_sequence(1019);
    Tap t;
    CaptureRequest r{200e6, 300 * code.period_duration(), 4, 0, 0};
    const double sigma = sigma_for_peak_snr(1.0, 1019, 4, 20.0);
    const auto cap = simulate_capture({t}, synthesize_waveform(code, 4), {}, NoiseModel{0.0, sigma, 12}, r);
    const auto prof = correlate_profile(segment_periods(cap, code), code, 4, ReferenceMode::perfect);
    EXPECT_NEAR(measure_peak_snr(prof, 0, 8).snr_db(), 20.0, 0.5);
}

TEST(Sync, RecoversStartOffset) {
    const auto s = fixtures::ladder_scenario();
    const std::int64_t start = 5000;
    const auto cap = simulate_scenario(s, {{1, 4500.0, 1.0, 0.0}}, {}, 5e-3, start);
    const auto prof = correlate_profile(segment_periods(cap, *s.code), *s.code, 4, ReferenceMode::perfect);
    EXPECT_EQ(estimate_sync_shift(prof, roundtrip_delays(s)), static_cast<std::size_t>(16012 - start));

    DemodOptions opt;
    opt.sync = true;
    const auto d = demodulate(cap, s, opt);
    EXPECT_EQ(d.sync_shift, static_cast<std::size_t>(16012 - start));
    const auto r = spectrum(d.phases[0]);
    ASSERT_TRUE(r.dominant_tone);
    EXPECT_NEAR(*r.dominant_tone, 4500.0, 1.0 / (62 * s.code->period_duration()));
    EXPECT_THROW(demodulate(cap, s), DecodeError);
}

TEST(Sync, ApplyShiftRotatesLeft) {
    CorrelationProfile p;
    p.traces = ComplexMatrix(1, 5);
    for (int b = 0; b < 5; ++b) p.traces(0, b) = b;
    apply_sync_shift(p, 2);
    for (int b = 0; b < 5; ++b) EXPECT_EQ(p.traces(0, b).real(), (b + 2) % 5);
}
