// End-to-end reproduction pipeline, artifact writers, and the correlator
// benchmark / processing-gain measurements built on top of the library.

#pragma once

#include "qdas/correlator.hpp"
#include "qdas/error.hpp"
#include "qdas/fiber_sim.hpp"
#include "qdas/planner.hpp"
#include "qdas/ppa_codes.hpp"
#include "qdas/scenario_io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace qdas {

class InfeasiblePlanError : public Error {
public:
    explicit InfeasiblePlanError(FeasibilityReport r)
        : Error(describe(r)), report(std::move(r)) {}

    FeasibilityReport report;

private:
    static std::string describe(const FeasibilityReport& r) {
        std::string s = "infeasible layout: min circular gap " + std::to_string(r.min_circular_gap * 1e9) +
                        " ns <= delta " + std::to_string(r.delta * 1e9) + " ns";
        if (r.violating_pair)
            s += " (" + to_string(r.violating_pair->first) + " vs " + to_string(r.violating_pair->second) + ")";
        return s;
    }
};

/// Receiver noise sigma for a 30 dB single-period peak SNR on the weakest
/// first-arrival tap of the scenario (perfect reference).
inline double default_noise_sigma(const LadderScenario& s, double snr_db = 30.0) {
    if (!s.code) throw ConfigError("scenario has no code attached");
    double weakest = std::numeric_limits<double>::infinity();
    for (const auto& t : build_taps(s))
        if (t.peak_id == 0) weakest = std::min(weakest, std::abs(t.amplitude));
    return sigma_for_peak_snr(weakest, s.code->n, s.oversampling, snr_db);
}

struct DemodResult {
    CorrelationProfile profile;
    std::vector<PeakTrack> tracks;
    std::vector<PhaseSeries> phases;  // one per sensor, ascending id
    std::size_t sync_shift = 0;
};

struct DemodOptions {
    ReferenceMode mode = ReferenceMode::perfect;
    bool sync = false;
    int tolerance_bins = 2;
    unsigned threads = 0;
};

/// Sync (optional), peak location and per-sensor phase on an existing profile.
inline void decode_profile(DemodResult& out, const LadderScenario& s, const DemodOptions& opt) {
    const auto expected = roundtrip_delays(s);
    if (opt.sync) {
        out.sync_shift = estimate_sync_shift(out.profile, expected);
        apply_sync_shift(out.profile, out.sync_shift);
    }
    out.tracks = locate_peaks(out.profile, expected, {opt.tolerance_bins, 6.0});
    const double scan_rate = 1.0 / s.code->period_duration();
    std::map<int, std::vector<PeakTrack>> by_sensor;
    for (const auto& t : out.tracks) by_sensor[t.ref.sensor_id].push_back(t);
    out.phases.clear();
    for (auto& [id, tracks] : by_sensor) {
        std::sort(tracks.begin(), tracks.end(),
                  [](const PeakTrack& a, const PeakTrack& b) { return a.ref.peak_id < b.ref.peak_id; });
        out.phases.push_back(sensor_phase(tracks, scan_rate));
    }
}

inline DemodResult demodulate(const RawCapture& cap, const LadderScenario& s, const DemodOptions& opt = {}) {
    if (!s.code) throw ConfigError("scenario has no code attached");
    if (cap.oversampling != s.oversampling)
        throw DecodeError("capture oversampling " + std::to_string(cap.oversampling) +
                          " does not match scenario oversampling " + std::to_string(s.oversampling));
    DemodResult out;
    const auto segments = segment_periods(cap, *s.code);
    out.profile = correlate_profile(segments, *s.code, s.oversampling, opt.mode, s.group_velocity, opt.threads);
    decode_profile(out, s, opt);
    return out;
}

// --- CSV artifacts -------------------------------------------------------------

namespace detail {
inline std::string fmt_g(double v, int digits = 10) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + p.string());
    return os;
}
} // namespace detail

/// bin,distance_m,power_db
inline void write_profile_csv(std::ostream& os, const PowerProfile& p) {
    os << "bin,distance_m,power_db\n";
    for (std::size_t b = 0; b < p.db.size(); ++b)
        os << b << ',' << detail::fmt_g(p.distance_m[b]) << ',' << detail::fmt_g(p.db[b]) << '\n';
}

/// time_s,phase_rad
inline void write_phase_csv(std::ostream& os, const PhaseSeries& s) {
    os << "time_s,phase_rad\n";
    for (std::size_t p = 0; p < s.phases.size(); ++p)
        os << detail::fmt_g(static_cast<double>(p) / s.scan_rate) << ',' << detail::fmt_g(s.phases[p]) << '\n';
}

/// frequency_hz,power_db
inline void write_spectrum_csv(std::ostream& os, const SpectrumReport& r) {
    os << "frequency_hz,power_db\n";
    for (std::size_t k = 0; k < r.frequencies.size(); ++k)
        os << detail::fmt_g(r.frequencies[k]) << ',' << detail::fmt_g(r.psd_db[k]) << '\n';
}

struct SensorResult {
    int sensor_id = 0;
    std::optional<double> dominant_tone;
    double snr_db = 0.0;
    double tone_amplitude = 0.0;
    std::vector<std::size_t> peak_bins;
};

struct RunReport {
    std::vector<SensorResult> sensors;
    FeasibilityReport plan;
    std::size_t periods = 0;
    double scan_rate = 0.0;
    double simulate_s = 0.0;
    double correlate_s = 0.0;
    double demod_s = 0.0;
};

inline std::string format_report(const RunReport& r) {
    std::string s;
    s += "periods " + std::to_string(r.periods) + "\n";
    s += "scan_rate_hz " + detail::fmt_g(r.scan_rate) + "\n";
    s += "min_circular_gap_s " + detail::fmt_g(r.plan.min_circular_gap) + "\n";
    s += std::string("feasible ") + (r.plan.feasible ? "yes" : "no") + "\n";
    s += "sensor,dominant_tone_hz,snr_db,tone_amplitude_rad,peak_bins\n";
    for (const auto& e : r.sensors) {
        s += std::to_string(e.sensor_id) + ',' +
             (e.dominant_tone ? detail::fmt_g(*e.dominant_tone) : std::string("none")) + ',' +
             detail::fmt_g(e.snr_db, 6) + ',' + detail::fmt_g(e.tone_amplitude, 6) + ',';
        for (std::size_t i = 0; i < e.peak_bins.size(); ++i)
            s += (i ? " " : "") + std::to_string(e.peak_bins[i]);
        s += '\n';
    }
    return s;
}

inline std::string format_timing(const RunReport& r) {
    return "simulate_s " + detail::fmt_g(r.simulate_s, 4) + "\ncorrelate_s " + detail::fmt_g(r.correlate_s, 4) +
           "\ndemod_s " + detail::fmt_g(r.demod_s, 4) + "\n";
}

struct E2EArtifacts {
    RunReport report;
    RawCapture capture;
    DemodResult demod;
    std::vector<SpectrumReport> spectra;
};

/// plan check -> simulate -> correlate -> demod -> spectrum, no file output.
inline E2EArtifacts run_pipeline(const RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto& s = cfg.scenario;
    E2EArtifacts a;
    const auto residues = roundtrip_delays(s);
    a.report.plan = check_separation(residues, cfg.delta);
    if (!a.report.plan.feasible) throw InfeasiblePlanError(a.report.plan);

    auto t0 = clock::now();
    a.capture = simulate_scenario(s, cfg.excitations, cfg.noise, cfg.duration, cfg.start_sample);
    auto t1 = clock::now();

    const auto segments = segment_periods(a.capture, *s.code);
    a.demod.profile = correlate_profile(segments, *s.code, s.oversampling, cfg.mode, s.group_velocity);
    auto t2 = clock::now();

    decode_profile(a.demod, s, {cfg.mode, cfg.sync, cfg.tolerance_bins, 0});
    for (const auto& phase : a.demod.phases) {
        a.spectra.push_back(spectrum(phase, cfg.window));
        SensorResult r;
        r.sensor_id = phase.sensor_id;
        r.dominant_tone = a.spectra.back().dominant_tone;
        r.snr_db = a.spectra.back().snr_db;
        r.tone_amplitude = a.spectra.back().peak_amplitude;
        for (const auto& t : a.demod.tracks)
            if (t.ref.sensor_id == phase.sensor_id) r.peak_bins.push_back(t.bin);
        a.report.sensors.push_back(r);
    }
    auto t3 = clock::now();

    a.report.periods = a.demod.profile.periods();
    a.report.scan_rate = 1.0 / s.code->period_duration();
    a.report.simulate_s = std::chrono::duration<double>(t1 - t0).count();
    a.report.correlate_s = std::chrono::duration<double>(t2 - t1).count();
    a.report.demod_s = std::chrono::duration<double>(t3 - t2).count();
    return a;
}

/// Writes profile.csv, phase_sensor<k>.csv, spectrum_sensor<k>.csv,
/// report.txt (deterministic) and timing.txt into `dir`.
inline void write_artifacts(const E2EArtifacts& a, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto os = detail::open_out(dir / "profile.csv");
        write_profile_csv(os, average_power_profile(a.demod.profile));
    }
    for (std::size_t i = 0; i < a.demod.phases.size(); ++i) {
        const auto id = std::to_string(a.demod.phases[i].sensor_id);
        auto ph = detail::open_out(dir / ("phase_sensor" + id + ".csv"));
        write_phase_csv(ph, a.demod.phases[i]);
        auto sp = detail::open_out(dir / ("spectrum_sensor" + id + ".csv"));
        write_spectrum_csv(sp, a.spectra[i]);
    }
    detail::open_out(dir / "report.txt") << format_report(a.report);
    detail::open_out(dir / "timing.txt") << format_timing(a.report);
}

inline RunReport run_e2e(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    const auto a = run_pipeline(cfg);
    write_artifacts(a, out_dir);
    return a.report;
}

// --- benchmark -----------------------------------------------------------------

struct BenchReport {
    int n = 0;
    int oversampling = 0;
    std::size_t periods = 0;
    double seconds = 0.0;
    double periods_per_s = 0.0;
    double samples_per_s = 0.0;
    double oracle_rel_error = 0.0;
    bool oracle_ok = false;
    double required_periods_per_s = 0.0;  // scan rate at a 20 ns chip
    bool realtime = false;
};

/// Throughput of correlate_profile on a noisy coded capture. The first period
/// is checked against the naive oracle before timing.
inline BenchReport bench_correlator(int n, int oversampling, std::size_t periods, double chip_duration = 20e-9,
                                    unsigned threads = 0, std::uint64_t seed = 7) {
    const auto code = legendre_sequence(n, chip_duration);
    const auto wave = synthesize_waveform(code, oversampling);
    const std::size_t P = wave.size();
    RawCapture cap;
    cap.oversampling = oversampling;
    cap.sample_rate = oversampling / chip_duration;
    cap.samples.resize(P * periods);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    for (std::size_t k = 0; k < cap.samples.size(); ++k)
        cap.samples[k] = wave[(k + 17) % P] + cplx(g(rng), g(rng));

    BenchReport r;
    r.n = n;
    r.oversampling = oversampling;
    r.periods = periods;
    const auto segments = segment_periods(cap, code);

    const auto ref = oversampled_reference(code, oversampling, ReferenceMode::perfect);
    const auto naive = periodic_correlation_naive<cplx>(segments.row(0), std::span<const cplx>(ref));
    const auto fast = periodic_correlation_fast(segments.row(0), std::span<const cplx>(ref));
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
        num = std::max(num, std::abs(fast.values[k] - naive.values[k]));
        den = std::max(den, std::abs(naive.values[k]));
    }
    r.oracle_rel_error = den > 0.0 ? num / den : num;
    r.oracle_ok = r.oracle_rel_error < 1e-9;

    const auto t0 = std::chrono::steady_clock::now();
    const auto prof = correlate_profile(segments, code, oversampling, ReferenceMode::perfect, 2e8, threads);
    const auto t1 = std::chrono::steady_clock::now();
    (void)prof;
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    r.periods_per_s = static_cast<double>(periods) / r.seconds;
    r.samples_per_s = r.periods_per_s * static_cast<double>(P);
    r.required_periods_per_s = 1.0 / code.period_duration();
    r.realtime = r.periods_per_s >= 12490.0;
    return r;
}

// --- processing gain -------------------------------------------------------------

struct GainMeasurement {
    double coded_snr = 0.0;
    double pulse_snr = 0.0;
    double gain() const { return coded_snr / pulse_snr; }
    double gain_db() const { return 10.0 * std::log10(gain()); }
};

/// Peak SNR of coded interrogation over a single-chip pulse of the same peak
/// amplitude, both through a unit tap with receiver noise `sigma`.
inline GainMeasurement measure_processing_gain(int n, int oversampling, ReferenceMode mode, double sigma,
                                               std::size_t periods, std::uint64_t seed) {
    const auto code = legendre_sequence(n, 20e-9);
    const double fs = oversampling / code.chip_duration;
    const double duration = static_cast<double>(periods) * code.period_duration();
    const std::vector<Tap> taps{Tap{}};
    NoiseModel noise;
    noise.receiver_noise_sigma = sigma;
    noise.seed = seed;
    const std::size_t guard = 2 * static_cast<std::size_t>(oversampling);
    GainMeasurement out;

    {
        const auto wave = synthesize_waveform(code, oversampling);
        const auto cap = simulate_capture(taps, wave, {}, noise, {fs, duration, oversampling, 0, 0});
        const auto prof = correlate_profile(segment_periods(cap, code), code, oversampling, mode);
        out.coded_snr = measure_peak_snr(prof, 0, guard).snr();
    }
    {
        std::vector<cplx> pulse(static_cast<std::size_t>(n) * oversampling, cplx{});
        std::fill_n(pulse.begin(), oversampling, cplx{1.0, 0.0});
        noise.seed = seed + 1;
        const auto cap = simulate_capture(taps, pulse, {}, noise, {fs, duration, oversampling, 0, 0});
        const auto rows = segment_periods(cap, pulse.size());
        CorrelationProfile prof;
        prof.traces = correlate_rows(rows, pulse);
        prof.sample_rate = fs;
        out.pulse_snr = measure_peak_snr(prof, 0, guard).snr();
    }
    return out;
}

} // namespace qdas
