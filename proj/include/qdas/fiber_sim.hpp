// Baseband simulation of a coherently detected ladder of fiber sensors.
//
// The network is reduced to a list of taps (delayed, scaled copies of the
// transmitted cyclic code). Each tap may carry acoustic phase from its
// sensor and the interferometric laser phase noise theta(t) - theta(t - tau).

#pragma once

#include "qdas/error.hpp"
#include "qdas/planner.hpp"
#include "qdas/ppa_codes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace qdas {

enum class TapArm { reference, sensing };

struct Tap {
    double delay = 0.0;  // round-trip, s
    std::complex<double> amplitude{1.0, 0.0};
    int sensor_id = 0;
    int peak_id = 0;
    TapArm arm = TapArm::reference;
    int phase_order = 0;  // multiplier on the sensor's acoustic phase (ring pass m -> m)
};

struct Excitation {
    int sensor_id = 0;
    double frequency = 0.0;  // Hz
    double amplitude = 0.0;  // rad
    double phase = 0.0;      // rad
};

struct NoiseModel {
    double laser_linewidth = 0.0;       // Hz
    double receiver_noise_sigma = 0.0;  // per-sample complex std dev (E|n|^2 = sigma^2)
    std::uint64_t seed = 0;
};

struct RawCapture {
    std::vector<std::complex<double>> samples;
    double sample_rate = 0.0;
    int oversampling = 1;
    std::int64_t start_sample = 0;  // offset of samples[0] from the transmit sequence start
    std::uint64_t seed = 0;
    std::uint64_t scenario_hash = 0;

    double start_time() const { return static_cast<double>(start_sample) / sample_rate; }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline double db_to_amplitude(double db) { return std::pow(10.0, -db / 20.0); }

inline std::vector<Tap> build_taps(const LadderScenario& s) {
    validate(s);
    std::vector<Tap> taps;
    double upstream = 1.0;  // field transmission through earlier couplers, both buses
    for (std::size_t i = 0; i < s.sensors.size(); ++i) {
        const auto& e = s.sensors[i];
        const double coupling = std::sqrt(e.input_tap_ratio) * std::sqrt(e.output_tap_ratio);
        const double base_delay = 2.0 * e.position / s.group_velocity;
        for (int m = 0; m < e.peak_count(); ++m) {
            const double excess = m * e.imbalance;
            const double path_km = (2.0 * e.position + excess) / 1000.0;
            const int arm = e.kind == SensorKind::mzi ? m : 0;
            double mag = coupling * upstream * 0.5 * db_to_amplitude(s.fiber_attenuation * path_km) *
                         db_to_amplitude(e.arm_loss_db[arm]);
            if (e.kind == SensorKind::ring) mag *= std::pow(e.loop_gain, m);
            Tap t;
            t.delay = base_delay + excess / s.group_velocity;
            t.amplitude = std::polar(mag, e.arm_phase[arm]);
            t.sensor_id = static_cast<int>(i) + 1;
            t.peak_id = m;
            t.arm = m == 0 ? TapArm::reference : TapArm::sensing;
            t.phase_order = m;
            taps.push_back(t);
        }
        upstream *= std::sqrt(1.0 - e.input_tap_ratio) * std::sqrt(1.0 - e.output_tap_ratio);
    }
    return taps;
}

/// Rectangular chip shaping: each chip repeated `oversampling` times.
inline std::vector<std::complex<double>> synthesize_waveform(const LegendreCode& code,
                                                             int oversampling) {
    if (oversampling < 1) throw ConfigError("oversampling must be at least 1");
    std::vector<std::complex<double>> w;
    w.reserve(code.chips.size() * static_cast<std::size_t>(oversampling));
    for (int c : code.chips)
        for (int k = 0; k < oversampling; ++k) w.emplace_back(static_cast<double>(c), 0.0);
    return w;
}

/// Wiener phase walk with increment variance 2*pi*linewidth*dt; theta[0] = 0.
inline std::vector<double> laser_phase_path(double linewidth, std::size_t n_samples, double dt,
                                            std::uint64_t seed) {
    std::vector<double> theta(n_samples, 0.0);
    if (linewidth <= 0.0 || n_samples < 2) return theta;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x1a5e5u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> step(0.0, std::sqrt(2.0 * std::numbers::pi * linewidth * dt));
    for (std::size_t k = 1; k < n_samples; ++k) theta[k] = theta[k - 1] + step(rng);
    return theta;
}

/// Receiver noise sigma giving the stated single-period perfect-mode peak SNR
/// for a tap of the given field amplitude.
inline double sigma_for_peak_snr(double tap_amplitude, int n, int oversampling, double snr_db) {
    const double snr = std::pow(10.0, snr_db / 10.0);
    return std::sqrt(tap_amplitude * tap_amplitude * (n + 1) * oversampling / (2.0 * snr));
}

struct CaptureRequest {
    double sample_rate = 0.0;
    double duration = 0.0;
    int oversampling = 1;  // recorded in the capture
    std::int64_t start_sample = 0;
    std::uint64_t scenario_hash = 0;
};

/// r[k] = sum_j a_j x[(g - d_j) mod P] exp(i[m_j phi_s(t) + theta(t) - theta(t - tau_j)]) + noise,
/// g = start_sample + k, t = g / sample_rate, P = waveform.size().
inline RawCapture simulate_capture(const std::vector<Tap>& taps,
                                   const std::vector<std::complex<double>>& waveform,
                                   const std::vector<Excitation>& excitations,
                                   const NoiseModel& noise, const CaptureRequest& req) {
    const std::size_t period = waveform.size();
    if (period == 0) throw ConfigError("simulate_capture: empty waveform");
    if (!(req.sample_rate > 0.0)) throw ConfigError("simulate_capture: sample rate must be positive");
    if (req.start_sample < 0) throw ConfigError("simulate_capture: negative start offset");
    const auto n_samples = static_cast<std::size_t>(std::llround(req.duration * req.sample_rate));
    if (n_samples < period)
        throw ConfigError("simulate_capture: duration shorter than one code period");

    int max_sensor = 0;
    for (const auto& t : taps) max_sensor = std::max(max_sensor, t.sensor_id);
    for (const auto& x : excitations) {
        bool known = false;
        for (const auto& t : taps) known = known || t.sensor_id == x.sensor_id;
        if (!known)
            throw ConfigError("excitation references unknown sensor " + std::to_string(x.sensor_id));
        if (x.frequency < 0.0 || x.amplitude < 0.0)
            throw ConfigError("excitation frequency and amplitude must be non-negative");
    }

    const double dt = 1.0 / req.sample_rate;
    const auto start = static_cast<std::size_t>(req.start_sample);

    std::vector<std::size_t> delay_samples;
    std::size_t max_delay = 0;
    for (const auto& t : taps) {
        if (t.delay < 0.0) throw ConfigError("tap delay must be non-negative");
        delay_samples.push_back(static_cast<std::size_t>(std::llround(t.delay * req.sample_rate)));
        max_delay = std::max(max_delay, delay_samples.back());
    }

    // acoustic phase per sensor, sampled at receive time
    std::vector<std::vector<double>> acoustic(static_cast<std::size_t>(max_sensor) + 1);
    for (const auto& x : excitations) {
        auto& phi = acoustic[static_cast<std::size_t>(x.sensor_id)];
        if (phi.empty()) phi.assign(n_samples, 0.0);
        const double w = 2.0 * std::numbers::pi * x.frequency;
        for (std::size_t k = 0; k < n_samples; ++k)
            phi[k] += x.amplitude * std::sin(w * static_cast<double>(start + k) * dt + x.phase);
    }

    // theta stored from time -max_delay so theta(t - tau) is always defined
    const bool laser = noise.laser_linewidth > 0.0;
    std::vector<double> theta;
    if (laser) theta = laser_phase_path(noise.laser_linewidth, start + n_samples + max_delay, dt, noise.seed);

    RawCapture cap;
    cap.sample_rate = req.sample_rate;
    cap.oversampling = req.oversampling;
    cap.start_sample = req.start_sample;
    cap.seed = noise.seed;
    cap.scenario_hash = req.scenario_hash;
    cap.samples.assign(n_samples, {0.0, 0.0});

    for (std::size_t j = 0; j < taps.size(); ++j) {
        const auto& tap = taps[j];
        const std::size_t d = delay_samples[j];
        const auto& phi = acoustic[static_cast<std::size_t>(tap.sensor_id)];
        const bool modulated = tap.phase_order != 0 && !phi.empty();
        std::size_t idx = (start + period - d % period) % period;
        for (std::size_t k = 0; k < n_samples; ++k) {
            std::complex<double> v = tap.amplitude * waveform[idx];
            if (modulated || laser) {
                double ph = modulated ? tap.phase_order * phi[k] : 0.0;
                if (laser) {
                    const std::size_t g = start + k + max_delay;
                    ph += theta[g] - theta[g - d];
                }
                v *= std::polar(1.0, ph);
            }
            cap.samples[k] += v;
            if (++idx == period) idx = 0;
        }
    }

    if (noise.receiver_noise_sigma > 0.0) {
        std::seed_seq seq{static_cast<std::uint32_t>(noise.seed),
                          static_cast<std::uint32_t>(noise.seed >> 32), 0x7ec1u};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> g(0.0, noise.receiver_noise_sigma / std::numbers::sqrt2);
        for (auto& s : cap.samples) {
            const double re = g(rng);
            const double im = g(rng);
            s += std::complex<double>(re, im);
        }
    }
    return cap;
}

/// FNV-1a over the physical parameters of a scenario.
inline std::uint64_t scenario_fingerprint(const LadderScenario& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](const void* p, std::size_t len) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    auto mix_d = [&](double v) { mix(&v, sizeof v); };
    auto mix_i = [&](std::int64_t v) { mix(&v, sizeof v); };
    mix_d(s.group_velocity);
    mix_d(s.fiber_attenuation);
    mix_i(s.oversampling);
    if (s.code) {
        mix_i(s.code->n);
        mix_d(s.code->chip_duration);
    }
    for (const auto& e : s.sensors) {
        mix_d(e.position);
        mix_i(static_cast<int>(e.kind));
        mix_d(e.imbalance);
        mix_i(e.ring_taps);
        mix_d(e.loop_gain);
        mix_d(e.input_tap_ratio);
        mix_d(e.output_tap_ratio);
        for (double v : e.arm_loss_db) mix_d(v);
        for (double v : e.arm_phase) mix_d(v);
    }
    return h;
}

/// Scenario-level convenience: taps, waveform and sample rate from the scenario.
inline RawCapture simulate_scenario(const LadderScenario& s,
                                    const std::vector<Excitation>& excitations,
                                    const NoiseModel& noise, double duration,
                                    std::int64_t start_sample = 0) {
    if (!s.code) throw ConfigError("simulate: scenario has no code attached");
    const auto taps = build_taps(s);
    const auto waveform = synthesize_waveform(*s.code, s.oversampling);
    CaptureRequest req;
    req.sample_rate = s.oversampling / s.code->chip_duration;
    req.duration = duration;
    req.oversampling = s.oversampling;
    req.start_sample = start_sample;
    req.scenario_hash = scenario_fingerprint(s);
    return simulate_capture(taps, waveform, excitations, noise, req);
}

// --- capture file ------------------------------------------------------------
//
// Little-endian. Header (56 bytes):
//   char[8]  magic "QDASIQ01"
//   u32      oversampling
//   u32      reserved (0)
//   f64      sample_rate
//   u64      length (complex samples)
//   u64      seed
//   i64      start_sample
//   u64      scenario_hash
// followed by length pairs of f32 (I, Q).

static_assert(std::endian::native == std::endian::little, "capture I/O assumes little-endian");

inline constexpr char kCaptureMagic[8] = {'Q', 'D', 'A', 'S', 'I', 'Q', '0', '1'};
inline constexpr std::size_t kCaptureHeaderBytes = 56;

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw ConfigError("capture file: truncated header");
    return v;
}
} // namespace detail

inline void write_capture(std::ostream& os, const RawCapture& cap) {
    os.write(kCaptureMagic, sizeof kCaptureMagic);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(cap.oversampling));
    detail::put<std::uint32_t>(os, 0);
    detail::put<double>(os, cap.sample_rate);
    detail::put<std::uint64_t>(os, cap.samples.size());
    detail::put<std::uint64_t>(os, cap.seed);
    detail::put<std::int64_t>(os, cap.start_sample);
    detail::put<std::uint64_t>(os, cap.scenario_hash);
    std::vector<float> buf;
    buf.reserve(cap.samples.size() * 2);
    for (const auto& s : cap.samples) {
        buf.push_back(static_cast<float>(s.real()));
        buf.push_back(static_cast<float>(s.imag()));
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline RawCapture read_capture(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCaptureMagic, sizeof magic) != 0)
        throw ConfigError("capture file: bad magic");
    RawCapture cap;
    cap.oversampling = static_cast<int>(detail::get<std::uint32_t>(is));
    (void)detail::get<std::uint32_t>(is);
    cap.sample_rate = detail::get<double>(is);
    const auto len = detail::get<std::uint64_t>(is);
    cap.seed = detail::get<std::uint64_t>(is);
    cap.start_sample = detail::get<std::int64_t>(is);
    cap.scenario_hash = detail::get<std::uint64_t>(is);
    std::vector<float> buf(static_cast<std::size_t>(len) * 2);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float))))
        throw ConfigError("capture file: truncated sample data");
    cap.samples.resize(static_cast<std::size_t>(len));
    for (std::size_t k = 0; k < cap.samples.size(); ++k)
        cap.samples[k] = {buf[2 * k], buf[2 * k + 1]};
    return cap;
}

/// index,time_s,i,q
inline void write_capture_csv(std::ostream& os, const RawCapture& cap) {
    os << "index,time_s,i,q\n";
    char line[128];
    for (std::size_t k = 0; k < cap.samples.size(); ++k) {
        const double t = (static_cast<double>(cap.start_sample) + static_cast<double>(k)) / cap.sample_rate;
        std::snprintf(line, sizeof line, "%zu,%.12g,%.9g,%.9g\n", k, t, cap.samples[k].real(),
                      cap.samples[k].imag());
        os << line;
    }
}

} // namespace qdas
