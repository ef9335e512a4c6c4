// Decoding of captures: period segmentation, circular correlation against the
// oversampled reference, peak tracking, differential phase and spectra.

#pragma once

#include "qdas/error.hpp"
#include "qdas/fft.hpp"
#include "qdas/fiber_sim.hpp"
#include "qdas/planner.hpp"
#include "qdas/ppa_codes.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace qdas {

using cplx = std::complex<double>;

/// Row-major complex matrix.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<cplx> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const cplx> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cplx> data_;
};

enum class ReferenceMode { perfect, matched };

struct CorrelationProfile {
    ComplexMatrix traces;          // n_periods x period_samples
    double period_duration = 0.0;  // s
    double sample_rate = 0.0;      // Hz
    double meters_per_bin = 0.0;   // v / sample_rate

    std::size_t periods() const { return traces.rows(); }
    std::size_t bins() const { return traces.cols(); }
};

struct PeakTrack {
    PeakRef ref;
    std::size_t bin = 0;
    std::vector<cplx> values;  // one per period
};

struct PhaseSeries {
    int sensor_id = 0;
    std::vector<double> phases;  // rad, unwrapped
    double scan_rate = 0.0;      // Hz
};

enum class Window { none, hann };

struct SpectrumReport {
    std::vector<double> frequencies;  // Hz, 0 .. scan_rate/2
    std::vector<double> power;        // one-sided, rad^2 (a tone of amplitude A on-bin reads A^2)
    std::vector<double> psd_db;       // relative to the strongest bin
    std::optional<double> dominant_tone;
    std::size_t dominant_bin = 0;
    double snr_db = std::numeric_limits<double>::quiet_NaN();
    double peak_amplitude = 0.0;  // rad

    bool degenerate() const { return !dominant_tone.has_value(); }
};

inline ComplexMatrix segment_periods(const RawCapture& capture, std::size_t period_samples) {
    if (period_samples == 0) throw DecodeError("segment_periods: zero period length");
    const std::size_t rows = capture.samples.size() / period_samples;
    if (rows == 0) throw DecodeError("capture is shorter than one code period");
    ComplexMatrix m(rows, period_samples);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(capture.samples.begin() + static_cast<std::ptrdiff_t>(r * period_samples),
                    period_samples, m.row(r).begin());
    return m;
}

inline ComplexMatrix segment_periods(const RawCapture& capture, const LegendreCode& code) {
    return segment_periods(capture, static_cast<std::size_t>(code.n) *
                                        static_cast<std::size_t>(capture.oversampling));
}

/// Reference waveform at sample rate: {0,2} taps (perfect) or +-1 chips (matched).
inline std::vector<cplx> oversampled_reference(const LegendreCode& code, int oversampling,
                                               ReferenceMode mode) {
    std::vector<cplx> ref;
    ref.reserve(code.chips.size() * static_cast<std::size_t>(oversampling));
    for (int c : code.chips) {
        const double v = mode == ReferenceMode::perfect ? c + 1.0 : static_cast<double>(c);
        for (int k = 0; k < oversampling; ++k) ref.emplace_back(v, 0.0);
    }
    return ref;
}

/// Circular cross-correlation of every row with `reference`.
inline ComplexMatrix correlate_rows(const ComplexMatrix& rows, std::span<const cplx> reference,
                                    unsigned threads = 0) {
    const std::size_t n = rows.cols();
    if (reference.size() != n)
        throw LengthMismatchError("correlate: row length does not match reference length");
    const auto plan = fft::plan_for(n);
    std::vector<cplx> ref_spec(reference.begin(), reference.end());
    plan->forward(ref_spec);
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : ref_spec) v = std::conj(v) * scale;

    ComplexMatrix out(rows.rows(), n);
    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<cplx> buf(n);
        for (std::size_t r = begin; r < end; ++r) {
            auto src = rows.row(r);
            std::copy(src.begin(), src.end(), buf.begin());
            plan->forward(buf);
            for (std::size_t k = 0; k < n; ++k) buf[k] *= ref_spec[k];
            plan->backward(buf);
            std::copy(buf.begin(), buf.end(), out.row(r).begin());
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, rows.rows()));
    if (threads <= 1) {
        work(0, rows.rows());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (rows.rows() + threads - 1) / threads;
        for (std::size_t b = 0; b < rows.rows(); b += chunk)
            pool.emplace_back(work, b, std::min(rows.rows(), b + chunk));
    }
    return out;
}

inline CorrelationProfile correlate_profile(const ComplexMatrix& segments, const LegendreCode& code,
                                            int oversampling, ReferenceMode mode,
                                            double group_velocity = 2e8, unsigned threads = 0) {
    const std::size_t period_samples =
        static_cast<std::size_t>(code.n) * static_cast<std::size_t>(oversampling);
    if (segments.cols() != period_samples)
        throw LengthMismatchError("correlate_profile: segment length " +
                                  std::to_string(segments.cols()) + " != period samples " +
                                  std::to_string(period_samples));
    const auto ref = oversampled_reference(code, oversampling, mode);
    CorrelationProfile p;
    p.traces = correlate_rows(segments, ref, threads);
    p.period_duration = code.period_duration();
    p.sample_rate = oversampling / code.chip_duration;
    p.meters_per_bin = group_velocity / p.sample_rate;
    return p;
}

/// Per-bin mean of |value|^2 across periods.
inline std::vector<double> mean_power(const CorrelationProfile& profile) {
    std::vector<double> acc(profile.bins(), 0.0);
    for (std::size_t r = 0; r < profile.periods(); ++r) {
        auto row = profile.traces.row(r);
        for (std::size_t b = 0; b < acc.size(); ++b) acc[b] += std::norm(row[b]);
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, profile.periods()));
    for (auto& v : acc) v *= inv;
    return acc;
}

struct PowerProfile {
    std::vector<double> distance_m;  // bin * meters_per_bin, i.e. mod(z, L_s)
    std::vector<double> mean_power;
    std::vector<double> db;          // relative to the strongest bin
};

inline constexpr double kFloorDb = -300.0;

inline PowerProfile average_power_profile(const CorrelationProfile& profile) {
    if (profile.periods() == 0) throw DecodeError("average_power_profile: empty profile");
    PowerProfile out;
    out.mean_power = mean_power(profile);
    const double peak = *std::max_element(out.mean_power.begin(), out.mean_power.end());
    out.db.resize(out.mean_power.size());
    out.distance_m.resize(out.mean_power.size());
    for (std::size_t b = 0; b < out.db.size(); ++b) {
        out.distance_m[b] = static_cast<double>(b) * profile.meters_per_bin;
        const double p = out.mean_power[b];
        out.db[b] = (peak > 0.0 && p > 0.0) ? std::max(kFloorDb, 10.0 * std::log10(p / peak)) : kFloorDb;
    }
    return out;
}

/// Local maxima of a dB profile lying `threshold_db` above its median, at
/// least `halfwidth` bins from any stronger bin (circular).
inline std::vector<std::size_t> find_profile_peaks(std::span<const double> db, double threshold_db,
                                                   std::size_t halfwidth) {
    const std::size_t n = db.size();
    std::vector<std::size_t> out;
    if (n == 0) return out;
    std::vector<double> sorted(db.begin(), db.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    const double level = sorted[n / 2] + threshold_db;
    for (std::size_t b = 0; b < n; ++b) {
        if (db[b] <= level) continue;
        bool is_max = true;
        for (std::size_t off = 1; off <= halfwidth && is_max; ++off) {
            const double left = db[(b + n - off % n) % n];
            const double right = db[(b + off) % n];
            // ties resolve to the earliest bin
            if (left >= db[b] || right > db[b]) is_max = false;
        }
        if (is_max) out.push_back(b);
    }
    return out;
}

struct PeakSearchOptions {
    int tolerance_bins = 2;
    double min_snr_db = 6.0;  // required margin over the profile's median bin power
};

inline std::size_t residue_bin(double residue, double sample_rate, std::size_t bins) {
    const auto b = static_cast<long long>(std::llround(residue * sample_rate));
    const auto n = static_cast<long long>(bins);
    return static_cast<std::size_t>(((b % n) + n) % n);
}

/// One track per expected peak, at the strongest bin within +-tolerance of its residue.
inline std::vector<PeakTrack> locate_peaks(const CorrelationProfile& profile,
                                           const ResidueSet& expected,
                                           const PeakSearchOptions& opt = {}) {
    if (opt.tolerance_bins < 0) throw ConfigError("locate_peaks: negative tolerance");
    const auto power = mean_power(profile);
    const std::size_t n = power.size();

    std::vector<double> sorted = power;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    const double median = sorted[n / 2];
    const double global = *std::max_element(power.begin(), power.end());
    const double floor = std::max(median * std::pow(10.0, opt.min_snr_db / 10.0), global * 1e-12);

    std::vector<PeakTrack> tracks;
    for (const auto& pk : expected.peaks) {
        const std::size_t centre = residue_bin(pk.residue, profile.sample_rate, n);
        std::size_t best = centre;
        double best_p = -1.0;
        for (int off = -opt.tolerance_bins; off <= opt.tolerance_bins; ++off) {
            const auto b = static_cast<std::size_t>(
                (static_cast<long long>(centre) + off + static_cast<long long>(n)) %
                static_cast<long long>(n));
            if (power[b] > best_p) {
                best_p = power[b];
                best = b;
            }
        }
        if (best_p <= floor)
            throw DecodeError("no correlation peak above threshold for " + to_string(pk.ref) +
                              " near bin " + std::to_string(centre));
        for (const auto& t : tracks)
            if (t.bin == best)
                throw DecodeError("peak collision: " + to_string(t.ref) + " and " +
                                  to_string(pk.ref) + " both resolve to bin " + std::to_string(best));
        PeakTrack t;
        t.ref = pk.ref;
        t.bin = best;
        t.values.resize(profile.periods());
        for (std::size_t r = 0; r < profile.periods(); ++r) t.values[r] = profile.traces(r, best);
        tracks.push_back(std::move(t));
    }
    return tracks;
}

/// Cyclic shift (bins) that best aligns profile power with the expected residues.
inline std::size_t estimate_sync_shift(const CorrelationProfile& profile, const ResidueSet& expected) {
    const auto power = mean_power(profile);
    const std::size_t n = power.size();
    std::vector<std::size_t> bins;
    for (const auto& pk : expected.peaks) bins.push_back(residue_bin(pk.residue, profile.sample_rate, n));
    std::size_t best_shift = 0;
    double best = -1.0;
    for (std::size_t s = 0; s < n; ++s) {
        double score = 0.0;
        for (auto b : bins) score += power[(b + s) % n];
        if (score > best) {
            best = score;
            best_shift = s;
        }
    }
    return best_shift;
}

/// Rotate every trace left by `shift` bins so bin b holds what was at b + shift.
inline void apply_sync_shift(CorrelationProfile& profile, std::size_t shift) {
    if (shift == 0) return;
    for (std::size_t r = 0; r < profile.periods(); ++r) {
        auto row = profile.traces.row(r);
        std::rotate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(shift % row.size()), row.end());
    }
}

/// Adds multiples of 2*pi so consecutive samples differ by at most pi.
inline std::vector<double> unwrap(std::span<const double> phases) {
    std::vector<double> out(phases.begin(), phases.end());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double offset = 0.0;
    for (std::size_t k = 1; k < out.size(); ++k) {
        const double d = phases[k] - phases[k - 1];
        if (d > std::numbers::pi)
            offset -= two_pi * std::ceil((d - std::numbers::pi) / two_pi);
        else if (d < -std::numbers::pi)
            offset += two_pi * std::ceil((-d - std::numbers::pi) / two_pi);
        out[k] = phases[k] + offset;
    }
    return out;
}

inline std::vector<double> unwrap(const std::vector<double>& phases) {
    return unwrap(std::span<const double>(phases));
}

/// arg(b * conj(a)) per period, unwrapped.
inline PhaseSeries differential_phase(const PeakTrack& a, const PeakTrack& b, double scan_rate) {
    if (a.values.size() != b.values.size())
        throw LengthMismatchError("differential_phase: tracks differ in length");
    if (a.ref.sensor_id != b.ref.sensor_id)
        throw DecodeError("differential_phase: tracks belong to different sensors");
    std::vector<double> raw(a.values.size());
    for (std::size_t p = 0; p < raw.size(); ++p) raw[p] = std::arg(b.values[p] * std::conj(a.values[p]));
    return {a.ref.sensor_id, unwrap(raw), scan_rate};
}

/// Sensor phase from its tracks ordered by peak id. Two tracks: plain
/// differential phase. More (ring passes): arg of the summed consecutive-pass
/// products, so every pass pair contributes one unit of acoustic phase.
inline PhaseSeries sensor_phase(std::span<const PeakTrack> tracks, double scan_rate) {
    if (tracks.size() < 2) throw DecodeError("sensor_phase: need at least two peaks");
    if (tracks.size() == 2) return differential_phase(tracks[0], tracks[1], scan_rate);
    const std::size_t len = tracks[0].values.size();
    for (const auto& t : tracks) {
        if (t.values.size() != len) throw LengthMismatchError("sensor_phase: tracks differ in length");
        if (t.ref.sensor_id != tracks[0].ref.sensor_id)
            throw DecodeError("sensor_phase: tracks belong to different sensors");
    }
    std::vector<double> raw(len);
    for (std::size_t p = 0; p < len; ++p) {
        cplx acc{};
        for (std::size_t m = 1; m < tracks.size(); ++m)
            acc += tracks[m].values[p] * std::conj(tracks[m - 1].values[p]);
        raw[p] = std::arg(acc);
    }
    return {tracks[0].ref.sensor_id, unwrap(raw), scan_rate};
}

inline SpectrumReport spectrum(const PhaseSeries& series, Window window = Window::none) {
    const std::size_t n = series.phases.size();
    if (n < 8) throw DecodeError("spectrum: series shorter than 8 samples");
    double mean = 0.0;
    for (double v : series.phases) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> w(n, 1.0);
    if (window == Window::hann)
        for (std::size_t k = 0; k < n; ++k)
            w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    double wsum = 0.0;
    for (double v : w) wsum += v;

    std::vector<cplx> buf(n);
    for (std::size_t k = 0; k < n; ++k) buf[k] = (series.phases[k] - mean) * w[k];
    fft::plan_for(n)->forward(buf);

    SpectrumReport rep;
    const std::size_t half = n / 2;
    rep.frequencies.resize(half + 1);
    rep.power.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        rep.frequencies[k] = static_cast<double>(k) * series.scan_rate / static_cast<double>(n);
        const double one_sided = (k == 0 || (n % 2 == 0 && k == half)) ? 1.0 : 2.0;
        const double amp = one_sided * std::abs(buf[k]) / wsum;
        rep.power[k] = amp * amp;
    }

    std::size_t best = 1;
    for (std::size_t k = 1; k <= half; ++k)
        if (rep.power[k] > rep.power[best]) best = k;
    const double peak = rep.power[best];

    rep.psd_db.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k)
        rep.psd_db[k] = (peak > 0.0 && rep.power[k] > 0.0)
                            ? std::max(kFloorDb, 10.0 * std::log10(rep.power[k] / peak))
                            : kFloorDb;

    // relative to the series' own scale, anything this small is round-off
    double scale = 0.0;
    for (double v : series.phases) scale = std::max(scale, std::abs(v));
    if (!(peak > 1e-24 * std::max(1.0, scale * scale))) return rep;

    rep.dominant_tone = rep.frequencies[best];
    rep.dominant_bin = best;
    rep.peak_amplitude = std::sqrt(peak);
    std::vector<double> others;
    for (std::size_t k = 1; k <= half; ++k)
        if (k != best) others.push_back(rep.power[k]);
    if (others.empty()) {
        rep.snr_db = std::numeric_limits<double>::infinity();
    } else {
        std::nth_element(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(others.size() / 2),
                         others.end());
        const double med = others[others.size() / 2];
        rep.snr_db = med > 0.0 ? 10.0 * std::log10(peak / med) : std::numeric_limits<double>::infinity();
    }
    return rep;
}

/// Power of the strongest bin within +-halfwidth bins of `frequency`.
inline double tone_power(const SpectrumReport& rep, double frequency, int halfwidth = 1) {
    if (rep.frequencies.size() < 2) return 0.0;
    const double df = rep.frequencies[1] - rep.frequencies[0];
    const auto centre = static_cast<long long>(std::llround(frequency / df));
    double best = 0.0;
    for (long long k = centre - halfwidth; k <= centre + halfwidth; ++k)
        if (k >= 0 && k < static_cast<long long>(rep.power.size()))
            best = std::max(best, rep.power[static_cast<std::size_t>(k)]);
    return best;
}

struct PeakSnr {
    double signal_power = 0.0;  // |mean over periods at the peak bin|^2
    double noise_power = 0.0;   // mean across-period variance in bins away from the peak
    double snr() const { return signal_power / noise_power; }
    double snr_db() const { return 10.0 * std::log10(snr()); }
};

/// Coherent peak power over the per-bin noise variance, the latter measured in
/// bins farther than `guard` from the peak (deterministic sidelobes cancel).
inline PeakSnr measure_peak_snr(const CorrelationProfile& profile, std::size_t peak_bin, std::size_t guard) {
    const std::size_t rows = profile.periods();
    const std::size_t n = profile.bins();
    if (rows < 2) throw DecodeError("measure_peak_snr: need at least two periods");
    PeakSnr out;
    cplx peak{};
    for (std::size_t r = 0; r < rows; ++r) peak += profile.traces(r, peak_bin);
    peak /= static_cast<double>(rows);
    out.signal_power = std::norm(peak);

    double var_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t d = b > peak_bin ? b - peak_bin : peak_bin - b;
        if (std::min(d, n - d) <= guard) continue;
        cplx mu{};
        for (std::size_t r = 0; r < rows; ++r) mu += profile.traces(r, b);
        mu /= static_cast<double>(rows);
        double v = 0.0;
        for (std::size_t r = 0; r < rows; ++r) v += std::norm(profile.traces(r, b) - mu);
        var_sum += v / static_cast<double>(rows - 1);
        ++used;
    }
    out.noise_power = var_sum / static_cast<double>(used);
    return out;
}

} // namespace qdas
