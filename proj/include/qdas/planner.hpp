// Ladder layout planning: round-trip delays folded into one code period, the
// circular non-overlap check, code-length search and coupler equalization.

#pragma once

#include "qdas/error.hpp"
#include "qdas/ppa_codes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace qdas {

enum class SensorKind { mzi, ring };

struct SensorElement {
    double position = 0.0;   // one-way bus distance from the interrogator, m
    SensorKind kind = SensorKind::mzi;
    double imbalance = 0.0;  // MZI path difference or ring circumference, m
    int ring_taps = 6;       // modeled ring passes (ring only)
    double loop_gain = 0.5;  // field amplitude factor per ring pass (ring only)
    double input_tap_ratio = 1.0;
    double output_tap_ratio = 1.0;
    // Static per-arm field loss and carrier phase, [reference arm, sensing arm].
    // Rings apply arm 0 to every pass.
    std::array<double, 2> arm_loss_db{0.0, 0.0};
    std::array<double, 2> arm_phase{0.0, 0.0};

    int peak_count() const { return kind == SensorKind::mzi ? 2 : ring_taps; }
};

struct LadderScenario {
    std::vector<SensorElement> sensors;
    double group_velocity = 2e8;        // m/s
    double fiber_attenuation = 0.2;     // dB/km
    std::optional<LegendreCode> code;
    int oversampling = 4;               // samples per chip

    double period_duration() const {
        if (!code) throw ConfigError("scenario has no code attached");
        return code->period_duration();
    }
};

inline void validate(const LadderScenario& s) {
    if (!(s.group_velocity > 0.0)) throw ConfigError("group_velocity must be positive");
    if (s.fiber_attenuation < 0.0) throw ConfigError("fiber_attenuation must be non-negative");
    if (s.oversampling < 1) throw ConfigError("oversampling must be at least 1");
    for (std::size_t i = 0; i < s.sensors.size(); ++i) {
        const auto& e = s.sensors[i];
        const std::string where = "sensor " + std::to_string(i + 1) + ": ";
        if (e.position < 0.0) throw ConfigError(where + "position must be >= 0");
        if (!(e.imbalance > 0.0)) throw ConfigError(where + "imbalance must be > 0");
        if (e.kind == SensorKind::ring && e.ring_taps < 2)
            throw ConfigError(where + "ring_taps must be >= 2");
        if (e.kind == SensorKind::ring && !(e.loop_gain > 0.0 && e.loop_gain <= 1.0))
            throw ConfigError(where + "loop_gain must be in (0, 1]");
        for (double k : {e.input_tap_ratio, e.output_tap_ratio})
            if (!(k > 0.0 && k <= 1.0)) throw ConfigError(where + "tap ratios must be in (0, 1]");
        if (i > 0 && !(e.position > s.sensors[i - 1].position))
            throw ConfigError(where + "positions must be strictly increasing");
    }
}

struct PeakRef {
    int sensor_id = 0;  // 1-based position in the scenario
    int peak_id = 0;    // 0-based within the sensor

    friend bool operator==(const PeakRef&, const PeakRef&) = default;
};

inline std::string to_string(const PeakRef& p) {
    return "sensor " + std::to_string(p.sensor_id) + " peak " + std::to_string(p.peak_id);
}

struct PeakResidue {
    PeakRef ref;
    double delay = 0.0;    // round-trip, s
    double residue = 0.0;  // delay mod period, s
};

struct ResidueSet {
    double period = 0.0;
    std::vector<PeakResidue> peaks;
};

struct FeasibilityReport {
    bool feasible = true;
    double min_circular_gap = 0.0;
    double delta = 0.0;
    std::optional<std::pair<PeakRef, PeakRef>> violating_pair;
    std::optional<std::pair<PeakRef, PeakRef>> closest_pair;
};

enum class PeakSelection {
    all,           // every MZI arm / ring pass
    primary_only,  // one peak per sensor (the shortest path)
};

inline double fold_delay(double delay, double period) {
    double r = std::fmod(delay, period);
    if (r < 0.0) r += period;
    if (r >= period) r -= period;
    return r;
}

inline ResidueSet roundtrip_delays(const LadderScenario& s, double period,
                                   PeakSelection selection = PeakSelection::all) {
    if (!(period > 0.0)) throw ConfigError("code period must be positive");
    ResidueSet out;
    out.period = period;
    for (std::size_t i = 0; i < s.sensors.size(); ++i) {
        const auto& e = s.sensors[i];
        const double base = 2.0 * e.position / s.group_velocity;
        const double step = e.imbalance / s.group_velocity;
        const int peaks = selection == PeakSelection::all ? e.peak_count() : 1;
        for (int m = 0; m < peaks; ++m) {
            const double tau = base + m * step;
            out.peaks.push_back({{static_cast<int>(i) + 1, m}, tau, fold_delay(tau, period)});
        }
    }
    return out;
}

inline ResidueSet roundtrip_delays(const LadderScenario& s,
                                   PeakSelection selection = PeakSelection::all) {
    if (!s.code) throw ConfigError("roundtrip_delays: scenario has no code attached");
    return roundtrip_delays(s, s.code->period_duration(), selection);
}

/// Minimum circular distance between folded peaks; feasible iff it exceeds delta.
inline FeasibilityReport check_separation(const ResidueSet& residues, double delta) {
    if (!(delta > 0.0)) throw ConfigError("separation delta must be positive");
    FeasibilityReport rep;
    rep.delta = delta;
    rep.min_circular_gap = residues.period;
    const auto& p = residues.peaks;
    if (p.size() < 2) return rep;

    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p[a].residue < p[b].residue; });

    std::size_t best_a = order.back(), best_b = order.front();
    double best = p[order.front()].residue + residues.period - p[order.back()].residue;
    for (std::size_t k = 1; k < order.size(); ++k) {
        const double gap = p[order[k]].residue - p[order[k - 1]].residue;
        if (gap < best) {
            best = gap;
            best_a = order[k - 1];
            best_b = order[k];
        }
    }
    rep.min_circular_gap = best;
    rep.closest_pair = std::make_pair(p[best_a].ref, p[best_b].ref);
    rep.feasible = best > delta;
    if (!rep.feasible) rep.violating_pair = rep.closest_pair;
    return rep;
}

/// Capacity estimate floor(period / delta).
inline long long max_sensor_bound(double period, double delta) {
    if (!(period > 0.0 && delta > 0.0)) throw ConfigError("max_sensor_bound: need positive inputs");
    // guard against 80e-6 / 250e-9 landing a hair under 320
    return static_cast<long long>(std::floor(period / delta * (1.0 + 1e-12)));
}

/// Valid Legendre lengths in [n_min, n_max] whose period keeps every peak
/// more than delta apart. Ascending.
inline std::vector<int> search_code_length(const LadderScenario& s, double chip_duration,
                                           double delta, int n_min, int n_max,
                                           PeakSelection selection = PeakSelection::all,
                                           unsigned threads = 0) {
    if (!(chip_duration > 0.0)) throw ConfigError("chip_duration must be positive");
    if (n_max < n_min) return {};
    std::vector<int> candidates;
    for (int n = std::max(n_min, 3); n <= n_max; ++n)
        if (is_valid_length(n)) candidates.push_back(n);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, std::max<std::size_t>(1, candidates.size() / 64 + 1));

    auto worker = [&](std::size_t begin, std::size_t end) {
        std::vector<int> ok;
        for (std::size_t i = begin; i < end; ++i) {
            const int n = candidates[i];
            if (check_separation(roundtrip_delays(s, n * chip_duration, selection), delta).feasible)
                ok.push_back(n);
        }
        return ok;
    };

    std::vector<int> result;
    if (threads <= 1) {
        result = worker(0, candidates.size());
    } else {
        std::vector<std::future<std::vector<int>>> parts;
        const std::size_t chunk = (candidates.size() + threads - 1) / threads;
        for (std::size_t b = 0; b < candidates.size(); b += chunk)
            parts.push_back(std::async(std::launch::async, worker, b,
                                       std::min(candidates.size(), b + chunk)));
        for (auto& f : parts) {
            auto v = f.get();
            result.insert(result.end(), v.begin(), v.end());
        }
        std::sort(result.begin(), result.end());
    }
    return result;
}

/// Power tap ratios 1/n, 1/(n-1), ..., 1 so every element receives 1/n of the bus input.
inline std::vector<double> equalize_couplers(int n_sensors) {
    if (n_sensors < 1) throw ConfigError("equalize_couplers: need at least one sensor");
    std::vector<double> k(static_cast<std::size_t>(n_sensors));
    for (int j = 1; j <= n_sensors; ++j) k[j - 1] = 1.0 / (n_sensors - j + 1);
    return k;
}

/// Tap ratios that deliver equal power to every element after the given
/// one-way bus losses (dB, per element). With zero losses this reduces to
/// equalize_couplers(n). The last ratio is always 1.
inline std::vector<double> equalize_couplers(std::span<const double> one_way_loss_db) {
    if (one_way_loss_db.empty()) throw ConfigError("equalize_couplers: need at least one sensor");
    std::vector<double> share;
    double total = 0.0;
    for (double db : one_way_loss_db) {
        share.push_back(std::pow(10.0, db / 10.0));
        total += share.back();
    }
    std::vector<double> k;
    double used = 0.0;
    for (double s : share) {
        s /= total;
        k.push_back(std::min(1.0, s / (1.0 - used)));
        used += s;
    }
    k.back() = 1.0;
    return k;
}

/// One-way fiber loss to each sensor of a scenario, dB.
inline std::vector<double> bus_losses_db(const LadderScenario& s) {
    std::vector<double> out;
    for (const auto& e : s.sensors) out.push_back(s.fiber_attenuation * e.position / 1000.0);
    return out;
}

/// Fraction of bus power coupled into each element: k_j * prod_{i<j} (1 - k_i).
inline std::vector<double> drive_fractions(std::span<const double> ratios) {
    std::vector<double> out;
    out.reserve(ratios.size());
    double through = 1.0;
    for (double k : ratios) {
        out.push_back(k * through);
        through *= 1.0 - k;
    }
    return out;
}

} // namespace qdas
