// JSON documents: scenario (network + code) and run configuration.

#pragma once

#include "qdas/correlator.hpp"
#include "qdas/error.hpp"
#include "qdas/fiber_sim.hpp"
#include "qdas/planner.hpp"
#include "qdas/ppa_codes.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace qdas {

using json = nlohmann::json;

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses JSON text, reporting syntax errors as "file:line:col: message".
inline json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                          e.what());
    }
}

template <class T>
T required(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(where + ": missing required field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": field '" + key + "': " + e.what());
    }
}

template <class T>
T optional_field(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": field '" + key + "': " + e.what());
    }
}

} // namespace detail

inline LadderScenario scenario_from_json(const json& j, const std::string& origin = "scenario") {
    LadderScenario s;
    s.group_velocity = detail::required<double>(j, "group_velocity_m_per_s", origin);
    s.fiber_attenuation = detail::required<double>(j, "fiber_attenuation_db_per_km", origin);

    const std::string code_where = origin + ": code";
    if (!j.contains("code")) throw ConfigError(origin + ": missing required field 'code'");
    const auto& c = j.at("code");
    const int n = detail::required<int>(c, "length", code_where);
    const double chip = detail::required<double>(c, "chip_duration_s", code_where);
    s.oversampling = detail::required<int>(c, "oversampling", code_where);
    if (!(chip > 0.0)) throw ConfigError(code_where + ": chip_duration_s must be positive");
    try {
        s.code = legendre_sequence(n, chip);
    } catch (const InvalidLengthError& e) {
        throw ConfigError(code_where + ": " + e.what());
    }

    if (!j.contains("sensors") || !j.at("sensors").is_array())
        throw ConfigError(origin + ": 'sensors' must be an array");
    int idx = 0;
    for (const auto& js : j.at("sensors")) {
        const std::string where = origin + ": sensors[" + std::to_string(idx++) + "]";
        SensorElement e;
        e.position = detail::required<double>(js, "position_m", where);
        const auto kind = detail::required<std::string>(js, "kind", where);
        if (kind == "mzi")
            e.kind = SensorKind::mzi;
        else if (kind == "ring")
            e.kind = SensorKind::ring;
        else
            throw ConfigError(where + ": kind must be \"mzi\" or \"ring\"");
        e.imbalance = detail::required<double>(js, "imbalance_m", where);
        e.input_tap_ratio = detail::required<double>(js, "input_tap_ratio", where);
        e.output_tap_ratio = detail::required<double>(js, "output_tap_ratio", where);
        e.ring_taps = detail::optional_field<int>(js, "ring_taps", e.ring_taps, where);
        e.loop_gain = detail::optional_field<double>(js, "loop_gain", e.loop_gain, where);
        e.arm_loss_db = detail::optional_field<std::array<double, 2>>(js, "arm_loss_db", e.arm_loss_db, where);
        e.arm_phase = detail::optional_field<std::array<double, 2>>(js, "arm_phase_rad", e.arm_phase, where);
        s.sensors.push_back(e);
    }
    validate(s);
    return s;
}

inline json scenario_to_json(const LadderScenario& s) {
    json j;
    j["group_velocity_m_per_s"] = s.group_velocity;
    j["fiber_attenuation_db_per_km"] = s.fiber_attenuation;
    if (s.code)
        j["code"] = {{"length", s.code->n},
                     {"chip_duration_s", s.code->chip_duration},
                     {"oversampling", s.oversampling}};
    j["sensors"] = json::array();
    for (const auto& e : s.sensors) {
        json js = {{"position_m", e.position},
                   {"kind", e.kind == SensorKind::mzi ? "mzi" : "ring"},
                   {"imbalance_m", e.imbalance},
                   {"input_tap_ratio", e.input_tap_ratio},
                   {"output_tap_ratio", e.output_tap_ratio},
                   {"arm_loss_db", e.arm_loss_db},
                   {"arm_phase_rad", e.arm_phase}};
        if (e.kind == SensorKind::ring) {
            js["ring_taps"] = e.ring_taps;
            js["loop_gain"] = e.loop_gain;
        }
        j["sensors"].push_back(js);
    }
    return j;
}

inline LadderScenario load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(detail::parse_json(detail::read_file(path), path.string()), path.string());
}

struct RunConfig {
    std::filesystem::path scenario_path;
    LadderScenario scenario;
    NoiseModel noise;
    std::vector<Excitation> excitations;
    double duration = 0.0;  // s
    double delta = 250e-9;  // minimum peak separation, s
    ReferenceMode mode = ReferenceMode::perfect;
    Window window = Window::none;
    bool sync = false;
    std::int64_t start_sample = 0;
    int tolerance_bins = 2;
    std::filesystem::path output_dir = "out";
};

inline ReferenceMode parse_mode(const std::string& s) {
    if (s == "perfect") return ReferenceMode::perfect;
    if (s == "matched") return ReferenceMode::matched;
    throw ConfigError("mode must be \"perfect\" or \"matched\", got \"" + s + "\"");
}

inline Window parse_window(const std::string& s) {
    if (s == "none") return Window::none;
    if (s == "hann") return Window::hann;
    throw ConfigError("window must be \"none\" or \"hann\", got \"" + s + "\"");
}

inline std::vector<Excitation> excitations_from_json(const json& arr, const std::string& where) {
    std::vector<Excitation> out;
    if (!arr.is_array()) throw ConfigError(where + ": 'excitations' must be an array");
    int idx = 0;
    for (const auto& jx : arr) {
        const std::string w = where + ": excitations[" + std::to_string(idx++) + "]";
        Excitation x;
        x.sensor_id = detail::required<int>(jx, "sensor", w);
        x.frequency = detail::required<double>(jx, "frequency_hz", w);
        x.amplitude = detail::required<double>(jx, "amplitude_rad", w);
        x.phase = detail::optional_field<double>(jx, "phase_rad", 0.0, w);
        out.push_back(x);
    }
    return out;
}

/// Run configuration; `scenario` is resolved relative to the config file.
inline RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const json j = detail::parse_json(detail::read_file(path), origin);
    RunConfig cfg;
    const auto scen = detail::required<std::string>(j, "scenario", origin);
    cfg.scenario_path = path.parent_path() / scen;
    cfg.scenario = load_scenario(cfg.scenario_path);
    cfg.duration = detail::required<double>(j, "duration_s", origin);
    cfg.noise.seed = detail::required<std::uint64_t>(j, "seed", origin);
    cfg.delta = detail::required<double>(j, "delta_s", origin);
    if (!j.contains("noise")) throw ConfigError(origin + ": missing required field 'noise'");
    const auto& jn = j.at("noise");
    cfg.noise.laser_linewidth = detail::required<double>(jn, "laser_linewidth_hz", origin + ": noise");
    cfg.noise.receiver_noise_sigma = detail::required<double>(jn, "receiver_noise_sigma", origin + ": noise");
    if (cfg.noise.laser_linewidth < 0.0 || cfg.noise.receiver_noise_sigma < 0.0)
        throw ConfigError(origin + ": noise parameters must be non-negative");
    cfg.excitations = excitations_from_json(j.value("excitations", json::array()), origin);
    cfg.mode = parse_mode(detail::optional_field<std::string>(j, "mode", "perfect", origin));
    cfg.window = parse_window(detail::optional_field<std::string>(j, "window", "none", origin));
    cfg.sync = detail::optional_field<bool>(j, "sync", false, origin);
    cfg.start_sample = detail::optional_field<std::int64_t>(j, "start_sample", 0, origin);
    cfg.tolerance_bins = detail::optional_field<int>(j, "tolerance_bins", 2, origin);
    cfg.output_dir = detail::optional_field<std::string>(j, "output_dir", "out", origin);

    if (!(cfg.duration >= cfg.scenario.period_duration()))
        throw ConfigError(origin + ": duration_s shorter than one code period");
    if (!(cfg.delta > 0.0)) throw ConfigError(origin + ": delta_s must be positive");
    for (const auto& x : cfg.excitations)
        if (x.sensor_id < 1 || x.sensor_id > static_cast<int>(cfg.scenario.sensors.size()))
            throw ConfigError(origin + ": excitation references unknown sensor " +
                              std::to_string(x.sensor_id));
    return cfg;
}

inline json feasibility_to_json(const FeasibilityReport& r, const ResidueSet& res) {
    json j;
    j["feasible"] = r.feasible;
    j["min_circular_gap_s"] = r.min_circular_gap;
    j["delta_s"] = r.delta;
    j["period_s"] = res.period;
    auto pair_json = [](const std::pair<PeakRef, PeakRef>& p) {
        return json::array({{{"sensor", p.first.sensor_id}, {"peak", p.first.peak_id}},
                            {{"sensor", p.second.sensor_id}, {"peak", p.second.peak_id}}});
    };
    j["violating_pair"] = r.violating_pair ? pair_json(*r.violating_pair) : json(nullptr);
    j["peaks"] = json::array();
    for (const auto& p : res.peaks)
        j["peaks"].push_back({{"sensor", p.ref.sensor_id},
                              {"peak", p.ref.peak_id},
                              {"delay_s", p.delay},
                              {"residue_s", p.residue}});
    return j;
}

} // namespace qdas
