#pragma once

#include "qdas/scenario_io.hpp"

#include <filesystem>
#include <string>

namespace fixtures {

inline std::filesystem::path config(const std::string& name) {
    return std::filesystem::path(QDAS_CONFIG_DIR) / name;
}

inline qdas::LadderScenario ladder_scenario() { return qdas::load_scenario(config("three_sensor_ladder.json")); }

// Single MZI, unit couplers, no fiber loss.
inline qdas::LadderScenario single_mzi(double position = 1000.0, double imbalance = 212.0, int n = 4003) {
    qdas::LadderScenario s;
    s.fiber_attenuation = 0.0;
    s.code = qdas::legendre_sequence(n, 20e-9);
    qdas::SensorElement e;
    e.position = position;
    e.imbalance = imbalance;
    s.sensors.push_back(e);
    return s;
}

}  // namespace fixtures
