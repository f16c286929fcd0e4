#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nlbb/mechanism.hpp"
#include "nlbb/mild_solver.hpp"
#include "nlbb/motion.hpp"

namespace nlbb {

struct SimulationConfig {
    std::uint64_t seed = 20240601;
    int replicates = 100000;
    std::size_t population_cap = 1000000;
    double tree_dt = 1e-3;
    double epsilon = 1e-3;      // particle mass
    double mass_floor = 1e-3;   // excursion-stream mass floor
    int threads = 0;            // 0 = hardware concurrency, capped at 8
    int resolved_threads() const;
};

struct CheckRequest {
    std::string name;
    std::map<std::string, double> params;
    double param(const std::string& key, double fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

struct ExperimentConfig {
    MechanismSpec mechanism;
    DisplacementKernel displacement;
    MotionSpec motion;
    SolverConfig solver;
    SimulationConfig simulation;
    std::vector<CheckRequest> checks;

    std::string config_hash;  // covers the canonical form plus the seed

    void rehash();

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    std::string to_json_text() const;

    // Built-in reference configuration: M0 mechanism, unit diffusion,
    // standard-normal displacement, full check list.
    static ExperimentConfig reference();
};

// The reference mechanism and the jump-bearing battery used by the
// verification suite.
MechanismSpec mechanism_m0();
std::vector<std::pair<std::string, MechanismSpec>> mechanism_battery();

}  // namespace nlbb
