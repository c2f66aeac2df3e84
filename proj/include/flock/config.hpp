#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flock/integrator.hpp"

namespace flock {

/// kAuto marks a value to be derived from the initial data at resolve time.
inline constexpr double kAuto = -1.0;

struct KernelConfig {
    std::string kind = "singular"; // "singular" | "cucker-smale"
    double alpha = 0.5;
    double K = 1.0;
    double beta = 0.5;
    double floor = kAuto;

    bool operator==(const KernelConfig&) const = default;
};

struct RandomCloud {
    double box_halfwidth = 1.0;
    double speed = 1.0;
    double min_separation = 1e-3;

    bool operator==(const RandomCloud&) const = default;
};

struct InitialSpec {
    enum class Kind { Scenario, Explicit, Random };
    Kind kind = Kind::Random;
    std::string scenario;
    std::vector<double> positions;  // n*dim, row-major
    std::vector<double> velocities; // n*dim
    RandomCloud random;

    bool operator==(const InitialSpec&) const = default;
};

struct StepControlConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    double dt_init = 1e-3;
    double dt_min = 1e-14;
    double dt_max = 0.5;
    double eps_x = kAuto;
    double eps_v = kAuto;
    double event_bisect_tol = 1e-12;

    bool operator==(const StepControlConfig&) const = default;
};

struct OutputConfig {
    double cadence = kAuto;
    std::string dir = "out";
    bool reproducible = true;

    bool operator==(const OutputConfig&) const = default;
};

struct SimConfig {
    KernelConfig kernel;
    int n = 0;
    int dim = 0;
    std::string normalization = "over-n"; // "over-n" | "unnormalized"
    double t_final = 0.0;
    InitialSpec initial;
    StepControlConfig step_control;
    OutputConfig output;
    std::uint64_t seed = 42;

    bool operator==(const SimConfig&) const = default;
};

/// Parse and validate a configuration document.  Unknown keys are rejected
/// with the offending path.  When the document names a scenario, the
/// scenario's base configuration supplies defaults and the document's other
/// keys override them.
SimConfig parse_config(const nlohmann::json& doc);
SimConfig parse_config_file(const std::string& path);

nlohmann::json serialize_config(const SimConfig& cfg);

/// Shipped scenarios.
std::vector<std::string> scenario_names();
bool is_scenario(const std::string& name);
SimConfig scenario_config(const std::string& name);

/// Everything needed to run: the fully resolved configuration (auto values
/// replaced), the initial particle state and the engine run spec.
struct ResolvedSetup {
    SimConfig config;
    ParticleSystem initial;
    RunSpec spec;
};
ResolvedSetup resolve(const SimConfig& cfg);

} // namespace flock
