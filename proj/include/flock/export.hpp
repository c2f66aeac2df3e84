#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flock/config.hpp"
#include "flock/diagnostics.hpp"
#include "flock/integrator.hpp"

namespace flock {

/// Shortest decimal form that round-trips to the same double.
std::string shortest_decimal(double v);
double parse_decimal(const std::string& s);

void write_trajectory_csv(const std::string& path, const SimResult& run);
/// Re-read a trajectory written by write_trajectory_csv (bitwise).
std::vector<StepRecord> read_trajectory_csv(const std::string& path, int* n_out, int* dim_out);

void write_events_jsonl(const std::string& path, const std::vector<EventRecord>& events);
std::vector<EventRecord> read_events_jsonl(const std::string& path);

void write_diagnostics_csv(const std::string& path, const SimResult& run);

nlohmann::json report_to_json(const diagnostics::Report& report);
void write_report_json(const std::string& path, const diagnostics::Report& report);

nlohmann::json summary_json(const SimConfig& resolved, const SimResult& run);

/// Simulate a resolved configuration, verify it and (when out_dir is not
/// empty) write trajectory.csv, events.jsonl, diagnostics.csv, report.json
/// and summary.json.
struct RunArtifacts {
    SimConfig config;
    SimResult run;
    diagnostics::Report report;
};
RunArtifacts run_and_export(const SimConfig& cfg, const std::string& out_dir,
                            const diagnostics::VerifyOptions& opt = {});

/// Per-scenario verification thresholds.
diagnostics::VerifyOptions verify_options_for(const SimConfig& cfg);

/// The backward ill-posedness demonstration: the critical pair run forward,
/// against a pre-merged cluster started at the pair's post-sticking state.
/// The two trajectories coincide after the sticking time and differ before
/// it; there is no way to integrate backwards out of the merged state.
struct BackwardDemo {
    RunArtifacts pair_run;    // separated critical pair
    RunArtifacts merged_run;  // single pre-merged cluster
    double t_stick = 0.0;     // detected sticking time of the pair run
    double post_sup = 0.0;    // sup distance for t > t_stick + margin
    double pre_sup = 0.0;     // sup distance on [0, t_stick - margin]
    double margin = 0.01;
    bool certified = false;   // post_sup <= post_tol and pre_sup >= pre_gap
    double post_tol = 1e-6;
    double pre_gap = 0.1;
};
BackwardDemo backward_demo(const SimConfig& base, const std::string& out_dir);

} // namespace flock
