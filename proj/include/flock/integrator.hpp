#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flock/particle_system.hpp"
#include "flock/weights.hpp"

namespace flock {

/// Tolerances and limits for the adaptive stepper and for event handling.
/// eps_x / eps_v are absolute quantities; the configuration layer scales
/// the documented defaults by the initial position / velocity magnitude.
struct StepControl {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    double dt_init = 1e-3;
    double dt_min = 1e-14;
    double dt_max = 0.5;
    double eps_x = 1e-8;            // position-coincidence tolerance
    double eps_v = 1e-6;            // velocity-coincidence tolerance
    double event_bisect_tol = 1e-12; // event-time localization tolerance

    void validate() const;
    StepControl scaled(double tol_factor, double eps_factor) const;
};

enum class EventKind { Collision, Sticking };

struct EventRecord {
    double t = 0.0;             // event time (sticking: extrapolated contact)
    EventKind kind = EventKind::Collision;
    int a = -1, b = -1;         // smallest member index of each cluster, a < b
    double contact_speed = 0.0; // predicted relative speed at contact
    double t_detect = 0.0;      // time the eps_x crossing was localized
};

const char* to_string(EventKind k);

/// State snapshot at one recorded instant.
struct StepRecord {
    double t = 0.0;
    std::vector<double> x, v; // n*dim
    std::uint32_t partition_version = 0;
};

/// Per-step time series used by the diagnostics module.
struct DiagnosticsSeries {
    int n = 0, dim = 0;
    std::vector<double> times;
    std::vector<double> r_series;
    std::vector<double> R_series;        // extended reals (may hold +inf)
    std::vector<double> momentum_series; // dim values per sample
    std::vector<double> max_speed_series;
    std::vector<double> v_increments;    // n values per sample: |dv_i| since previous

    std::size_t size() const { return times.size(); }
};

struct MergeInfo {
    double t = 0.0;
    int rep_a = -1, rep_b = -1;
    double r_before = 0.0; // velocity diameter r just before the union
    double R_before = 0.0; // dissipation functional just before the union
};

enum class RunStatus { Completed, StepUnderflowed, NonFiniteState, Aborted };

const char* to_string(RunStatus s);

struct RunSpec {
    WeightKernel kernel = WeightKernel::singular(0.5, 1e-11);
    StepControl ctrl;
    Normalization normalization = Normalization::OverN;
    double t_final = 1.0;
    double cadence = 0.0; // output sample spacing; <= 0 records only t=0, events, T
    std::uint64_t max_steps = 20'000'000;
};

struct SimResult {
    RunSpec spec;
    ParticleSystem final_state;
    std::vector<StepRecord> steps;   // every accepted step endpoint, incl. t = 0
    std::vector<StepRecord> samples; // cadence grid plus event instants
    std::vector<EventRecord> events; // nondecreasing in t
    std::vector<MergeInfo> merges;
    DiagnosticsSeries diag;          // aligned with `steps`
    RunStatus status = RunStatus::Completed;
    std::string error;
    std::uint64_t n_accepted = 0, n_rejected = 0;

    double mean_dt() const;
    int sticking_count() const;
    int collision_count() const;
};

/// One accepted embedded RK 4(5) step with the cluster constraint
/// re-enforced.  Returns the new state, the accepted dt and the local
/// error estimate (scaled; <= 1 means within tolerance).
struct StepOutcome {
    ParticleSystem state;
    double dt_accepted = 0.0;
    double error_estimate = 0.0;
};
StepOutcome step_adaptive(const ParticleSystem& state, const WeightKernel& kernel,
                          const StepControl& ctrl, double dt_suggestion = 0.0);

/// Integrate from the initial state to spec.t_final, localizing pair
/// events on the dense output, merging clusters at sticking times and
/// carrying collisions through the regularized singularity.  Failures
/// return the completed prefix with a status other than Completed.
SimResult simulate(const ParticleSystem& initial, const RunSpec& spec);

/// Refinement ladder: rerun with geometrically tightened tolerances
/// (tol_factor per level on rel/abs tol, eps_factor on the kernel floor
/// and the event tolerances) and compare consecutive levels on a common
/// time grid.
struct LadderLevel {
    RunSpec spec;
    SimResult result;
    double sup_dist_prev = 0.0; // sup-norm distance to previous level
    double mean_dt = 0.0;
    double order_vs_prev = 0.0; // observed order w.r.t. mean dt
};
struct LadderReport {
    std::vector<LadderLevel> levels;
    std::vector<double> grid; // common comparison times
    double observed_order() const; // median of per-pair estimates
};
LadderReport simulate_refinement_ladder(const ParticleSystem& initial, const RunSpec& base,
                                        int levels, double tol_factor = 0.1,
                                        double eps_factor = 0.25);

} // namespace flock
