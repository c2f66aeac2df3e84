#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flock/export.hpp"
#include "flock/oracle.hpp"
#include "flock/version.hpp"

using nlohmann::json;
using namespace flock;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
    double alpha = -1.0;
    int n = 0;
    int dim = 0;
    double t_final = 0.0;
    std::int64_t seed = -1;
    std::string normalize;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--alpha", alpha, "override the singular exponent");
        cmd->add_option("--n", n, "override the particle count");
        cmd->add_option("--dim", dim, "override the dimension");
        cmd->add_option("--t-final", t_final, "override the horizon");
        cmd->add_option("--seed", seed, "override the RNG seed");
        cmd->add_option("--normalize", normalize, "'over-n' or 'unnormalized'");
    }

    void apply(json& doc) const {
        if (alpha > 0)
            doc["kernel"]["alpha"] = alpha;
        if (n > 0)
            doc["n"] = n;
        if (dim > 0)
            doc["dim"] = dim;
        if (t_final > 0)
            doc["t_final"] = t_final;
        if (seed >= 0)
            doc["seed"] = seed;
        if (!normalize.empty())
            doc["normalization"] = normalize;
    }
};

void print_report(const diagnostics::Report& rep) {
    for (const auto& c : rep.checks) {
        std::printf("[%s] %-26s value=%-12.6g threshold=%-12.6g %s\n",
                    c.pass ? "PASS" : (c.asserted ? "FAIL" : "info"), c.name.c_str(), c.value,
                    c.threshold, c.detail.c_str());
    }
    std::printf("verification: %s\n", rep.all_pass() ? "PASS" : "FAIL");
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 const Overrides& ov) {
    std::ifstream in(config_path);
    if (!in)
        throw SchemaError("", "cannot open config file '" + config_path + "'");
    json doc;
    in >> doc;
    ov.apply(doc);
    const SimConfig cfg = parse_config(doc);
    const RunArtifacts art = run_and_export(cfg, out_dir, verify_options_for(cfg));
    std::printf("status: %s  steps: %llu  events: %d collision / %d sticking\n",
                to_string(art.run.status), (unsigned long long)art.run.n_accepted,
                art.run.collision_count(), art.run.sticking_count());
    print_report(art.report);
    if (art.run.status != RunStatus::Completed)
        return kExitRuntime;
    return art.report.all_pass() ? kExitPass : kExitVerifyFail;
}

int run_verify(const std::string& run_dir) {
    const std::string path = run_dir + "/report.json";
    std::ifstream in(path);
    if (!in) {
        std::fprintf(stderr, "no report.json under '%s'\n", run_dir.c_str());
        return kExitRuntime;
    }
    json rep;
    in >> rep;
    bool pass = rep.at("summary").at("pass").get<bool>();
    for (const auto& c : rep.at("checks")) {
        std::printf("[%s] %s\n",
                    c.at("pass").get<bool>() ? "PASS"
                                             : (c.at("asserted").get<bool>() ? "FAIL" : "info"),
                    c.at("name").get<std::string>().c_str());
    }
    std::printf("verification: %s\n", pass ? "PASS" : "FAIL");
    return pass ? kExitPass : kExitVerifyFail;
}

int run_oracle(double alpha, double w0, double u0, double t_query, bool have_t) {
    oracle::TwoBodyState init{w0, u0, alpha};
    const oracle::TwoBodyOutcome out = oracle::classify(init);
    json j;
    j["class"] = oracle::to_string(out.cls);
    if (out.t_event)
        j["t_event"] = *out.t_event;
    if (out.impact_speed)
        j["impact_speed"] = *out.impact_speed;
    if (out.w_limit)
        j["w_limit"] = *out.w_limit;
    if (have_t) {
        const oracle::ReducedPoint p = oracle::solve_reduced(init, t_query);
        j["state_at_t"] = {{"t", t_query}, {"w", p.w}, {"u", p.u}};
    }
    std::printf("%s\n", j.dump(2).c_str());
    return kExitPass;
}

int run_demo(const std::string& name, const std::string& out_dir) {
    if (name == "backward-nonuniqueness") {
        const BackwardDemo demo = backward_demo(scenario_config(name), out_dir);
        std::printf("t_stick: %.9g\npre-sticking sup distance:  %.3g (needs >= %.3g)\n"
                    "post-sticking sup distance: %.3g (needs <= %.3g)\ncertified: %s\n",
                    demo.t_stick, demo.pre_sup, demo.pre_gap, demo.post_sup, demo.post_tol,
                    demo.certified ? "yes" : "no");
        return demo.certified ? kExitPass : kExitVerifyFail;
    }
    if (!is_scenario(name)) {
        std::fprintf(stderr, "unknown demo '%s'\n", name.c_str());
        return kExitUsage;
    }
    const SimConfig cfg = scenario_config(name);
    const RunArtifacts art = run_and_export(cfg, out_dir, verify_options_for(cfg));
    std::printf("scenario '%s': %d collision / %d sticking events\n", name.c_str(),
                art.run.collision_count(), art.run.sticking_count());
    print_report(art.report);
    if (art.run.status != RunStatus::Completed)
        return kExitRuntime;
    return art.report.all_pass() ? kExitPass : kExitVerifyFail;
}

int run_sweep(const std::string& config_path, int levels, const std::string& out_dir) {
    const SimConfig cfg = parse_config_file(config_path);
    const ResolvedSetup setup = resolve(cfg);
    const LadderReport ladder = simulate_refinement_ladder(setup.initial, setup.spec, levels);

    json levels_json = json::array();
    std::printf("%-6s %-12s %-12s %-12s %-10s %-8s\n", "level", "rel_tol", "sup_dist", "mean_dt",
                "order", "events");
    for (std::size_t k = 0; k < ladder.levels.size(); ++k) {
        const auto& lvl = ladder.levels[k];
        const diagnostics::TvReport tv = diagnostics::total_variation(lvl.result);
        double energy = -1.0;
        try {
            energy = diagnostics::energy_identity_residual(lvl.result, 1.0);
        } catch (const std::exception&) {
        }
        std::printf("%-6zu %-12.3g %-12.3g %-12.3g %-10.3g %d/%d\n", k, lvl.spec.ctrl.rel_tol,
                    lvl.sup_dist_prev, lvl.mean_dt, lvl.order_vs_prev,
                    lvl.result.collision_count(), lvl.result.sticking_count());
        json lj;
        lj["rel_tol"] = lvl.spec.ctrl.rel_tol;
        lj["abs_tol"] = lvl.spec.ctrl.abs_tol;
        lj["eps_x"] = lvl.spec.ctrl.eps_x;
        lj["eps_v"] = lvl.spec.ctrl.eps_v;
        lj["kernel_floor"] = lvl.spec.kernel.floor();
        lj["sup_dist_prev"] = lvl.sup_dist_prev;
        lj["mean_dt"] = lvl.mean_dt;
        lj["order_vs_prev"] = lvl.order_vs_prev;
        lj["tv_n_averaged"] = tv.n_averaged;
        lj["energy_residual"] = energy;
        lj["collisions"] = lvl.result.collision_count();
        lj["sticking"] = lvl.result.sticking_count();
        json stick_times = json::array();
        for (const auto& e : lvl.result.events)
            if (e.kind == EventKind::Sticking)
                stick_times.push_back(e.t);
        lj["sticking_times"] = stick_times;
        levels_json.push_back(lj);
    }
    std::printf("observed order (median): %.3g\n", ladder.observed_order());

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        json j;
        j["levels"] = levels_json;
        j["observed_order"] = ladder.observed_order();
        std::ofstream out(out_dir + "/sweep.json");
        out << j.dump(2) << "\n";
    }
    return kExitPass;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flocksim: alignment dynamics with singular communication weights"};
    app.set_version_flag("--version", std::string(kBuildId));
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "run a configuration and verify it");
    std::string config_path, out_dir;
    Overrides ov;
    sim->add_option("--config", config_path, "configuration JSON")->required();
    sim->add_option("--out", out_dir, "output directory");
    ov.add_flags(sim);

    auto* ver = app.add_subcommand("verify", "evaluate a run directory's report");
    std::string run_dir;
    ver->add_option("--run", run_dir, "run directory")->required();

    auto* orc = app.add_subcommand("oracle", "two-body closed-form reference");
    double alpha = 0.5, w0 = 1.0, u0 = -2.0, t_query = 0.0;
    orc->add_option("--alpha", alpha, "singular exponent in (0,1)")->required();
    orc->add_option("--w0", w0, "initial separation (> 0)")->required();
    orc->add_option("--u0", u0, "initial relative velocity (< 0)")->required();
    auto* t_opt = orc->add_option("--t", t_query, "also report the reduced state at time t");

    auto* demo = app.add_subcommand("demo", "run a named scenario");
    std::string demo_name = "critical-pair";
    std::string demo_out;
    demo->add_option("--name", demo_name, "scenario name")->required();
    demo->add_option("--out", demo_out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "refinement ladder over a configuration");
    std::string sweep_config, sweep_out;
    int levels = 3;
    sweep->add_option("--config", sweep_config, "configuration JSON")->required();
    sweep->add_option("--levels", levels, "number of ladder levels (>= 2)");
    sweep->add_option("--out", sweep_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (sim->parsed())
            return run_simulate(config_path, out_dir, ov);
        if (ver->parsed())
            return run_verify(run_dir);
        if (orc->parsed())
            return run_oracle(alpha, w0, u0, t_query, t_opt->count() > 0);
        if (demo->parsed())
            return run_demo(demo_name, demo_out);
        if (sweep->parsed())
            return run_sweep(sweep_config, levels, sweep_out);
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitUsage;
    } catch (const OutOfDomain& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
