#include "flock/export.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flock/version.hpp"

namespace flock {

using nlohmann::json;

std::string shortest_decimal(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_decimal(const std::string& s) {
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("bad numeric field '" + s + "'");
    return v;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
        out.push_back(field);
    return out;
}

} // namespace

void write_trajectory_csv(const std::string& path, const SimResult& run) {
    std::ofstream out = open_out(path);
    const int n = run.diag.n, d = run.diag.dim;
    out << "t";
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c)
            out << ",x_" << i << "_" << c;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c)
            out << ",v_" << i << "_" << c;
    out << "\n";
    for (const auto& rec : run.samples) {
        out << shortest_decimal(rec.t);
        for (double v : rec.x)
            out << "," << shortest_decimal(v);
        for (double v : rec.v)
            out << "," << shortest_decimal(v);
        out << "\n";
    }
}

std::vector<StepRecord> read_trajectory_csv(const std::string& path, int* n_out, int* dim_out) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty trajectory file");
    const std::vector<std::string> header = split_csv(line);
    int n = 0, d = 0;
    for (const auto& h : header) {
        if (h.rfind("x_", 0) == 0) {
            int i, c;
            if (std::sscanf(h.c_str(), "x_%d_%d", &i, &c) == 2) {
                n = std::max(n, i + 1);
                d = std::max(d, c + 1);
            }
        }
    }
    if (n_out)
        *n_out = n;
    if (dim_out)
        *dim_out = d;
    std::vector<StepRecord> out;
    const std::size_t nd = std::size_t(n) * d;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != 1 + 2 * nd)
            throw std::runtime_error("trajectory row has wrong arity");
        StepRecord rec;
        rec.t = parse_decimal(f[0]);
        rec.x.resize(nd);
        rec.v.resize(nd);
        for (std::size_t k = 0; k < nd; ++k) {
            rec.x[k] = parse_decimal(f[1 + k]);
            rec.v[k] = parse_decimal(f[1 + nd + k]);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_events_jsonl(const std::string& path, const std::vector<EventRecord>& events) {
    std::ofstream out = open_out(path);
    for (const auto& e : events) {
        json j;
        j["t"] = e.t;
        j["kind"] = to_string(e.kind);
        j["members"] = {e.a, e.b};
        out << j.dump() << "\n";
    }
}

std::vector<EventRecord> read_events_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read '" + path + "'");
    std::vector<EventRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const json j = json::parse(line);
        EventRecord e;
        e.t = j.at("t").get<double>();
        e.kind = j.at("kind").get<std::string>() == "sticking" ? EventKind::Sticking
                                                               : EventKind::Collision;
        e.a = j.at("members")[0].get<int>();
        e.b = j.at("members")[1].get<int>();
        out.push_back(e);
    }
    return out;
}

void write_diagnostics_csv(const std::string& path, const SimResult& run) {
    std::ofstream out = open_out(path);
    const int d = run.diag.dim;
    out << "t,r,R";
    for (int c = 0; c < d; ++c)
        out << ",momentum_" << c;
    out << ",max_speed\n";
    for (std::size_t k = 0; k < run.diag.size(); ++k) {
        out << shortest_decimal(run.diag.times[k]) << "," << shortest_decimal(run.diag.r_series[k])
            << "," << shortest_decimal(run.diag.R_series[k]);
        for (int c = 0; c < d; ++c)
            out << "," << shortest_decimal(run.diag.momentum_series[k * d + c]);
        out << "," << shortest_decimal(run.diag.max_speed_series[k]) << "\n";
    }
}

json report_to_json(const diagnostics::Report& report) {
    json checks = json::array();
    int n_pass = 0, n_asserted = 0;
    for (const auto& c : report.checks) {
        checks.push_back({{"name", c.name},
                          {"pass", c.pass},
                          {"asserted", c.asserted},
                          {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                          {"threshold",
                           std::isfinite(c.threshold) ? json(c.threshold) : json(nullptr)},
                          {"detail", c.detail}});
        n_asserted += c.asserted;
        n_pass += c.asserted && c.pass;
    }
    return {{"checks", checks},
            {"summary",
             {{"pass", report.all_pass()}, {"n_pass", n_pass}, {"n_asserted", n_asserted}}}};
}

void write_report_json(const std::string& path, const diagnostics::Report& report) {
    std::ofstream out = open_out(path);
    out << report_to_json(report).dump(2) << "\n";
}

json summary_json(const SimConfig& resolved, const SimResult& run) {
    json j;
    j["config"] = serialize_config(resolved);
    j["build"] = kBuildId;
    j["status"] = to_string(run.status);
    if (!run.error.empty())
        j["error"] = run.error;
    j["steps_accepted"] = run.n_accepted;
    j["steps_rejected"] = run.n_rejected;
    j["events"] = {{"collisions", run.collision_count()}, {"sticking", run.sticking_count()}};
    j["t_final"] = run.final_state.t;
    j["clusters"] = run.final_state.partition.n_clusters();
    return j;
}

diagnostics::VerifyOptions verify_options_for(const SimConfig& cfg) {
    diagnostics::VerifyOptions opt;
    if (cfg.initial.kind == InitialSpec::Kind::Scenario &&
        (cfg.initial.scenario == "crossing-pair" || cfg.initial.scenario == "critical-pair" ||
         cfg.initial.scenario == "backward-nonuniqueness"))
        opt.energy_residual_target = 1e-3;
    return opt;
}

RunArtifacts run_and_export(const SimConfig& cfg, const std::string& out_dir,
                            const diagnostics::VerifyOptions& opt) {
    ResolvedSetup setup = resolve(cfg);
    RunArtifacts art;
    art.config = setup.config;
    art.run = simulate(setup.initial, setup.spec);
    art.report = diagnostics::verify_run(art.run, opt);
    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        write_trajectory_csv(out_dir + "/trajectory.csv", art.run);
        write_events_jsonl(out_dir + "/events.jsonl", art.run.events);
        write_diagnostics_csv(out_dir + "/diagnostics.csv", art.run);
        write_report_json(out_dir + "/report.json", art.report);
        std::ofstream s = open_out(out_dir + "/summary.json");
        s << summary_json(art.config, art.run).dump(2) << "\n";
    }
    return art;
}

BackwardDemo backward_demo(const SimConfig& base, const std::string& out_dir) {
    BackwardDemo demo;
    SimConfig pair_cfg = base;
    demo.pair_run = run_and_export(pair_cfg, out_dir.empty() ? "" : out_dir + "/pair",
                                   verify_options_for(pair_cfg));

    // sticking time of the pair run
    demo.t_stick = -1.0;
    for (const auto& e : demo.pair_run.run.events)
        if (e.kind == EventKind::Sticking)
            demo.t_stick = e.t;
    if (demo.t_stick < 0.0)
        return demo; // not certified: no sticking happened

    // the pre-merged configuration: both particles at the post-sticking
    // state (weighted mean of the pair), moving at the conserved mean velocity
    const ResolvedSetup setup = resolve(pair_cfg);
    const int d = setup.initial.dim;
    std::vector<double> xm(d, 0.0), vm(d, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < d; ++c) {
            xm[c] += 0.5 * setup.initial.x[std::size_t(i) * d + c];
            vm[c] += 0.5 * setup.initial.v[std::size_t(i) * d + c];
        }
    // the merged cluster sits where the pair sticks: midpoint advected to t_stick
    for (int c = 0; c < d; ++c)
        xm[c] += vm[c] * demo.t_stick;

    SimConfig merged_cfg = setup.config;
    merged_cfg.initial.kind = InitialSpec::Kind::Explicit;
    merged_cfg.initial.scenario.clear();
    merged_cfg.initial.positions.clear();
    merged_cfg.initial.velocities.clear();
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < d; ++c) {
            merged_cfg.initial.positions.push_back(xm[c]);
            merged_cfg.initial.velocities.push_back(vm[c]);
        }
    demo.merged_run = run_and_export(merged_cfg, out_dir.empty() ? "" : out_dir + "/merged",
                                     verify_options_for(merged_cfg));

    // compare on the common cadence grid
    const auto& sa = demo.pair_run.run.samples;
    const auto& sb = demo.merged_run.run.samples;
    auto nearest = [](const std::vector<StepRecord>& ss, double t) {
        std::size_t best = 0;
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ss.size(); ++i)
            if (std::abs(ss[i].t - t) < gap) {
                gap = std::abs(ss[i].t - t);
                best = i;
            }
        return best;
    };
    for (const auto& rec : sa) {
        const StepRecord& other = sb[nearest(sb, rec.t)];
        if (std::abs(other.t - rec.t) > 1e-9)
            continue;
        double dist = 0.0;
        for (std::size_t k = 0; k < rec.x.size(); ++k)
            dist = std::max(dist, std::abs(rec.x[k] - other.x[k]));
        for (std::size_t k = 0; k < rec.v.size(); ++k)
            dist = std::max(dist, std::abs(rec.v[k] - other.v[k]));
        if (rec.t > demo.t_stick + demo.margin)
            demo.post_sup = std::max(demo.post_sup, dist);
        if (rec.t < demo.t_stick - demo.margin)
            demo.pre_sup = std::max(demo.pre_sup, dist);
    }
    demo.certified = demo.post_sup <= demo.post_tol && demo.pre_sup >= demo.pre_gap;

    if (!out_dir.empty()) {
        json j;
        j["t_stick"] = demo.t_stick;
        j["post_sup"] = demo.post_sup;
        j["pre_sup"] = demo.pre_sup;
        j["margin"] = demo.margin;
        j["post_tol"] = demo.post_tol;
        j["pre_gap"] = demo.pre_gap;
        j["certified"] = demo.certified;
        std::ofstream out = open_out(out_dir + "/backward_demo.json");
        out << j.dump(2) << "\n";
    }
    return demo;
}

} // namespace flock
