#include "flock/config.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace flock {

using nlohmann::json;

namespace {

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            ok = ok || it.key() == k;
        if (!ok)
            throw SchemaError(path + "." + it.key(), "unknown key");
    }
}

double get_num(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key))
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_number())
        throw SchemaError(path + "." + key, "expected a number");
    return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
    if (!obj.contains(key))
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer())
        throw SchemaError(path + "." + key, "expected an integer");
    return v.get<int>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
    if (!obj.contains(key))
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_string())
        throw SchemaError(path + "." + key, "expected a string");
    return v.get<std::string>();
}

std::vector<double> get_matrix(const json& v, const std::string& path) {
    if (!v.is_array())
        throw SchemaError(path, "expected an array of rows");
    std::vector<double> out;
    std::size_t row_len = 0;
    for (std::size_t r = 0; r < v.size(); ++r) {
        const json& row = v[r];
        if (!row.is_array())
            throw SchemaError(path + "[" + std::to_string(r) + "]", "expected an array");
        if (r == 0)
            row_len = row.size();
        else if (row.size() != row_len)
            throw SchemaError(path + "[" + std::to_string(r) + "]", "ragged rows");
        for (const json& e : row) {
            if (!e.is_number())
                throw SchemaError(path + "[" + std::to_string(r) + "]", "expected numbers");
            out.push_back(e.get<double>());
        }
    }
    return out;
}

KernelConfig parse_kernel(const json& obj, const std::string& path, KernelConfig base) {
    expect_keys(obj, path, {"kind", "alpha", "K", "beta", "floor"});
    KernelConfig k = base;
    k.kind = get_str(obj, path, "kind", base.kind);
    if (k.kind != "singular" && k.kind != "cucker-smale")
        throw SchemaError(path + ".kind", "must be 'singular' or 'cucker-smale'");
    k.alpha = get_num(obj, path, "alpha", base.alpha);
    k.K = get_num(obj, path, "K", base.K);
    k.beta = get_num(obj, path, "beta", base.beta);
    k.floor = get_num(obj, path, "floor", base.floor);
    if (k.kind == "singular" && !(k.alpha > 0.0))
        throw SchemaError(path + ".alpha", "must be > 0");
    if (k.kind == "cucker-smale" && !(k.K > 0.0))
        throw SchemaError(path + ".K", "must be > 0");
    if (k.kind == "cucker-smale" && !(k.beta >= 0.0))
        throw SchemaError(path + ".beta", "must be >= 0");
    if (k.floor != kAuto && !(k.floor >= 0.0))
        throw SchemaError(path + ".floor", "must be >= 0 (or omitted)");
    return k;
}

StepControlConfig parse_step_control(const json& obj, const std::string& path,
                                     StepControlConfig base) {
    expect_keys(obj, path,
                {"rel_tol", "abs_tol", "dt_init", "dt_min", "dt_max", "eps_x", "eps_v",
                 "event_bisect_tol"});
    StepControlConfig c = base;
    c.rel_tol = get_num(obj, path, "rel_tol", base.rel_tol);
    c.abs_tol = get_num(obj, path, "abs_tol", base.abs_tol);
    c.dt_init = get_num(obj, path, "dt_init", base.dt_init);
    c.dt_min = get_num(obj, path, "dt_min", base.dt_min);
    c.dt_max = get_num(obj, path, "dt_max", base.dt_max);
    c.eps_x = get_num(obj, path, "eps_x", base.eps_x);
    c.eps_v = get_num(obj, path, "eps_v", base.eps_v);
    c.event_bisect_tol = get_num(obj, path, "event_bisect_tol", base.event_bisect_tol);
    for (double v : {c.rel_tol, c.abs_tol, c.dt_init, c.dt_min, c.dt_max, c.event_bisect_tol})
        if (!(v > 0.0))
            throw SchemaError(path, "tolerances must be positive");
    return c;
}

// Deterministic uniform doubles independent of the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double unit() { return double(gen_() >> 11) * 0x1.0p-53; } // [0,1)
    double symmetric() { return 2.0 * unit() - 1.0; }          // [-1,1)

private:
    std::mt19937_64 gen_;
};

void build_random_cloud(ParticleSystem& s, const RandomCloud& rc, std::uint64_t seed) {
    Rng rng(seed);
    const int n = s.n, d = s.dim;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c)
                s.x[std::size_t(i) * d + c] = rc.box_halfwidth * rng.symmetric();
        double dmin = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                dmin = std::min(dmin, s.distance(i, j));
        if (n == 1 || dmin >= rc.min_separation)
            break;
        if (attempt == 9999)
            throw InvalidParameter("could not draw a cloud satisfying min_separation");
    }
    // velocities uniform in the ball of radius `speed` (rejection from the cube)
    for (int i = 0; i < n; ++i) {
        for (;;) {
            double sq = 0.0;
            for (int c = 0; c < d; ++c) {
                s.v[std::size_t(i) * d + c] = rng.symmetric();
                sq += s.v[std::size_t(i) * d + c] * s.v[std::size_t(i) * d + c];
            }
            if (sq <= 1.0) {
                for (int c = 0; c < d; ++c)
                    s.v[std::size_t(i) * d + c] *= rc.speed;
                break;
            }
        }
    }
}

} // namespace

std::vector<std::string> scenario_names() {
    return {"critical-pair", "crossing-pair", "flock-classic", "many-body",
            "backward-nonuniqueness"};
}

bool is_scenario(const std::string& name) {
    for (const auto& s : scenario_names())
        if (s == name)
            return true;
    return false;
}

SimConfig scenario_config(const std::string& name) {
    SimConfig cfg;
    cfg.initial.kind = InitialSpec::Kind::Scenario;
    cfg.initial.scenario = name;
    if (name == "critical-pair") {
        cfg.kernel = {"singular", 0.5, 1.0, 0.5, kAuto};
        cfg.n = 2;
        cfg.dim = 1;
        cfg.t_final = 3.0;
    } else if (name == "crossing-pair") {
        cfg.kernel = {"singular", 0.5, 1.0, 0.5, kAuto};
        cfg.n = 2;
        cfg.dim = 1;
        cfg.t_final = 10.0;
    } else if (name == "flock-classic") {
        cfg.kernel = {"cucker-smale", 0.5, 1.0, 0.5, kAuto};
        cfg.n = 10;
        cfg.dim = 2;
        cfg.t_final = 5.0;
        cfg.seed = 7;
    } else if (name == "many-body") {
        cfg.kernel = {"singular", 0.3, 1.0, 0.5, kAuto};
        cfg.n = 10;
        cfg.dim = 2;
        cfg.t_final = 5.0;
        cfg.seed = 7;
    } else if (name == "backward-nonuniqueness") {
        cfg = scenario_config("critical-pair");
        cfg.initial.scenario = "backward-nonuniqueness";
        cfg.t_final = 2.0;
    } else {
        throw SchemaError("initial.scenario", "unknown scenario '" + name + "'");
    }
    return cfg;
}

SimConfig parse_config(const json& doc) {
    if (!doc.is_object())
        throw SchemaError("", "configuration must be a JSON object");
    expect_keys(doc, "",
                {"kernel", "n", "dim", "normalization", "t_final", "initial", "step_control",
                 "output", "seed"});

    // scenario base (if any) supplies defaults
    SimConfig base;
    bool have_scenario = false;
    if (doc.contains("initial")) {
        const json& ini = doc.at("initial");
        if (!ini.is_object())
            throw SchemaError("initial", "expected an object");
        if (ini.contains("scenario")) {
            const json& sc = ini.at("scenario");
            if (!sc.is_string())
                throw SchemaError("initial.scenario", "expected a string");
            base = scenario_config(sc.get<std::string>());
            have_scenario = true;
        }
    } else {
        throw SchemaError("initial", "missing required key");
    }

    SimConfig cfg = base;
    if (doc.contains("kernel")) {
        if (!doc.at("kernel").is_object())
            throw SchemaError("kernel", "expected an object");
        cfg.kernel = parse_kernel(doc.at("kernel"), "kernel", base.kernel);
    } else if (!have_scenario) {
        throw SchemaError("kernel", "missing required key");
    }

    cfg.n = get_int(doc, "", "n", base.n);
    cfg.dim = get_int(doc, "", "dim", base.dim);
    cfg.t_final = get_num(doc, "", "t_final", base.t_final);
    cfg.normalization = get_str(doc, "", "normalization", base.normalization);
    if (cfg.normalization != "over-n" && cfg.normalization != "unnormalized")
        throw SchemaError("normalization", "must be 'over-n' or 'unnormalized'");
    if (doc.contains("seed")) {
        const json& s = doc.at("seed");
        if (!s.is_number_integer())
            throw SchemaError("seed", "expected an integer");
        cfg.seed = s.get<std::uint64_t>();
    }

    const json& ini = doc.at("initial");
    expect_keys(ini, "initial", {"scenario", "positions", "velocities", "random"});
    if (have_scenario) {
        if (ini.contains("positions") || ini.contains("velocities") || ini.contains("random"))
            throw SchemaError("initial", "scenario excludes explicit or random initial data");
    } else if (ini.contains("positions") || ini.contains("velocities")) {
        if (!ini.contains("positions") || !ini.contains("velocities"))
            throw SchemaError("initial", "positions and velocities must both be given");
        cfg.initial.kind = InitialSpec::Kind::Explicit;
        cfg.initial.positions = get_matrix(ini.at("positions"), "initial.positions");
        cfg.initial.velocities = get_matrix(ini.at("velocities"), "initial.velocities");
    } else if (ini.contains("random")) {
        const json& rnd = ini.at("random");
        if (!rnd.is_object())
            throw SchemaError("initial.random", "expected an object");
        expect_keys(rnd, "initial.random", {"box_halfwidth", "speed", "min_separation"});
        cfg.initial.kind = InitialSpec::Kind::Random;
        cfg.initial.random.box_halfwidth =
            get_num(rnd, "initial.random", "box_halfwidth", 1.0);
        cfg.initial.random.speed = get_num(rnd, "initial.random", "speed", 1.0);
        cfg.initial.random.min_separation =
            get_num(rnd, "initial.random", "min_separation", 1e-3);
        if (!(cfg.initial.random.box_halfwidth > 0) || !(cfg.initial.random.speed >= 0) ||
            !(cfg.initial.random.min_separation >= 0))
            throw SchemaError("initial.random", "invalid cloud parameters");
    } else {
        throw SchemaError("initial", "one of scenario, positions+velocities, random is required");
    }

    if (doc.contains("step_control")) {
        if (!doc.at("step_control").is_object())
            throw SchemaError("step_control", "expected an object");
        cfg.step_control = parse_step_control(doc.at("step_control"), "step_control",
                                              base.step_control);
    }
    if (doc.contains("output")) {
        const json& o = doc.at("output");
        if (!o.is_object())
            throw SchemaError("output", "expected an object");
        expect_keys(o, "output", {"cadence", "dir", "reproducible"});
        cfg.output.cadence = get_num(o, "output", "cadence", base.output.cadence);
        cfg.output.dir = get_str(o, "output", "dir", base.output.dir);
        if (o.contains("reproducible")) {
            if (!o.at("reproducible").is_boolean())
                throw SchemaError("output.reproducible", "expected a boolean");
            cfg.output.reproducible = o.at("reproducible").get<bool>();
        }
        if (cfg.output.cadence != kAuto && !(cfg.output.cadence > 0))
            throw SchemaError("output.cadence", "must be > 0 (or omitted)");
    }

    if (!(cfg.n >= 1))
        throw SchemaError("n", "must be >= 1");
    if (!(cfg.dim >= 1))
        throw SchemaError("dim", "must be >= 1");
    if (!(cfg.t_final > 0))
        throw SchemaError("t_final", "must be > 0");

    if (cfg.initial.kind == InitialSpec::Kind::Explicit) {
        const std::size_t want = std::size_t(cfg.n) * cfg.dim;
        if (cfg.initial.positions.size() != want || cfg.initial.velocities.size() != want)
            throw SchemaError("initial.positions", "arrays must have shape n x dim");
    }
    return cfg;
}

SimConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("", "cannot open config file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json serialize_config(const SimConfig& cfg) {
    json doc;
    json k;
    k["kind"] = cfg.kernel.kind;
    if (cfg.kernel.kind == "singular")
        k["alpha"] = cfg.kernel.alpha;
    else {
        k["K"] = cfg.kernel.K;
        k["beta"] = cfg.kernel.beta;
    }
    k["floor"] = cfg.kernel.floor;
    doc["kernel"] = k;
    doc["n"] = cfg.n;
    doc["dim"] = cfg.dim;
    doc["normalization"] = cfg.normalization;
    doc["t_final"] = cfg.t_final;
    json ini;
    switch (cfg.initial.kind) {
    case InitialSpec::Kind::Scenario:
        ini["scenario"] = cfg.initial.scenario;
        break;
    case InitialSpec::Kind::Explicit: {
        json pos = json::array(), vel = json::array();
        for (int i = 0; i < cfg.n; ++i) {
            json prow = json::array(), vrow = json::array();
            for (int c = 0; c < cfg.dim; ++c) {
                prow.push_back(cfg.initial.positions[std::size_t(i) * cfg.dim + c]);
                vrow.push_back(cfg.initial.velocities[std::size_t(i) * cfg.dim + c]);
            }
            pos.push_back(prow);
            vel.push_back(vrow);
        }
        ini["positions"] = pos;
        ini["velocities"] = vel;
        break;
    }
    case InitialSpec::Kind::Random:
        ini["random"] = {{"box_halfwidth", cfg.initial.random.box_halfwidth},
                         {"speed", cfg.initial.random.speed},
                         {"min_separation", cfg.initial.random.min_separation}};
        break;
    }
    doc["initial"] = ini;
    doc["step_control"] = {{"rel_tol", cfg.step_control.rel_tol},
                           {"abs_tol", cfg.step_control.abs_tol},
                           {"dt_init", cfg.step_control.dt_init},
                           {"dt_min", cfg.step_control.dt_min},
                           {"dt_max", cfg.step_control.dt_max},
                           {"eps_x", cfg.step_control.eps_x},
                           {"eps_v", cfg.step_control.eps_v},
                           {"event_bisect_tol", cfg.step_control.event_bisect_tol}};
    doc["output"] = {{"cadence", cfg.output.cadence},
                     {"dir", cfg.output.dir},
                     {"reproducible", cfg.output.reproducible}};
    doc["seed"] = cfg.seed;
    return doc;
}

ResolvedSetup resolve(const SimConfig& cfg_in) {
    SimConfig cfg = cfg_in;
    const Normalization norm =
        cfg.normalization == "over-n" ? Normalization::OverN : Normalization::Unnormalized;

    ParticleSystem s(cfg.n, cfg.dim, norm);

    if (cfg.initial.kind == InitialSpec::Kind::Scenario) {
        const std::string& name = cfg.initial.scenario;
        if (name == "critical-pair" || name == "crossing-pair" ||
            name == "backward-nonuniqueness") {
            if (cfg.n != 2 || cfg.dim != 1)
                throw SchemaError("initial.scenario", "'" + name + "' requires n=2, dim=1");
            if (cfg.kernel.kind != "singular")
                throw SchemaError("kernel.kind", "'" + name + "' requires the singular kernel");
            const double w0 = 1.0;
            const double psi_w0 = std::pow(w0, 1.0 - cfg.kernel.alpha) / (1.0 - cfg.kernel.alpha);
            const double u0 = name == "crossing-pair" ? -3.0 : -psi_w0;
            s.x = {-0.5 * w0, 0.5 * w0};
            s.v = {-0.5 * u0, 0.5 * u0};
        } else if (name == "flock-classic" || name == "many-body") {
            if (cfg.n < 2)
                throw SchemaError("n", "'" + name + "' requires n >= 2");
            build_random_cloud(s, cfg.initial.random, cfg.seed);
        } else {
            throw SchemaError("initial.scenario", "unknown scenario '" + name + "'");
        }
    } else if (cfg.initial.kind == InitialSpec::Kind::Explicit) {
        s.x = cfg.initial.positions;
        s.v = cfg.initial.velocities;
    } else {
        build_random_cloud(s, cfg.initial.random, cfg.seed);
    }
    s.validate();

    double pos_scale = 1.0, vel_scale = 1.0;
    for (double v : s.x)
        pos_scale = std::max(pos_scale, std::abs(v));
    for (double v : s.v)
        vel_scale = std::max(vel_scale, std::abs(v));

    if (cfg.kernel.floor == kAuto)
        cfg.kernel.floor = cfg.kernel.kind == "singular" ? 1e-11 * pos_scale : 0.0;
    if (cfg.step_control.eps_x == kAuto)
        cfg.step_control.eps_x = 1e-8 * pos_scale;
    if (cfg.step_control.eps_v == kAuto)
        cfg.step_control.eps_v = 1e-6 * vel_scale;
    if (cfg.output.cadence == kAuto)
        cfg.output.cadence = cfg.t_final / 200.0;

    if (cfg.kernel.kind == "singular" && !(cfg.kernel.floor > 0))
        throw SchemaError("kernel.floor", "simulation requires a positive floor");

    ResolvedSetup out;
    out.config = cfg;
    out.initial = std::move(s);
    out.spec.kernel = cfg.kernel.kind == "singular"
                          ? WeightKernel::singular(cfg.kernel.alpha, cfg.kernel.floor)
                          : WeightKernel::cucker_smale(cfg.kernel.K, cfg.kernel.beta);
    out.spec.normalization = norm;
    out.spec.t_final = cfg.t_final;
    out.spec.cadence = cfg.output.cadence;
    StepControl ctrl;
    ctrl.rel_tol = cfg.step_control.rel_tol;
    ctrl.abs_tol = cfg.step_control.abs_tol;
    ctrl.dt_init = cfg.step_control.dt_init;
    ctrl.dt_min = cfg.step_control.dt_min;
    ctrl.dt_max = cfg.step_control.dt_max;
    ctrl.eps_x = cfg.step_control.eps_x;
    ctrl.eps_v = cfg.step_control.eps_v;
    ctrl.event_bisect_tol = cfg.step_control.event_bisect_tol;
    ctrl.validate();
    out.spec.ctrl = ctrl;
    return out;
}

} // namespace flock
