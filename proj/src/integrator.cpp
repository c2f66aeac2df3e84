#include "flock/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace flock {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) tableau with the standard quartic dense output.
// ---------------------------------------------------------------------------
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// Quartic interpolant of one accepted step.
struct DenseStep {
    double t0 = 0.0, h = 0.0;
    std::size_t size = 0;
    std::vector<double> rc; // 5 * size, blocks rc1..rc5

    double theta_of(double t) const { return (t - t0) / h; }

    double eval_component(std::size_t i, double theta) const {
        const double* r1 = rc.data();
        const double* r2 = r1 + size;
        const double* r3 = r2 + size;
        const double* r4 = r3 + size;
        const double* r5 = r4 + size;
        const double th1 = 1.0 - theta;
        return r1[i] + theta * (r2[i] + th1 * (r3[i] + theta * (r4[i] + th1 * r5[i])));
    }

    void eval(double theta, std::vector<double>& out) const {
        out.resize(size);
        for (std::size_t i = 0; i < size; ++i)
            out[i] = eval_component(i, theta);
    }
};

// ---------------------------------------------------------------------------
// Stepper over the flattened state y = [x, v].
// ---------------------------------------------------------------------------
class Stepper {
public:
    Stepper(const ParticleSystem& proto, const WeightKernel& kernel, const StepControl& ctrl)
        : scratch_(proto), kernel_(kernel), ctrl_(ctrl), nd_(std::size_t(proto.n) * proto.dim) {
        y_.resize(2 * nd_);
        for (auto& k : k_)
            k.resize(2 * nd_);
        ytmp_.resize(2 * nd_);
        load(proto);
    }

    void load(const ParticleSystem& s) {
        scratch_ = s;
        std::copy(s.x.begin(), s.x.end(), y_.begin());
        std::copy(s.v.begin(), s.v.end(), y_.begin() + nd_);
        t_ = s.t;
    }

    double t() const { return t_; }
    const ParticleSystem& state() const { return scratch_; }

    /// Write the current y into the scratch system and return it.
    const ParticleSystem& sync_state() {
        std::copy(y_.begin(), y_.begin() + nd_, scratch_.x.begin());
        std::copy(y_.begin() + nd_, y_.end(), scratch_.v.begin());
        scratch_.t = t_;
        scratch_.enforce_clusters();
        return scratch_;
    }

    /// Attempt one step of size dt.  On success advances t, fills the dense
    /// interpolant and returns true; on failure returns false.  err_out is
    /// the scaled error estimate either way.
    bool try_step(double dt, double* err_out) {
        deriv(t_, y_, k_[0]);
        const auto& k1 = k_[0];

        stage(dt, {a21});
        deriv(t_ + c2 * dt, ytmp_, k_[1]);
        stage(dt, {a31, a32});
        deriv(t_ + c3 * dt, ytmp_, k_[2]);
        stage(dt, {a41, a42, a43});
        deriv(t_ + c4 * dt, ytmp_, k_[3]);
        stage(dt, {a51, a52, a53, a54});
        deriv(t_ + c5 * dt, ytmp_, k_[4]);
        stage(dt, {a61, a62, a63, a64, a65});
        deriv(t_ + dt, ytmp_, k_[5]);

        // 5th-order solution
        for (std::size_t i = 0; i < y_.size(); ++i)
            ytmp_[i] = y_[i] + dt * (b1 * k1[i] + b3 * k_[2][i] + b4 * k_[3][i] +
                                     b5 * k_[4][i] + b6 * k_[5][i]);
        deriv(t_ + dt, ytmp_, k_[6]);

        double err = 0.0;
        for (std::size_t i = 0; i < y_.size(); ++i) {
            const double ei = dt * (e1 * k1[i] + e3 * k_[2][i] + e4 * k_[3][i] +
                                    e5 * k_[4][i] + e6 * k_[5][i] + e7 * k_[6][i]);
            const double sc =
                ctrl_.abs_tol + ctrl_.rel_tol * std::max(std::abs(y_[i]), std::abs(ytmp_[i]));
            err += (ei / sc) * (ei / sc);
        }
        err = std::sqrt(err / double(y_.size()));
        *err_out = err;
        if (!std::isfinite(err))
            throw NonFinite("non-finite error estimate");
        if (err > 1.0)
            return false;

        build_dense(dt);
        y_.swap(ytmp_);
        t_ += dt;
        return true;
    }

    const DenseStep& dense() const { return dense_; }

    /// Replace the current point by the dense-output state at t_cut in
    /// (t0, t0+h] of the last accepted step.
    void cut_back_to(double t_cut) {
        const double theta = dense_.theta_of(t_cut);
        dense_.eval(theta, y_);
        t_ = t_cut;
    }

    void set_time_exact(double t) { t_ = t; }

private:
    void deriv(double t, const std::vector<double>& y, std::vector<double>& dydt) {
        std::copy(y.begin(), y.begin() + nd_, scratch_.x.begin());
        std::copy(y.begin() + nd_, y.end(), scratch_.v.begin());
        scratch_.t = t;
        const std::vector<double> a = rhs(scratch_, kernel_);
        dydt.resize(2 * nd_);
        std::copy(y.begin() + nd_, y.end(), dydt.begin()); // dx/dt = v
        std::copy(a.begin(), a.end(), dydt.begin() + nd_);
    }

    void stage(double dt, std::initializer_list<double> coeff) {
        for (std::size_t i = 0; i < y_.size(); ++i) {
            double acc = 0.0;
            int s = 0;
            for (double aij : coeff)
                acc += aij * k_[s++][i];
            ytmp_[i] = y_[i] + dt * acc;
        }
    }

    void build_dense(double dt) {
        dense_.t0 = t_;
        dense_.h = dt;
        dense_.size = y_.size();
        dense_.rc.resize(5 * y_.size());
        double* r1 = dense_.rc.data();
        double* r2 = r1 + y_.size();
        double* r3 = r2 + y_.size();
        double* r4 = r3 + y_.size();
        double* r5 = r4 + y_.size();
        for (std::size_t i = 0; i < y_.size(); ++i) {
            const double ydiff = ytmp_[i] - y_[i];
            const double bspl = dt * k_[0][i] - ydiff;
            r1[i] = y_[i];
            r2[i] = ydiff;
            r3[i] = bspl;
            r4[i] = ydiff - dt * k_[6][i] - bspl;
            r5[i] = dt * (d1 * k_[0][i] + d3 * k_[2][i] + d4 * k_[3][i] + d5 * k_[4][i] +
                          d6 * k_[5][i] + d7 * k_[6][i]);
        }
    }

    ParticleSystem scratch_;
    WeightKernel kernel_;
    StepControl ctrl_;
    std::size_t nd_;
    double t_ = 0.0;
    std::vector<double> y_, ytmp_;
    std::vector<double> k_[7];
    DenseStep dense_;
};

// ---------------------------------------------------------------------------
// Pair geometry / contact classification
// ---------------------------------------------------------------------------
struct PairGeom {
    double dist = 0.0;
    double u_r = 0.0;   // radial relative velocity (negative: approaching)
    double u_t = 0.0;   // transverse relative speed
    double speed = 0.0; // |v_j - v_i|
};

PairGeom pair_geom_from(const double* xi, const double* xj, const double* vi, const double* vj,
                        int dim) {
    PairGeom g;
    double d2 = 0.0, v2 = 0.0, dv = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double dx = xj[c] - xi[c];
        const double du = vj[c] - vi[c];
        d2 += dx * dx;
        v2 += du * du;
        dv += dx * du;
    }
    g.dist = std::sqrt(d2);
    g.speed = std::sqrt(v2);
    g.u_r = g.dist > 0.0 ? dv / g.dist : -g.speed;
    g.u_t = std::sqrt(std::max(0.0, v2 - g.u_r * g.u_r));
    return g;
}

PairGeom pair_geom(const ParticleSystem& s, int i, int j) {
    return pair_geom_from(s.x.data() + std::size_t(i) * s.dim, s.x.data() + std::size_t(j) * s.dim,
                          s.v.data() + std::size_t(i) * s.dim, s.v.data() + std::size_t(j) * s.dim,
                          s.dim);
}

struct ContactClass {
    bool sticking = false;
    double pred_speed = 0.0; // predicted relative speed at contact
    double t_remaining = 0.0;
};

/// Classify a pair that crossed below eps_x.  For the singular kernel with
/// alpha < 1 the first integral of the pair reduction predicts the radial
/// speed at contact, E = u_r + kappa Psi(dist), and the remaining time to
/// contact on the critical manifold is (1-alpha) dist^alpha / (alpha kappa).
ContactClass classify_contact(const WeightKernel& kernel, double kappa, const PairGeom& g,
                              double eps_v) {
    ContactClass c;
    if (kernel.kind() == KernelKind::Singular && kernel.alpha() < 1.0) {
        const WeightKernel raw = kernel.with_floor(0.0);
        const double e_loc = g.u_r + kappa * raw.primitive(g.dist);
        c.pred_speed = std::hypot(e_loc, g.u_t);
        c.sticking = c.pred_speed < eps_v;
        if (c.sticking) {
            const double a = kernel.alpha();
            c.t_remaining = (1.0 - a) * std::pow(g.dist, a) / (a * kappa);
        }
    } else {
        c.pred_speed = g.speed;
        c.sticking = c.pred_speed < eps_v;
        c.t_remaining = 0.0;
    }
    return c;
}

// Watch over a pair of clusters that entered the eps_x shell.
struct PairWatch {
    int pi, pj; // member indices identifying the clusters
    bool committed = false;
    double t_evt = 0.0;       // scheduled merge time (committed)
    double t_detect = 0.0;    // localized eps_x crossing
    double contact_speed = 0.0;
};

// ---------------------------------------------------------------------------
// Recording helpers
// ---------------------------------------------------------------------------
class Recorder {
public:
    Recorder(SimResult* out, double cadence, double t_final)
        : out_(out), cadence_(cadence), t_final_(t_final) {}

    void record_initial(const ParticleSystem& s) {
        push_step(s);
        push_sample(s);
        if (cadence_ > 0.0)
            next_sample_ = cadence_;
        prev_v_ = s.v;
    }

    /// Record an accepted advance; emits cadence samples inside (t_prev, t].
    void record_advance(const ParticleSystem& s, const DenseStep* dense, bool event_instant) {
        if (dense) {
            while (cadence_ > 0.0 && next_sample_ <= s.t && next_sample_ <= t_final_) {
                if (next_sample_ >= dense->t0)
                    push_dense_sample(*dense, next_sample_, s);
                next_sample_ += cadence_;
            }
        }
        push_step(s);
        if (event_instant)
            push_sample(s);
    }

    void push_step(const ParticleSystem& s) {
        StepRecord rec{s.t, s.x, s.v, s.partition.version()};
        out_->steps.push_back(std::move(rec));
        append_diag(s);
    }

    void push_sample(const ParticleSystem& s) {
        if (!out_->samples.empty() && out_->samples.back().t == s.t) {
            out_->samples.back() = {s.t, s.x, s.v, s.partition.version()};
            return;
        }
        out_->samples.push_back({s.t, s.x, s.v, s.partition.version()});
    }

    /// Overwrite the last recorded step/diagnostic entry (used at merge
    /// instants so the trajectory carries the forward-going state).
    void replace_last(const ParticleSystem& s) {
        out_->steps.pop_back();
        pop_diag();
        push_step(s);
        push_sample(s);
    }

    void set_kernel(const WeightKernel& k) { raw_kernel_ = k.with_floor(0.0); }

private:
    void push_dense_sample(const DenseStep& dense, double t, const ParticleSystem& proto) {
        const double theta = dense.theta_of(t);
        StepRecord rec;
        rec.t = t;
        rec.partition_version = proto.partition.version();
        const std::size_t nd = std::size_t(proto.n) * proto.dim;
        rec.x.resize(nd);
        rec.v.resize(nd);
        for (std::size_t i = 0; i < nd; ++i) {
            rec.x[i] = dense.eval_component(i, theta);
            rec.v[i] = dense.eval_component(nd + i, theta);
        }
        // keep cluster members bitwise identical in emitted samples
        for (int i = 0; i < proto.n; ++i) {
            const int r = proto.partition.find(i);
            if (r == i)
                continue;
            for (int c = 0; c < proto.dim; ++c) {
                rec.x[std::size_t(i) * proto.dim + c] = rec.x[std::size_t(r) * proto.dim + c];
                rec.v[std::size_t(i) * proto.dim + c] = rec.v[std::size_t(r) * proto.dim + c];
            }
        }
        out_->samples.push_back(std::move(rec));
    }

    void append_diag(const ParticleSystem& s) {
        DiagnosticsSeries& d = out_->diag;
        d.times.push_back(s.t);
        d.r_series.push_back(velocity_diameter_r(s));
        d.R_series.push_back(dissipation_R(s, raw_kernel_));
        const std::vector<double> p = momentum(s);
        d.momentum_series.insert(d.momentum_series.end(), p.begin(), p.end());
        d.max_speed_series.push_back(max_speed(s));
        if (prev_v_.empty())
            prev_v_.assign(s.v.size(), 0.0);
        for (int i = 0; i < s.n; ++i) {
            double inc = 0.0;
            for (int c = 0; c < s.dim; ++c) {
                const double dv =
                    s.v[std::size_t(i) * s.dim + c] - prev_v_[std::size_t(i) * s.dim + c];
                inc += dv * dv;
            }
            d.v_increments.push_back(std::sqrt(inc));
        }
        prev_v_ = s.v;
    }

    void pop_diag() {
        DiagnosticsSeries& d = out_->diag;
        d.times.pop_back();
        d.r_series.pop_back();
        d.R_series.pop_back();
        d.momentum_series.resize(d.momentum_series.size() - d.dim);
        d.max_speed_series.pop_back();
        // restore prev_v_ to the state before the popped entry
        for (int i = 0; i < d.n; ++i)
            d.v_increments.pop_back();
        if (!out_->steps.empty())
            prev_v_ = out_->steps.back().v;
    }

    SimResult* out_;
    double cadence_;
    double t_final_;
    double next_sample_ = kInf;
    std::vector<double> prev_v_;
    WeightKernel raw_kernel_ = WeightKernel::singular(0.5);
};

// First time in (t_lo, t_hi] at which the pair distance equals eps_x,
// localized by bisection on the dense output.  Assumes dist(t_lo) >= eps_x
// and dist(t_hi) < eps_x.
double bisect_crossing(const DenseStep& dense, const ParticleSystem& proto, int i, int j,
                       double eps_x, double t_lo, double t_hi, double tol) {
    const std::size_t nd = std::size_t(proto.n) * proto.dim;
    auto dist_at = [&](double t) {
        const double theta = dense.theta_of(t);
        double d2 = 0.0;
        for (int c = 0; c < proto.dim; ++c) {
            const double xi = dense.eval_component(std::size_t(i) * proto.dim + c, theta);
            const double xj = dense.eval_component(std::size_t(j) * proto.dim + c, theta);
            d2 += (xj - xi) * (xj - xi);
        }
        (void)nd;
        return std::sqrt(d2);
    };
    for (int it = 0; it < 200 && t_hi - t_lo > tol; ++it) {
        const double tm = 0.5 * (t_lo + t_hi);
        if (dist_at(tm) < eps_x)
            t_hi = tm;
        else
            t_lo = tm;
    }
    return t_hi;
}

struct CrossingCandidate {
    int pi, pj;    // root indices at detection time
    double t_x;    // localized crossing time
};

} // namespace

// ---------------------------------------------------------------------------
// StepControl
// ---------------------------------------------------------------------------
void StepControl::validate() const {
    if (!(rel_tol > 0) || !(abs_tol > 0) || !(dt_init > 0) || !(dt_min > 0) || !(dt_max > 0) ||
        !(eps_x > 0) || !(eps_v > 0) || !(event_bisect_tol > 0))
        throw InvalidParameter("step control tolerances must be positive");
    if (!(dt_min <= dt_init && dt_init <= dt_max))
        throw InvalidParameter("step control requires dt_min <= dt_init <= dt_max");
}

StepControl StepControl::scaled(double tol_factor, double eps_factor) const {
    StepControl c = *this;
    c.rel_tol *= tol_factor;
    c.abs_tol *= tol_factor;
    c.eps_x *= eps_factor;
    c.eps_v *= eps_factor;
    c.event_bisect_tol *= eps_factor;
    return c;
}

const char* to_string(EventKind k) {
    return k == EventKind::Collision ? "collision" : "sticking";
}

const char* to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::StepUnderflowed: return "step-underflow";
    case RunStatus::NonFiniteState: return "non-finite";
    case RunStatus::Aborted: return "aborted";
    }
    return "?";
}

double SimResult::mean_dt() const {
    if (steps.size() < 2)
        return 0.0;
    return (steps.back().t - steps.front().t) / double(steps.size() - 1);
}

int SimResult::sticking_count() const {
    int n = 0;
    for (const auto& e : events)
        n += e.kind == EventKind::Sticking;
    return n;
}

int SimResult::collision_count() const {
    int n = 0;
    for (const auto& e : events)
        n += e.kind == EventKind::Collision;
    return n;
}

// ---------------------------------------------------------------------------
// step_adaptive
// ---------------------------------------------------------------------------
StepOutcome step_adaptive(const ParticleSystem& state, const WeightKernel& kernel,
                          const StepControl& ctrl, double dt_suggestion) {
    ctrl.validate();
    state.validate();
    if (kernel.kind() == KernelKind::Singular && kernel.floor() <= 0.0)
        throw InvalidParameter("the stepper requires a positive kernel floor");

    Stepper st(state, kernel, ctrl);
    double dt = dt_suggestion > 0.0 ? dt_suggestion : ctrl.dt_init;
    dt = std::clamp(dt, ctrl.dt_min, ctrl.dt_max);
    double err = 0.0;
    for (int attempt = 0; attempt < 400; ++attempt) {
        if (st.try_step(dt, &err)) {
            StepOutcome out;
            out.state = st.sync_state();
            out.dt_accepted = dt;
            out.error_estimate = err;
            return out;
        }
        dt *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        if (dt < ctrl.dt_min)
            throw StepUnderflow("adaptive step fell below dt_min");
    }
    throw StepUnderflow("adaptive step failed to meet tolerance");
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------
SimResult simulate(const ParticleSystem& initial, const RunSpec& spec) {
    spec.ctrl.validate();
    initial.validate();
    if (!(spec.t_final > initial.t))
        throw InvalidParameter("t_final must exceed the initial time");
    if (spec.kernel.kind() == KernelKind::Singular && spec.kernel.floor() <= 0.0)
        throw InvalidParameter("simulate requires a positive kernel floor for singular kernels");

    SimResult res;
    res.spec = spec;
    res.diag.n = initial.n;
    res.diag.dim = initial.dim;

    ParticleSystem state = initial;
    state.normalization = spec.normalization;
    state.enforce_clusters();

    const StepControl& ctrl = spec.ctrl;
    const WeightKernel& kernel = spec.kernel;
    Recorder rec(&res, spec.cadence, spec.t_final);
    rec.set_kernel(kernel);

    auto kappa_of = [&](int ri, int rj) {
        return state.interaction_scale() *
               (state.partition.cluster_size(ri) + state.partition.cluster_size(rj));
    };

    std::vector<PairWatch> watches;
    auto find_watch = [&](int ri, int rj) -> PairWatch* {
        for (auto& w : watches) {
            const int a = state.partition.find(w.pi), b = state.partition.find(w.pj);
            if ((a == ri && b == rj) || (a == rj && b == ri))
                return &w;
        }
        return nullptr;
    };

    auto apply_merge = [&](PairWatch& w) {
        const int ri = state.partition.find(w.pi), rj = state.partition.find(w.pj);
        if (ri == rj)
            return false; // already joined through another chain
        const double r_before = velocity_diameter_r(state);
        const double R_before = dissipation_R(state, kernel);
        const int mi = state.partition.cluster_size(ri), mj = state.partition.cluster_size(rj);
        const int rep_a = std::min(state.partition.representative(ri), state.partition.representative(rj));
        const int rep_b = std::max(state.partition.representative(ri), state.partition.representative(rj));
        const double wa = double(mi) / (mi + mj), wb = double(mj) / (mi + mj);
        std::vector<double> xm(state.dim), vm(state.dim);
        for (int c = 0; c < state.dim; ++c) {
            xm[c] = wa * state.x[std::size_t(ri) * state.dim + c] +
                    wb * state.x[std::size_t(rj) * state.dim + c];
            vm[c] = wa * state.v[std::size_t(ri) * state.dim + c] +
                    wb * state.v[std::size_t(rj) * state.dim + c];
        }
        const int root = state.partition.unite(ri, rj, state.t);
        for (int c = 0; c < state.dim; ++c) {
            state.x[std::size_t(root) * state.dim + c] = xm[c];
            state.v[std::size_t(root) * state.dim + c] = vm[c];
        }
        state.enforce_clusters();
        res.events.push_back({state.t, EventKind::Sticking, rep_a, rep_b, w.contact_speed,
                              w.t_detect});
        res.merges.push_back({state.t, rep_a, rep_b, r_before, R_before});
        return true;
    };

    auto drop_stale_watches = [&]() {
        std::erase_if(watches, [&](const PairWatch& w) {
            return state.partition.same(w.pi, w.pj);
        });
    };

    auto record_collision = [&](double t_event, int ri, int rj, double speed) {
        const int rep_a = std::min(state.partition.representative(ri), state.partition.representative(rj));
        const int rep_b = std::max(state.partition.representative(ri), state.partition.representative(rj));
        res.events.push_back({t_event, EventKind::Collision, rep_a, rep_b, speed, t_event});
    };

    // --- initial coincidence scan -----------------------------------------
    {
        std::vector<int> roots = state.partition.roots();
        bool merged_any = false;
        for (std::size_t a = 0; a < roots.size(); ++a) {
            for (std::size_t b = a + 1; b < roots.size(); ++b) {
                const int ri = state.partition.find(roots[a]), rj = state.partition.find(roots[b]);
                if (ri == rj)
                    continue;
                const PairGeom g = pair_geom(state, ri, rj);
                if (g.dist >= ctrl.eps_x)
                    continue;
                if (g.speed < ctrl.eps_v) {
                    PairWatch w{ri, rj, true, state.t, state.t, g.speed};
                    merged_any |= apply_merge(w);
                } else {
                    record_collision(state.t, ri, rj, g.speed);
                    watches.push_back({ri, rj, false, 0.0, state.t, g.speed});
                }
            }
        }
        if (merged_any)
            drop_stale_watches();
    }

    rec.record_initial(state);

    Stepper st(state, kernel, ctrl);
    double dt = std::clamp(ctrl.dt_init, ctrl.dt_min, ctrl.dt_max);
    const double t_end = spec.t_final;
    int consecutive_rejects = 0;

    auto fail = [&](RunStatus status, const std::string& msg) {
        res.status = status;
        res.error = msg;
        res.final_state = state;
        return res;
    };

    std::vector<CrossingCandidate> candidates;

    try {
        while (state.t < t_end) {
            if (res.n_accepted + res.n_rejected > spec.max_steps)
                return fail(RunStatus::Aborted, "step budget exceeded");

            // Earliest scheduled merge bounds the step.
            double t_stop = t_end;
            for (const auto& w : watches)
                if (w.committed)
                    t_stop = std::min(t_stop, w.t_evt);

            // Apply merges that are due now.
            if (t_stop <= state.t + ctrl.event_bisect_tol && t_stop < t_end) {
                bool did = false;
                std::vector<PairWatch> due;
                for (auto& w : watches)
                    if (w.committed && w.t_evt <= state.t + ctrl.event_bisect_tol)
                        due.push_back(w);
                std::sort(due.begin(), due.end(), [&](const PairWatch& a, const PairWatch& b) {
                    return std::pair(state.partition.representative(a.pi),
                                     state.partition.representative(a.pj)) <
                           std::pair(state.partition.representative(b.pi),
                                     state.partition.representative(b.pj));
                });
                for (auto& w : due)
                    did |= apply_merge(w);
                std::erase_if(watches, [&](const PairWatch& w) {
                    return w.committed && w.t_evt <= state.t + ctrl.event_bisect_tol;
                });
                drop_stale_watches();
                if (did) {
                    rec.replace_last(state);
                    st.load(state);
                }
                continue;
            }

            bool lands_on_stop = false;
            double dt_try = std::min(dt, ctrl.dt_max);
            if (state.t + dt_try >= t_stop) {
                dt_try = t_stop - state.t;
                lands_on_stop = true;
            }

            double err = 0.0;
            bool ok = false;
            try {
                ok = st.try_step(dt_try, &err);
            } catch (const NonFinite& e) {
                return fail(RunStatus::NonFiniteState, e.what());
            } catch (const SingularEvaluation& e) {
                return fail(RunStatus::NonFiniteState, e.what());
            }

            if (!ok) {
                ++res.n_rejected;
                ++consecutive_rejects;
                dt = dt_try * std::max(0.2, 0.9 * std::pow(err, -0.2));
                if (dt < ctrl.dt_min) {
                    if (++consecutive_rejects > 50) {
                        std::ostringstream os;
                        os << "dt underflow at t=" << state.t;
                        double dmin = kInf;
                        const std::vector<int> roots = state.partition.roots();
                        for (std::size_t a = 0; a < roots.size(); ++a)
                            for (std::size_t b = a + 1; b < roots.size(); ++b)
                                dmin = std::min(dmin, state.distance(roots[a], roots[b]));
                        os << ", min pair distance " << dmin;
                        return fail(RunStatus::StepUnderflowed, os.str());
                    }
                    dt = ctrl.dt_min;
                }
                continue;
            }
            consecutive_rejects = 0;
            ++res.n_accepted;
            const DenseStep& dense = st.dense();
            const double t0 = dense.t0, t1 = st.t();

            // ---- scan for eps_x crossings of free pairs ----
            candidates.clear();
            {
                const ParticleSystem& s0 = state; // state at t0 (pre-step)
                const std::vector<int> roots = s0.partition.roots();
                // conservative bound on how far any pair can close in this step
                double vmax = 0.0;
                for (int r : roots) {
                    double sq = 0.0;
                    for (int c = 0; c < s0.dim; ++c) {
                        const double a = s0.v[std::size_t(r) * s0.dim + c];
                        sq += a * a;
                    }
                    vmax = std::max(vmax, sq);
                }
                vmax = 2.0 * std::sqrt(vmax) + 1.0; // slack for velocity change in-step
                const double reach = (t1 - t0) * vmax;

                const std::size_t nd = std::size_t(s0.n) * s0.dim;
                for (std::size_t a = 0; a < roots.size(); ++a) {
                    for (std::size_t b = a + 1; b < roots.size(); ++b) {
                        const int ri = roots[a], rj = roots[b];
                        if (find_watch(ri, rj))
                            continue;
                        const double dist0 = s0.distance(ri, rj);
                        if (dist0 - reach > 4.0 * ctrl.eps_x)
                            continue;
                        // first sampled point of the step below eps_x
                        const int M = 16;
                        double theta_hit = -1.0;
                        for (int m = 1; m <= M; ++m) {
                            const double theta = double(m) / M;
                            double d2 = 0.0;
                            for (int c = 0; c < s0.dim; ++c) {
                                const double xi = dense.eval_component(
                                    std::size_t(ri) * s0.dim + c, theta);
                                const double xj = dense.eval_component(
                                    std::size_t(rj) * s0.dim + c, theta);
                                d2 += (xj - xi) * (xj - xi);
                            }
                            if (std::sqrt(d2) < ctrl.eps_x) {
                                theta_hit = theta;
                                break;
                            }
                        }
                        (void)nd;
                        if (theta_hit < 0.0)
                            continue;
                        const double theta_lo = std::max(0.0, theta_hit - 1.0 / M);
                        const double t_x =
                            bisect_crossing(dense, s0, ri, rj, ctrl.eps_x, t0 + theta_lo * (t1 - t0),
                                            t0 + theta_hit * (t1 - t0), ctrl.event_bisect_tol);
                        candidates.push_back({ri, rj, t_x});
                    }
                }
            }

            if (!candidates.empty()) {
                const double t_cut = std::min_element(candidates.begin(), candidates.end(),
                                                      [](const auto& a, const auto& b) {
                                                          return a.t_x < b.t_x;
                                                      })
                                         ->t_x;
                st.cut_back_to(t_cut);
                state = st.sync_state();

                std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
                    return std::pair(a.pi, a.pj) < std::pair(b.pi, b.pj);
                });
                for (const auto& cand : candidates) {
                    if (cand.t_x > t_cut + ctrl.event_bisect_tol)
                        continue; // will be re-detected after the cut
                    const PairGeom g = pair_geom(state, cand.pi, cand.pj);
                    const ContactClass cc =
                        classify_contact(kernel, kappa_of(cand.pi, cand.pj), g, ctrl.eps_v);
                    if (cc.sticking) {
                        watches.push_back({cand.pi, cand.pj, true, cand.t_x + cc.t_remaining,
                                           cand.t_x, cc.pred_speed});
                    } else {
                        record_collision(cand.t_x, cand.pi, cand.pj, cc.pred_speed);
                        watches.push_back({cand.pi, cand.pj, false, 0.0, cand.t_x, cc.pred_speed});
                    }
                }
                rec.record_advance(state, &dense, /*event_instant=*/true);
                st.load(state);
                dt = std::max(dt, ctrl.dt_min);
                continue;
            }

            // ---- no crossing: advance ----
            state = st.sync_state();
            if (lands_on_stop) {
                st.set_time_exact(t_stop);
                state.t = t_stop;
            }

            // in-contact follow-up: exit or settle into a merge
            bool watch_changed = false;
            for (auto& w : watches) {
                if (w.committed)
                    continue;
                const int ri = state.partition.find(w.pi), rj = state.partition.find(w.pj);
                const PairGeom g = pair_geom(state, ri, rj);
                if (g.dist > 2.0 * ctrl.eps_x) {
                    w.t_evt = -1.0; // mark for removal
                    watch_changed = true;
                } else if (g.dist < ctrl.eps_x && g.speed < ctrl.eps_v) {
                    const ContactClass cc =
                        classify_contact(kernel, kappa_of(ri, rj), g, ctrl.eps_v);
                    w.committed = true;
                    w.t_evt = state.t + cc.t_remaining;
                    w.t_detect = state.t;
                    w.contact_speed = g.speed;
                }
            }
            if (watch_changed)
                std::erase_if(watches, [](const PairWatch& w) {
                    return !w.committed && w.t_evt < 0.0;
                });

            rec.record_advance(state, &dense, false);
            st.load(state);

            const double dt_before = dt;
            dt = dt_try * std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
            if (lands_on_stop)
                dt = std::max(dt, dt_before); // do not inherit an artificially short landing step
            dt = std::clamp(dt, ctrl.dt_min, ctrl.dt_max);
        }

        // merges scheduled exactly at the horizon
        std::vector<PairWatch> due;
        for (auto& w : watches)
            if (w.committed && w.t_evt <= t_end + ctrl.event_bisect_tol)
                due.push_back(w);
        std::sort(due.begin(), due.end(), [&](const PairWatch& a, const PairWatch& b) {
            return std::pair(state.partition.representative(a.pi),
                             state.partition.representative(a.pj)) <
                   std::pair(state.partition.representative(b.pi),
                             state.partition.representative(b.pj));
        });
        bool did = false;
        for (auto& w : due)
            did |= apply_merge(w);
        if (did)
            rec.replace_last(state);
    } catch (const StepUnderflow& e) {
        return fail(RunStatus::StepUnderflowed, e.what());
    } catch (const NonFinite& e) {
        return fail(RunStatus::NonFiniteState, e.what());
    }

    rec.push_sample(state); // ensure the final state is among the samples
    res.final_state = state;
    return res;
}

// ---------------------------------------------------------------------------
// Refinement ladder
// ---------------------------------------------------------------------------
LadderReport simulate_refinement_ladder(const ParticleSystem& initial, const RunSpec& base,
                                        int levels, double tol_factor, double eps_factor) {
    if (levels < 2)
        throw InvalidParameter("refinement ladder requires levels >= 2");

    LadderReport rep;
    const double cadence = base.cadence > 0.0 ? base.cadence : base.t_final / 64.0;
    for (double t = 0.0; t <= base.t_final + 1e-12; t += cadence)
        rep.grid.push_back(std::min(t, base.t_final));

    for (int k = 0; k < levels; ++k) {
        RunSpec spec = base;
        spec.cadence = cadence;
        spec.ctrl = base.ctrl.scaled(std::pow(tol_factor, k), std::pow(eps_factor, k));
        if (spec.kernel.kind() == KernelKind::Singular)
            spec.kernel = spec.kernel.with_floor(base.kernel.floor() * std::pow(eps_factor, k));
        LadderLevel lvl;
        lvl.spec = spec;
        lvl.result = simulate(initial, spec);
        lvl.mean_dt = lvl.result.mean_dt();
        rep.levels.push_back(std::move(lvl));
    }

    // sup-norm distance between consecutive levels on the common grid
    auto state_on_grid = [&](const SimResult& r, double t, std::vector<double>& out) {
        // samples are cadence-aligned; find the closest sample at/before t
        const auto& ss = r.samples;
        std::size_t best = 0;
        double bestgap = kInf;
        for (std::size_t i = 0; i < ss.size(); ++i) {
            const double gap = std::abs(ss[i].t - t);
            if (gap < bestgap) {
                bestgap = gap;
                best = i;
            }
        }
        out.clear();
        out.insert(out.end(), ss[best].x.begin(), ss[best].x.end());
        out.insert(out.end(), ss[best].v.begin(), ss[best].v.end());
    };

    std::vector<double> sa, sb;
    for (std::size_t k = 1; k < rep.levels.size(); ++k) {
        double sup = 0.0;
        for (double t : rep.grid) {
            state_on_grid(rep.levels[k - 1].result, t, sa);
            state_on_grid(rep.levels[k].result, t, sb);
            for (std::size_t i = 0; i < sa.size() && i < sb.size(); ++i)
                sup = std::max(sup, std::abs(sa[i] - sb[i]));
        }
        rep.levels[k].sup_dist_prev = sup;
    }
    for (std::size_t k = 2; k < rep.levels.size(); ++k) {
        const double d0 = rep.levels[k - 1].sup_dist_prev, d1 = rep.levels[k].sup_dist_prev;
        const double h0 = rep.levels[k - 1].mean_dt, h1 = rep.levels[k].mean_dt;
        if (d0 > 0 && d1 > 0 && h0 > 0 && h1 > 0 && h0 != h1)
            rep.levels[k].order_vs_prev = std::log(d0 / d1) / std::log(h0 / h1);
    }
    return rep;
}

double LadderReport::observed_order() const {
    std::vector<double> orders;
    for (const auto& l : levels)
        if (l.order_vs_prev != 0.0 && std::isfinite(l.order_vs_prev))
            orders.push_back(l.order_vs_prev);
    if (orders.empty())
        return 0.0;
    std::sort(orders.begin(), orders.end());
    return orders[orders.size() / 2];
}

} // namespace flock
