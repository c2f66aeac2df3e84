#include "flock/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "flock/oracle.hpp"

namespace flock {
namespace diagnostics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadResult {
    double value = 0.0;
    double err = 0.0;
};

double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

/// Composite trapezoid over a node subset (by stride), in z-space for one
/// spike side.  Nodes are (z_i, g_i) with z ascending.
double trapz(const std::vector<double>& zs, const std::vector<double>& gs, std::size_t stride) {
    double total = 0.0;
    std::size_t prev = 0;
    for (std::size_t k = stride; k < zs.size(); k += stride) {
        total += 0.5 * (gs[prev] + gs[k]) * (zs[k] - zs[prev]);
        prev = k;
    }
    if (prev + 1 < zs.size()) // close the tail
        total += 0.5 * (gs[prev] + gs.back()) * (zs.back() - zs[prev]);
    return total;
}

/// Integrate sampled values v(t) over the node range, using plain composite
/// trapezoid away from spikes and the substitution z = |t - tc|^(1-p) inside
/// windows around each spike center, which integrates the local model
/// v ~ c |t - tc|^{-p} exactly.  p must lie in (0,1).
QuadResult spike_quadrature(const std::vector<double>& t, const std::vector<double>& v, double p,
                            const std::vector<double>& spike_times) {
    const std::size_t n = t.size();
    QuadResult out;
    if (n < 2)
        return out;

    // Locate spike centers: nearest node, snapped to the local value maximum.
    std::vector<std::size_t> centers;
    for (double tc : spike_times) {
        std::size_t c = std::size_t(std::lower_bound(t.begin(), t.end(), tc) - t.begin());
        if (c >= n)
            c = n - 1;
        if (c > 0 && std::abs(t[c - 1] - tc) < std::abs(t[c] - tc))
            --c;
        const std::size_t lo = c >= 3 ? c - 3 : 0, hi = std::min(n - 1, c + 3);
        for (std::size_t k = lo; k <= hi; ++k)
            if (!(v[k] <= v[c])) // inf counts as larger
                c = k;
        centers.push_back(c);
    }
    std::sort(centers.begin(), centers.end());
    centers.erase(std::unique(centers.begin(), centers.end()), centers.end());

    constexpr std::size_t K = 12; // half-width of a spike zone, in gaps
    std::vector<char> in_zone(n - 1, 0);
    struct Zone {
        std::size_t c, lo, hi; // node indices; gaps lo..hi-1 belong to the zone
    };
    std::vector<Zone> zones;
    for (std::size_t c : centers) {
        Zone z;
        z.c = c;
        z.lo = c >= K ? c - K : 0;
        z.hi = std::min(n - 1, c + K);
        // avoid overlapping a previous zone
        if (!zones.empty())
            z.lo = std::max(z.lo, zones.back().hi);
        if (z.lo >= z.hi && !(z.lo == z.hi && z.c == z.lo))
            continue;
        for (std::size_t g = z.lo; g < z.hi; ++g)
            in_zone[g] = 1;
        zones.push_back(z);
    }

    // Plain part.
    double plain_f = 0.0;
    for (std::size_t g = 0; g < n - 1; ++g) {
        if (in_zone[g])
            continue;
        const double va = finite_or(v[g], finite_or(g > 0 ? v[g - 1] : 0.0, 0.0));
        const double vb = finite_or(v[g + 1], va);
        plain_f += 0.5 * (va + vb) * (t[g + 1] - t[g]);
    }

    double zone_total = 0.0, zone_err = 0.0;
    for (const Zone& z : zones) {
        for (int side = 0; side < 2; ++side) {
            // gather node indices strictly ordered away from the center
            std::vector<std::size_t> idx;
            if (side == 0)
                for (std::size_t k = z.c; k-- > z.lo;)
                    idx.push_back(k); // c-1 ... lo
            else
                for (std::size_t k = z.c + 1; k <= z.hi; ++k)
                    idx.push_back(k);
            if (idx.empty())
                continue;
            const double tc = t[z.c];
            std::vector<double> zs, gs;
            zs.reserve(idx.size() + 1);
            gs.reserve(idx.size() + 1);
            zs.push_back(0.0);
            gs.push_back(0.0); // placeholder, filled below
            for (std::size_t k : idx) {
                const double dt = std::abs(t[k] - tc);
                zs.push_back(std::pow(dt, 1.0 - p));
                const double val = std::isfinite(v[k]) ? v[k] : 0.0;
                gs.push_back(val * std::pow(dt, p) / (1.0 - p));
            }
            gs[0] = gs.size() > 1 ? gs[1] : 0.0; // model limit at the center
            const double fine = trapz(zs, gs, 1);
            const double coarse = trapz(zs, gs, 2);
            zone_total += fine;
            zone_err += std::abs(fine - coarse) / 3.0;
        }
    }

    out.value = plain_f + zone_total;
    out.err = zone_err;
    // plain-part error: second difference heuristic
    double plain_err = 0.0;
    for (std::size_t g = 1; g + 1 < n - 1; ++g) {
        if (g >= in_zone.size() || in_zone[g] || in_zone[g - 1])
            continue;
        const double va = finite_or(v[g - 1], 0.0), vb = finite_or(v[g], 0.0),
                     vc = finite_or(v[g + 1], 0.0);
        plain_err += std::abs(va - 2 * vb + vc) * (t[g + 1] - t[g - 1]) / 12.0;
    }
    out.err += plain_err;
    return out;
}

std::size_t node_at_time(const std::vector<double>& times, double t) {
    std::size_t k = std::size_t(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    if (k >= times.size())
        k = times.size() - 1;
    if (k > 0 && std::abs(times[k - 1] - t) < std::abs(times[k] - t))
        --k;
    return k;
}

/// Collision instants of the given pair inside [t_lo, t_hi].
std::vector<double> pair_collision_times(const SimResult& run, int i, int j, double t_lo,
                                         double t_hi) {
    std::vector<double> out;
    for (const auto& e : run.events) {
        if (e.kind != EventKind::Collision || e.t < t_lo || e.t > t_hi)
            continue;
        const std::size_t k = node_at_time(run.diag.times, e.t);
        if (k >= run.steps.size())
            continue;
        const ClusterPartition part =
            run.final_state.partition.at_version(run.steps[k].partition_version);
        const int ra = part.representative(i), rb = part.representative(j);
        if (std::min(ra, rb) == e.a && std::max(ra, rb) == e.b)
            out.push_back(e.t);
    }
    return out;
}

double pair_norm(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double d = b[c] - a[c];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

double auto_theta(double alpha) {
    if (alpha >= 0.5)
        return 0.5; // reported-only regime
    const double delta = std::min(0.05, (1.0 - 2.0 * alpha) / (4.0 - 4.0 * alpha));
    const double theta = alpha * (2.0 - 2.0 * delta) / (1.0 - 2.0 * delta);
    return std::min(theta, 0.95);
}

ParticleSystem state_at_step(const SimResult& run, std::size_t k) {
    const StepRecord& rec = run.steps.at(k);
    ParticleSystem s(run.diag.n, run.diag.dim, run.spec.normalization);
    s.t = rec.t;
    s.x = rec.x;
    s.v = rec.v;
    s.partition = run.final_state.partition.at_version(rec.partition_version);
    return s;
}

PairSeries extract_pair_series(const SimResult& run, int i, int j, double t_lo, double t_hi) {
    PairSeries ps;
    ps.i = i;
    ps.j = j;
    ps.dim = run.diag.dim;
    const int d = ps.dim;

    std::uint32_t cached_version = 0;
    ClusterPartition part = run.final_state.partition.at_version(0);
    for (std::size_t k = 0; k < run.steps.size(); ++k) {
        const StepRecord& rec = run.steps[k];
        if (rec.t < t_lo || rec.t > t_hi)
            continue;
        if (rec.partition_version != cached_version || ps.t.empty()) {
            cached_version = rec.partition_version;
            part = run.final_state.partition.at_version(cached_version);
        }
        const bool joined = part.same(i, j);
        ParticleSystem s(run.diag.n, d, run.spec.normalization);
        s.t = rec.t;
        s.x = rec.x;
        s.v = rec.v;
        s.partition = part;
        const std::vector<double> acc = rhs(s, run.spec.kernel);
        ps.t.push_back(rec.t);
        for (int c = 0; c < d; ++c) {
            ps.f.push_back(rec.x[std::size_t(j) * d + c] - rec.x[std::size_t(i) * d + c]);
            ps.fp.push_back(rec.v[std::size_t(j) * d + c] - rec.v[std::size_t(i) * d + c]);
            ps.fpp.push_back(acc[std::size_t(j) * d + c] - acc[std::size_t(i) * d + c]);
        }
        if (joined)
            break; // include the merge instant itself, then stop
    }
    if (!ps.t.empty())
        ps.spike_times = pair_collision_times(run, i, j, ps.t.front(), ps.t.back());
    return ps;
}

InterpCheckReport interpolation_check(const PairSeries& series, double theta) {
    if (!(theta > 0.0 && theta < 1.0))
        throw OutOfDomain("interpolation_check requires theta in (0,1)");
    if (series.size() < 4)
        throw InsufficientSampling("pair series too short for the interpolation check");

    const std::size_t n = series.size();
    const int d = series.dim;
    InterpCheckReport rep;
    rep.theta = theta;

    std::vector<double> fmag(n), fpmag(n), fppmag(n);
    for (std::size_t k = 0; k < n; ++k) {
        double a = 0.0, b = 0.0, c = 0.0;
        for (int cdim = 0; cdim < d; ++cdim) {
            const double fv = series.f[k * d + cdim];
            const double fpv = series.fp[k * d + cdim];
            const double fppv = series.fpp[k * d + cdim];
            a += fv * fv;
            b += fpv * fpv;
            c += fppv * fppv;
        }
        fmag[k] = std::sqrt(a);
        fpmag[k] = std::sqrt(b);
        fppmag[k] = std::sqrt(c);
    }
    const double fmax = *std::max_element(fmag.begin(), fmag.end());
    rep.C2 = std::pow(fmax + 1.0, 1.0 - theta) / (1.0 - theta);

    // LHS integrand |f'|^2 |f|^{-theta}; samples with f = 0 are excluded
    // (value forced to 0 and handled by the spike window around them).
    std::vector<double> lhs_vals(n);
    for (std::size_t k = 0; k < n; ++k)
        lhs_vals[k] = fmag[k] == 0.0 ? 0.0 : fpmag[k] * fpmag[k] * std::pow(fmag[k], -theta);

    // Spike centers: recorded pair collisions, plus window endpoints or
    // interior minima where |f| is (near) zero.
    std::vector<double> spikes = series.spike_times;
    const double tiny = 1e-4 * std::max(fmax, 1e-300);
    for (std::size_t k = 0; k < n; ++k) {
        const bool interior_min = k > 0 && k + 1 < n && fmag[k] <= fmag[k - 1] &&
                                  fmag[k] <= fmag[k + 1];
        const bool endpoint = k == 0 || k + 1 == n;
        if ((interior_min || endpoint) && fmag[k] < tiny)
            spikes.push_back(series.t[k]);
    }

    const QuadResult lhs = spike_quadrature(series.t, lhs_vals, theta, spikes);
    const QuadResult rhsq = spike_quadrature(series.t, fppmag, theta, {});
    rep.lhs = lhs.value;
    rep.rhs_integral = rep.C2 * rhsq.value;
    rep.quad_error = lhs.err + rep.C2 * rhsq.err;

    auto boundary_term = [&](std::size_t k) {
        if (fmag[k] == 0.0)
            return 0.0;
        double dot = 0.0;
        for (int cdim = 0; cdim < d; ++cdim)
            dot += series.f[k * d + cdim] * series.fp[k * d + cdim];
        const double H = std::pow(fmag[k], 1.0 - theta) / (1.0 - theta);
        return dot / fmag[k] * H;
    };
    rep.boundary = boundary_term(n - 1) - boundary_term(0);
    rep.slack = 1e-6 + rep.quad_error;
    rep.satisfied = rep.lhs <= rep.rhs_integral + rep.boundary + rep.slack;
    return rep;
}

// ---------------------------------------------------------------------------
// Energy identity and dissipation bound
// ---------------------------------------------------------------------------
namespace {

struct Interval {
    std::size_t lo, hi;   // node range in the diagnostics grid
    double r_start, r_end; // velocity diameter at the ends (pre-merge at hi)
    double R_end;          // pre-merge dissipation value at hi (or node value)
};

std::vector<Interval> merge_intervals(const SimResult& run) {
    const auto& times = run.diag.times;
    std::vector<Interval> out;
    if (times.size() < 2)
        return out;

    // group merges by instant, keep the first r/R of each instant
    struct Boundary {
        double t, r_before, R_before;
    };
    std::vector<Boundary> bounds;
    for (const auto& m : run.merges) {
        if (m.t <= times.front() || m.t >= times.back())
            continue;
        if (!bounds.empty() && bounds.back().t == m.t)
            continue;
        bounds.push_back({m.t, m.r_before, m.R_before});
    }

    std::size_t lo = 0;
    for (const auto& b : bounds) {
        const std::size_t hi = node_at_time(times, b.t);
        if (hi <= lo)
            continue;
        out.push_back({lo, hi, run.diag.r_series[lo], b.r_before, b.R_before});
        lo = hi;
    }
    out.push_back({lo, times.size() - 1, run.diag.r_series[lo], run.diag.r_series.back(),
                   run.diag.R_series.back()});
    return out;
}

QuadResult integrate_R(const SimResult& run, const Interval& iv) {
    const auto& times = run.diag.times;
    std::vector<double> t(times.begin() + iv.lo, times.begin() + iv.hi + 1);
    std::vector<double> v(run.diag.R_series.begin() + iv.lo,
                          run.diag.R_series.begin() + iv.hi + 1);
    if (!v.empty())
        v.back() = iv.R_end;

    std::vector<double> spikes;
    const double alpha = run.spec.kernel.kind() == KernelKind::Singular
                             ? run.spec.kernel.alpha()
                             : 0.0;
    if (alpha > 0.0 && alpha < 1.0) {
        for (const auto& e : run.events)
            if (e.kind == EventKind::Collision && e.t > t.front() && e.t < t.back())
                spikes.push_back(e.t);
        return spike_quadrature(t, v, alpha, spikes);
    }
    return spike_quadrature(t, v, 0.5, {});
}

} // namespace

double energy_identity_residual(const SimResult& run, double target) {
    if (run.diag.size() < 3)
        throw InsufficientSampling("run too short for the energy identity");
    const double r0 = run.diag.r_series.front();
    const double norm = 1.0 + r0;

    double residual = 0.0, err_total = 0.0;
    for (const Interval& iv : merge_intervals(run)) {
        const QuadResult q = integrate_R(run, iv);
        const double rhs = 0.5 * (iv.r_start - iv.r_end);
        residual = std::max(residual, std::abs(q.value - rhs) / norm);
        err_total += q.err;
    }
    if (err_total / norm > target)
        throw InsufficientSampling("quadrature error estimate exceeds the residual target");
    return residual;
}

DissipationBound dissipation_bound_check(const SimResult& run) {
    DissipationBound out;
    double total = 0.0;
    for (const Interval& iv : merge_intervals(run)) {
        const QuadResult q = integrate_R(run, iv);
        total += q.value;
        out.quad_error += q.err;
    }
    out.integral = total;
    out.half_r0 = 0.5 * run.diag.r_series.front();
    out.margin = out.half_r0 - out.integral;

    // the paper-form constant for comparison: N^2 C1^2
    double c1 = 0.0;
    const int d = run.diag.dim;
    const auto& v0 = run.steps.front().v;
    for (int i = 0; i < run.diag.n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < d; ++c)
            sq += v0[std::size_t(i) * d + c] * v0[std::size_t(i) * d + c];
        c1 = std::max(c1, sq);
    }
    out.paper_bound = double(run.diag.n) * run.diag.n * c1;
    out.paper_margin = out.paper_bound - out.integral;
    // certify up to the quadrature's own resolution
    out.ok = out.integral <= out.half_r0 * (1.0 + 1e-9) + out.quad_error + 1e-12;
    return out;
}

UniformBounds uniform_bounds_check(const SimResult& run, double tol) {
    UniformBounds out;
    const int d = run.diag.dim;
    const auto& v0 = run.steps.front().v;
    const auto& x0 = run.steps.front().x;
    for (int i = 0; i < run.diag.n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < d; ++c)
            sq += v0[std::size_t(i) * d + c] * v0[std::size_t(i) * d + c];
        out.c1 = std::max(out.c1, std::sqrt(sq));
    }
    for (double s : run.diag.max_speed_series)
        out.max_speed = std::max(out.max_speed, s);
    for (const auto& rec : run.steps)
        for (int i = 0; i < run.diag.n; ++i)
            out.max_displacement = std::max(
                out.max_displacement, pair_norm(x0.data() + std::size_t(i) * d,
                                                rec.x.data() + std::size_t(i) * d, d));
    const double horizon = run.steps.back().t - run.steps.front().t;
    out.displacement_bound = horizon * out.c1 * (1.0 + tol);
    out.ok = out.max_speed <= out.c1 * (1.0 + tol) &&
             out.max_displacement <= out.displacement_bound;
    return out;
}

TvReport total_variation(const SimResult& run) {
    TvReport out;
    const int n = run.diag.n;
    out.per_particle.assign(n, 0.0);
    for (std::size_t k = 0; k < run.diag.size(); ++k)
        for (int i = 0; i < n; ++i)
            out.per_particle[i] += run.diag.v_increments[k * n + i];
    for (double tv : out.per_particle)
        out.n_averaged += tv;
    out.n_averaged /= n;
    return out;
}

double interval_integrability_check(const SimResult& run, int i, int j, double theta, double s1,
                                    double s2, double* error_estimate) {
    if (!(theta > 0.0 && theta < 1.0))
        throw OutOfDomain("interval_integrability_check requires theta in (0,1)");
    if (!(s1 < s2))
        throw OutOfDomain("interval_integrability_check requires s1 < s2");
    for (const auto& m : run.merges) {
        if (m.t < s1 || m.t > s2)
            continue;
        const std::size_t k = node_at_time(run.diag.times, m.t);
        const ClusterPartition part =
            run.final_state.partition.at_version(run.steps[k].partition_version);
        if (part.same(i, j))
            throw OutOfDomain("pair merges inside the window");
    }

    const int d = run.diag.dim;
    std::vector<double> t, vals;
    for (const auto& rec : run.steps) {
        if (rec.t < s1 || rec.t > s2)
            continue;
        const double dist = pair_norm(rec.x.data() + std::size_t(i) * d,
                                      rec.x.data() + std::size_t(j) * d, d);
        t.push_back(rec.t);
        vals.push_back(dist == 0.0 ? kInf : std::pow(dist, -theta));
    }
    if (t.size() < 4)
        throw InsufficientSampling("window too sparsely sampled");

    const QuadResult q = spike_quadrature(t, vals, theta, pair_collision_times(run, i, j, s1, s2));
    if (!std::isfinite(q.value) || q.err > 0.5 * std::abs(q.value) + 1e-6)
        throw DivergenceSuspected("window quadrature failed to converge");
    if (error_estimate)
        *error_estimate = q.err;
    return q.value;
}

double engine_first_integral_residual(const SimResult& run) {
    if (run.diag.n != 2 || run.diag.dim != 1)
        throw OutOfDomain("first-integral residual requires a two-body 1-D run");
    if (run.spec.kernel.kind() != KernelKind::Singular || run.spec.kernel.alpha() >= 1.0)
        throw OutOfDomain("first-integral residual requires a singular kernel, alpha < 1");
    double t_stop = run.steps.back().t;
    for (const auto& e : run.events)
        t_stop = std::min(t_stop, e.t);
    std::vector<double> w, u;
    for (const auto& rec : run.steps) {
        if (rec.t >= t_stop && !w.empty())
            break;
        w.push_back(rec.x[1] - rec.x[0]);
        u.push_back(rec.v[1] - rec.v[0]);
    }
    if (w.size() < 2)
        throw OutOfDomain("no pre-event segment to check");
    return oracle::first_integral_residual(run.spec.kernel.alpha(), w, u);
}

// ---------------------------------------------------------------------------
// verify_run
// ---------------------------------------------------------------------------
bool Report::all_pass() const {
    for (const auto& c : checks)
        if (c.asserted && !c.pass)
            return false;
    return true;
}

Report verify_run(const SimResult& run, const VerifyOptions& opt) {
    Report rep;
    auto add = [&](CheckResult c) { rep.checks.push_back(std::move(c)); };
    const int n = run.diag.n, d = run.diag.dim;

    add({"run-completed", run.status == RunStatus::Completed, true,
         double(run.status == RunStatus::Completed), 1.0, run.error});

    // momentum drift
    {
        double p0inf = 0.0, drift = 0.0;
        for (int c = 0; c < d; ++c)
            p0inf = std::max(p0inf, std::abs(run.diag.momentum_series[c]));
        for (std::size_t k = 0; k < run.diag.size(); ++k)
            for (int c = 0; c < d; ++c)
                drift = std::max(drift, std::abs(run.diag.momentum_series[k * d + c] -
                                                 run.diag.momentum_series[c]));
        add({"momentum-conservation", drift <= opt.momentum_tol * (1.0 + p0inf), true, drift,
             opt.momentum_tol * (1.0 + p0inf), ""});
    }

    // r(t) nonincreasing up to tolerance
    {
        const double r0 = run.diag.r_series.front();
        double worst = 0.0;
        for (std::size_t k = 1; k < run.diag.size(); ++k)
            worst = std::max(worst, run.diag.r_series[k] - run.diag.r_series[k - 1]);
        add({"r-nonincreasing", worst <= opt.r_monotone_tol * std::max(r0, 1e-300), true, worst,
             opt.r_monotone_tol * r0, ""});
    }

    // velocity convex-hull contraction, per coordinate
    {
        std::vector<double> lo(d, kInf), hi(d, -kInf);
        const auto& v0 = run.steps.front().v;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) {
                lo[c] = std::min(lo[c], v0[std::size_t(i) * d + c]);
                hi[c] = std::max(hi[c], v0[std::size_t(i) * d + c]);
            }
        double excess = 0.0, scale = 1.0;
        for (int c = 0; c < d; ++c)
            scale = std::max({scale, std::abs(lo[c]), std::abs(hi[c])});
        for (const auto& rec : run.steps)
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < d; ++c) {
                    const double vv = rec.v[std::size_t(i) * d + c];
                    excess = std::max({excess, lo[c] - vv, vv - hi[c]});
                }
        add({"velocity-hull-contraction", excess <= opt.uniform_tol * scale, true, excess,
             opt.uniform_tol * scale, ""});
    }

    // uniform bounds
    {
        const UniformBounds ub = uniform_bounds_check(run, opt.uniform_tol);
        add({"uniform-bounds", ub.ok, true, std::max(ub.max_speed - ub.c1, 0.0), ub.c1,
             "C1=" + std::to_string(ub.c1)});
    }

    // cluster consistency on samples and final state
    {
        bool ok = run.final_state.clusters_consistent();
        for (const auto& rec : run.samples) {
            const ClusterPartition part =
                run.final_state.partition.at_version(rec.partition_version);
            for (int i = 0; i < n && ok; ++i) {
                const int r = part.find(i);
                for (int c = 0; c < d; ++c)
                    if (rec.x[std::size_t(i) * d + c] != rec.x[std::size_t(r) * d + c] ||
                        rec.v[std::size_t(i) * d + c] != rec.v[std::size_t(r) * d + c]) {
                        ok = false;
                        break;
                    }
            }
        }
        add({"cluster-consistency", ok, true, ok ? 0.0 : 1.0, 0.0, ""});
    }

    // sticking count and monotone coarsening
    {
        const int stick = run.sticking_count();
        add({"sticking-count", stick <= n - 1, true, double(stick), double(n - 1), ""});
        bool monotone = true;
        for (std::size_t k = 1; k < run.steps.size(); ++k)
            monotone = monotone &&
                       run.steps[k].partition_version >= run.steps[k - 1].partition_version;
        monotone = monotone && int(run.final_state.partition.version()) >=
                                   (run.steps.empty() ? 0 : int(run.steps.back().partition_version));
        add({"coarsening-monotone", monotone, true, monotone ? 0.0 : 1.0, 0.0, ""});
    }

    // event ordering
    {
        bool ordered = true;
        for (std::size_t k = 1; k < run.events.size(); ++k)
            ordered = ordered && run.events[k].t >= run.events[k - 1].t;
        add({"event-ordering", ordered, true, ordered ? 0.0 : 1.0, 0.0, ""});
    }

    // energy identity + dissipation bound
    {
        CheckResult c{"energy-identity", false, true, kInf, opt.energy_residual_target, ""};
        try {
            c.value = energy_identity_residual(run, opt.energy_residual_target);
            c.pass = c.value <= opt.energy_residual_target;
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        add(c);

        const DissipationBound db = dissipation_bound_check(run);
        std::ostringstream os;
        os << "integral=" << db.integral << " half_r0=" << db.half_r0
           << " paper_margin=" << db.paper_margin;
        add({"dissipation-bound", db.ok, true, db.integral, db.half_r0, os.str()});
    }

    // total variation (reported; finiteness asserted)
    {
        const TvReport tv = total_variation(run);
        bool finite = std::isfinite(tv.n_averaged);
        add({"tv-finite", finite, true, tv.n_averaged, kInf, ""});
    }

    // first integral residual (two-body 1-D runs)
    if (n == 2 && d == 1 && run.spec.kernel.kind() == KernelKind::Singular &&
        run.spec.kernel.alpha() < 1.0) {
        CheckResult c{"first-integral", false, true, kInf, opt.first_integral_tol, ""};
        try {
            c.value = engine_first_integral_residual(run);
            c.pass = c.value <= opt.first_integral_tol;
        } catch (const std::exception& e) {
            c.detail = e.what();
            c.asserted = false;
        }
        add(c);
    }

    // interpolation inequality on inter-cluster pairs
    if (opt.check_interpolation) {
        int pairs_done = 0;
        bool all_ok = true;
        double worst_gap = -kInf;
        for (int i = 0; i < n && pairs_done < opt.max_pairs; ++i) {
            for (int j = i + 1; j < n && pairs_done < opt.max_pairs; ++j) {
                if (run.steps.front().partition_version == 0 &&
                    run.final_state.partition.at_version(0).same(i, j))
                    continue;
                const PairSeries ps =
                    extract_pair_series(run, i, j, run.steps.front().t, run.steps.back().t);
                if (ps.size() < 8)
                    continue;
                ++pairs_done;
                for (double theta : opt.interp_thetas) {
                    try {
                        const InterpCheckReport r = interpolation_check(ps, theta);
                        all_ok = all_ok && r.satisfied;
                        worst_gap = std::max(worst_gap,
                                             r.lhs - (r.rhs_integral + r.boundary + r.slack));
                    } catch (const InsufficientSampling&) {
                    }
                }
            }
        }
        add({"interpolation-inequality", all_ok, pairs_done > 0, worst_gap, 0.0,
             "pairs=" + std::to_string(pairs_done)});
    }

    // interval integrability with the auto-selected theta
    if (opt.check_integrability && run.spec.kernel.kind() == KernelKind::Singular &&
        run.spec.kernel.alpha() < 1.0 && run.diag.size() >= 8) {
        const double theta = auto_theta(run.spec.kernel.alpha());
        bool ok = true;
        int pairs_done = 0;
        for (int i = 0; i < n && pairs_done < opt.max_pairs; ++i) {
            for (int j = i + 1; j < n && pairs_done < opt.max_pairs; ++j) {
                double t_hi = run.steps.back().t;
                for (const auto& m : run.merges) {
                    const std::size_t k = node_at_time(run.diag.times, m.t);
                    const ClusterPartition part =
                        run.final_state.partition.at_version(run.steps[k].partition_version);
                    if (part.same(i, j)) {
                        t_hi = std::min(t_hi, m.t * (1.0 - 1e-9) - 1e-12);
                        break;
                    }
                }
                if (t_hi <= run.steps.front().t)
                    continue;
                ++pairs_done;
                try {
                    const double val =
                        interval_integrability_check(run, i, j, theta, run.steps.front().t, t_hi);
                    ok = ok && std::isfinite(val);
                } catch (const OutOfDomain&) {
                } catch (const InsufficientSampling&) {
                } catch (const DivergenceSuspected&) {
                    ok = false;
                }
            }
        }
        add({"interval-integrability", ok, pairs_done > 0,
             double(pairs_done), 0.0, "theta=" + std::to_string(theta)});
    }

    return rep;
}

} // namespace diagnostics
} // namespace flock
