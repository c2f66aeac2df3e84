#include "flock/oracle.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

namespace flock {
namespace oracle {

namespace {

using Quad = boost::math::quadrature::gauss_kronrod<double, 15>;

double psi_primitive(double alpha, double s) {
    return std::pow(s, 1.0 - alpha) / (1.0 - alpha);
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw OutOfDomain("two-body oracle requires alpha in (0,1)");
}

/// Time to travel from w_from to w_to along the phase path u(w) = E - S(w).
/// Requires the whole span strictly between the initial point and the
/// stall point S^{-1}(E).  Splits at w = 0 where S has a kink.
double time_of_flight(double alpha, double E, double w_from, double w_to) {
    const double lo = std::min(w_from, w_to), hi = std::max(w_from, w_to);
    auto integrand = [&](double s) { return 1.0 / std::abs(E - signed_primitive(alpha, s)); };
    double total = 0.0;
    if (lo < 0.0 && hi > 0.0) {
        total += Quad::integrate(integrand, lo, 0.0, 15, 1e-13);
        total += Quad::integrate(integrand, 0.0, hi, 15, 1e-13);
    } else {
        total += Quad::integrate(integrand, lo, hi, 15, 1e-13);
    }
    return total;
}

} // namespace

const char* to_string(TwoBodyClass c) {
    switch (c) {
    case TwoBodyClass::Crossing: return "crossing";
    case TwoBodyClass::ExactSticking: return "exact-sticking";
    case TwoBodyClass::AsymptoticApproach: return "asymptotic-approach";
    }
    return "?";
}

double signed_primitive(double alpha, double w) {
    const double p = psi_primitive(alpha, std::abs(w));
    return w < 0.0 ? -p : p;
}

double first_integral(const TwoBodyState& s) {
    check_alpha(s.alpha);
    return s.u + signed_primitive(s.alpha, s.w);
}

TwoBodyOutcome classify(const TwoBodyState& init) {
    check_alpha(init.alpha);
    if (!(init.w > 0.0) || !(init.u < 0.0))
        throw OutOfDomain("classify requires w > 0 and u < 0");

    const double alpha = init.alpha;
    const double psi_w0 = psi_primitive(alpha, init.w);
    const double E = init.u + psi_w0;
    const double scale = std::abs(init.u) + psi_w0;

    TwoBodyOutcome out;
    if (std::abs(E) <= 1e-12 * scale) {
        out.cls = TwoBodyClass::ExactSticking;
        out.t_event = (1.0 - alpha) * std::pow(init.w, alpha) / alpha;
    } else if (E < 0.0) {
        out.cls = TwoBodyClass::Crossing;
        out.impact_speed = -E;
        auto integrand = [&](double s) { return 1.0 / (psi_primitive(alpha, s) - E); };
        out.t_event = Quad::integrate(integrand, 0.0, init.w, 15, 1e-13);
        // Post-crossing stall separation on the far side: Psi(|w|) = |E|.
        out.w_limit = std::pow((1.0 - alpha) * (-E), 1.0 / (1.0 - alpha));
    } else {
        out.cls = TwoBodyClass::AsymptoticApproach;
        out.w_limit = std::pow((1.0 - alpha) * E, 1.0 / (1.0 - alpha));
    }
    return out;
}

ReducedPoint solve_reduced(const TwoBodyState& init, double t, double tol) {
    check_alpha(init.alpha);
    if (!(t >= 0.0))
        throw OutOfDomain("solve_reduced requires t >= 0");
    if (!(tol > 0.0))
        throw OutOfDomain("solve_reduced requires tol > 0");
    if (init.u == 0.0)
        return {init.w, 0.0}; // fixed point of the reduction

    const double alpha = init.alpha;
    const double E = first_integral(init);
    const double scale = std::abs(init.u) + psi_primitive(alpha, std::abs(init.w));

    if (std::abs(E) <= 1e-13 * scale) {
        // Critical path: closed form |w(t)|^alpha = |w0|^alpha - alpha t/(1-alpha).
        const double t_stick = (1.0 - alpha) * std::pow(std::abs(init.w), alpha) / alpha;
        if (t >= t_stick)
            return {0.0, 0.0};
        const double mag = std::pow(std::pow(std::abs(init.w), alpha) - alpha * t / (1.0 - alpha),
                                    1.0 / alpha);
        const double w = init.w < 0.0 ? -mag : mag;
        return {w, -signed_primitive(alpha, w)};
    }

    // Monotone travel from w0 toward the stall point w_inf = S^{-1}(E).
    const double w_inf = (E < 0.0 ? -1.0 : 1.0) *
                         std::pow((1.0 - alpha) * std::abs(E), 1.0 / (1.0 - alpha));
    double lo = init.w, hi = w_inf;

    // Guard: never evaluate the time integral at the stall point itself.
    const double w_span = std::abs(hi - lo);
    double a = lo, b = hi - (hi > lo ? 1.0 : -1.0) * 1e-15 * std::max(1.0, std::abs(hi));
    if ((b - a) * (hi - lo) <= 0.0)
        return {w_inf, E - signed_primitive(alpha, w_inf)};
    if (time_of_flight(alpha, E, lo, b) <= t)
        return {b, E - signed_primitive(alpha, b)};

    // Bisect T(w) = t; T is monotone along the travel direction.
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (a + b);
        const double tm = time_of_flight(alpha, E, lo, mid);
        if (tm < t)
            a = mid;
        else
            b = mid;
        if (std::abs(b - a) <= tol * std::max(1e-6, w_span) ||
            std::abs(tm - t) <= tol * std::max(1.0, t))
            break;
    }
    const double w = 0.5 * (a + b);
    return {w, E - signed_primitive(alpha, w)};
}

double first_integral_residual(double alpha, std::span<const double> w,
                               std::span<const double> u) {
    check_alpha(alpha);
    if (w.size() != u.size() || w.empty())
        throw OutOfDomain("first_integral_residual requires matching nonempty series");
    bool pos = false, neg = false;
    for (double ui : u) {
        pos = pos || ui > 0.0;
        neg = neg || ui < 0.0;
    }
    if (pos && neg)
        throw OutOfDomain("relative velocity changes sign inside the segment");

    const double c0 = u[0] + signed_primitive(alpha, w[0]);
    const double denom = std::abs(u[0]) + psi_primitive(alpha, std::abs(w[0]));
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        worst = std::max(worst, std::abs(u[k] + signed_primitive(alpha, w[k]) - c0));
    return worst / (denom > 0.0 ? denom : 1.0);
}

double inverse_distance_integral(const TwoBodyState& init, double s1, double s2, double theta) {
    check_alpha(init.alpha);
    if (!(theta > 0.0 && theta < 1.0))
        throw OutOfDomain("inverse_distance_integral requires theta in (0,1)");
    if (!(s1 < s2))
        throw OutOfDomain("inverse_distance_integral requires s1 < s2");
    const double alpha = init.alpha;

    if (init.u == 0.0)
        return (s2 - s1) * std::pow(std::abs(init.w), -theta);

    const double E = first_integral(init);
    const double scale = std::abs(init.u) + psi_primitive(alpha, std::abs(init.w));
    if (std::abs(E) <= 1e-13 * scale) {
        const double t_stick = (1.0 - alpha) * std::pow(std::abs(init.w), alpha) / alpha;
        if (s2 >= t_stick)
            throw OutOfDomain("window contains a sticking time");
    }

    const double wa = solve_reduced(init, s1).w;
    const double wb = solve_reduced(init, s2).w;
    auto speed = [&](double s) { return std::abs(E - signed_primitive(alpha, s)); };

    // Integrate |w|^{-theta} / |u(w)| over [wb, wa]; the |w|^{-theta}
    // endpoint behaviour at 0 is removed by substituting z = |w|^{1-theta}.
    const double lo = std::min(wa, wb), hi = std::max(wa, wb);
    double total = 0.0;
    auto one_sided = [&](double upper) {
        // integral over (0, upper] of w^{-theta} / speed(sign*w)
        const double sign = upper < 0.0 ? -1.0 : 1.0;
        const double a = std::abs(upper);
        auto g = [&](double z) {
            const double s = std::pow(z, 1.0 / (1.0 - theta));
            return 1.0 / speed(sign * s);
        };
        return Quad::integrate(g, 0.0, std::pow(a, 1.0 - theta), 15, 1e-12) / (1.0 - theta);
    };
    if (lo < 0.0 && hi > 0.0)
        total = one_sided(lo) + one_sided(hi);
    else if (hi <= 0.0)
        total = one_sided(lo) - one_sided(hi);
    else
        total = one_sided(hi) - one_sided(lo);
    return total;
}

} // namespace oracle
} // namespace flock
