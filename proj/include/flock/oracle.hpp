#pragma once

#include <optional>
#include <span>
#include <string>

#include "flock/weights.hpp"

namespace flock {
namespace oracle {

/// Relative state of the two-particle 1-D reduction under OverN
/// normalization:  u' = -u psi(|w|),  w' = u.  The quantity
/// u + S(w), with S(w) = sign(w) Psi(|w|), is a first integral.
struct TwoBodyState {
    double w = 0.0;     // x2 - x1
    double u = 0.0;     // v2 - v1
    double alpha = 0.0; // singular exponent, in (0,1)
};

enum class TwoBodyClass { Crossing, ExactSticking, AsymptoticApproach };

struct TwoBodyOutcome {
    TwoBodyClass cls = TwoBodyClass::Crossing;
    std::optional<double> t_event;      // collision or sticking time
    std::optional<double> impact_speed; // |u| at w = 0 (Crossing)
    std::optional<double> w_limit;      // asymptotic separation
};

const char* to_string(TwoBodyClass c);

/// Signed primitive S(w) = sign(w) * Psi(|w|).
double signed_primitive(double alpha, double w);

/// First integral E = u + S(w).
double first_integral(const TwoBodyState& s);

/// Trichotomy for an approaching pair (w > 0, u < 0), driven by the sign
/// of E = u + Psi(w):
///   E < 0  -> Crossing, impact speed |E|, collision time by quadrature
///             of dt = dw / (Psi(w) + |E|);
///   E = 0  -> ExactSticking at t = (1-alpha) w^alpha / alpha;
///   E > 0  -> AsymptoticApproach with w_limit = ((1-alpha) E)^(1/(1-alpha)).
/// E is compared to zero with relative tolerance 1e-12.
TwoBodyOutcome classify(const TwoBodyState& init);

/// Reduced solution (w(t), u(t)) for arbitrary initial data, computed from
/// the first integral: the phase path w -> u(w) = E - S(w) is exact, and
/// time along it is obtained by adaptive quadrature plus bisection.  The
/// Crossing case continues through w = 0.  `tol` bounds the time-inversion
/// accuracy.
struct ReducedPoint {
    double w, u;
};
ReducedPoint solve_reduced(const TwoBodyState& init, double t, double tol = 1e-12);

/// Max first-integral drift over a sampled 2-body segment, relative to
/// |u(0)| + Psi(|w(0)|).  Requires u of one sign over the segment (zeros
/// allowed); throws OutOfDomain otherwise.
double first_integral_residual(double alpha, std::span<const double> w, std::span<const double> u);

/// Reference value of the window integral of |w(t)|^(-theta) along the
/// reduced solution, via change of variable to w-space with the endpoint
/// singularity removed analytically.  Throws OutOfDomain when the window
/// contains a sticking time.
double inverse_distance_integral(const TwoBodyState& init, double s1, double s2, double theta);

} // namespace oracle
} // namespace flock
