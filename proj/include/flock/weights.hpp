#pragma once

#include <limits>

#include "flock/errors.hpp"

namespace flock {

enum class KernelKind { Singular, CuckerSmale };

/// Communication weight psi(s) together with its primitive.
///
/// Two kinds are supported: the singular power law s^(-alpha) and the
/// classic bounded weight K / (1+s^2)^(beta/2).  A regularization floor
/// eps may be attached to a kernel; evaluation then uses max(s, eps).
/// The floor is a kernel property so the time stepper can run with
/// floor > 0 while diagnostics evaluate the raw (floor = 0) weight on
/// the same trajectory.
///
/// Kernels are immutable after construction; all methods are pure and
/// safe for concurrent use.
class WeightKernel {
public:
    static WeightKernel singular(double alpha, double floor = 0.0);
    static WeightKernel cucker_smale(double amplitude, double beta);

    KernelKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    double amplitude() const { return amplitude_; }
    double beta() const { return beta_; }
    double floor() const { return floor_; }

    /// Same kernel with a different regularization floor.
    WeightKernel with_floor(double floor) const;

    /// psi(s).  Singular kind with floor 0 returns +infinity at s = 0
    /// (the Infinite sentinel); it never throws for s >= 0.
    double eval(double s) const;

    /// Primitive Psi(s) = s^(1-alpha) / (1-alpha), Psi(0) = 0.
    /// Defined for the singular kind with alpha < 1 only.
    double primitive(double s) const;

    /// Inverse of the primitive: Psi^{-1}(y) for y >= 0.
    double primitive_inverse(double y) const;

    /// alpha in (0, 1/2): the regime with full regularity and uniqueness.
    bool theory_full() const { return kind_ == KernelKind::Singular && alpha_ > 0 && alpha_ < 0.5; }
    /// alpha in (0, 1): the regime with piecewise-weak solutions.
    bool theory_piecewise() const { return kind_ == KernelKind::Singular && alpha_ > 0 && alpha_ < 1.0; }

    bool operator==(const WeightKernel&) const = default;

private:
    WeightKernel() = default;

    KernelKind kind_ = KernelKind::Singular;
    double alpha_ = 0.0;     // singular exponent
    double amplitude_ = 0.0; // K of the classic weight
    double beta_ = 0.0;      // exponent of the classic weight
    double floor_ = 0.0;     // regularization distance eps
};

} // namespace flock
