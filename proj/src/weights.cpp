#include "flock/weights.hpp"

#include <cmath>

namespace flock {

WeightKernel WeightKernel::singular(double alpha, double floor) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw InvalidParameter("singular kernel requires alpha > 0");
    if (!(floor >= 0.0) || !std::isfinite(floor))
        throw InvalidParameter("kernel floor must be finite and >= 0");
    WeightKernel k;
    k.kind_ = KernelKind::Singular;
    k.alpha_ = alpha;
    k.floor_ = floor;
    return k;
}

WeightKernel WeightKernel::cucker_smale(double amplitude, double beta) {
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
        throw InvalidParameter("classic kernel requires K > 0");
    if (!(beta >= 0.0) || !std::isfinite(beta))
        throw InvalidParameter("classic kernel requires beta >= 0");
    WeightKernel k;
    k.kind_ = KernelKind::CuckerSmale;
    k.amplitude_ = amplitude;
    k.beta_ = beta;
    return k;
}

WeightKernel WeightKernel::with_floor(double floor) const {
    if (!(floor >= 0.0) || !std::isfinite(floor))
        throw InvalidParameter("kernel floor must be finite and >= 0");
    WeightKernel k = *this;
    k.floor_ = floor;
    return k;
}

double WeightKernel::eval(double s) const {
    if (!(s >= 0.0))
        throw OutOfDomain("kernel evaluated at negative distance");
    if (kind_ == KernelKind::CuckerSmale)
        return amplitude_ / std::pow(1.0 + s * s, 0.5 * beta_);
    const double r = std::max(s, floor_);
    if (r == 0.0)
        return std::numeric_limits<double>::infinity();
    return std::pow(r, -alpha_);
}

double WeightKernel::primitive(double s) const {
    if (kind_ != KernelKind::Singular)
        throw UnsupportedOperation("primitive is defined for the singular kernel only");
    if (alpha_ >= 1.0)
        throw UnsupportedOperation("primitive requires alpha < 1");
    if (!(s >= 0.0))
        throw OutOfDomain("primitive evaluated at negative distance");
    return std::pow(s, 1.0 - alpha_) / (1.0 - alpha_);
}

double WeightKernel::primitive_inverse(double y) const {
    if (kind_ != KernelKind::Singular)
        throw UnsupportedOperation("primitive is defined for the singular kernel only");
    if (alpha_ >= 1.0)
        throw UnsupportedOperation("primitive requires alpha < 1");
    if (!(y >= 0.0))
        throw OutOfDomain("primitive_inverse requires y >= 0");
    return std::pow((1.0 - alpha_) * y, 1.0 / (1.0 - alpha_));
}

} // namespace flock
