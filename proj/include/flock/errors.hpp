#pragma once

#include <stdexcept>
#include <string>

namespace flock {

// Invalid construction parameters (kernel exponents, step control, ...).
struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation not defined for this kernel kind / parameter range.
struct UnsupportedOperation : std::logic_error {
    using std::logic_error::logic_error;
};

// Raw kernel evaluated at zero distance between distinct clusters.
struct SingularEvaluation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Overflow / NaN detected in state or derivative.
struct NonFinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Adaptive step fell below dt_min repeatedly.
struct StepUnderflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Attempt to merge clusters that already share a root.
struct InvalidMerge : std::logic_error {
    using std::logic_error::logic_error;
};

// Input outside an operation's domain (oracle preconditions, windows, ...).
struct OutOfDomain : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Sampled series too coarse for the requested quadrature target.
struct InsufficientSampling : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Quadrature refinement failed to converge (possible misclassified sticking).
struct DivergenceSuspected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration document violates the schema; carries the offending key path.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& path, const std::string& what)
        : std::runtime_error("config error at '" + path + "': " + what), key_path(path) {}
    std::string key_path;
};

} // namespace flock
