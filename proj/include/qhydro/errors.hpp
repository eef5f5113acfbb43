#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qhydro {

/// Invalid configuration or precondition violation detected before any compute.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or other numerical breakdown at a specific node.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t node)
        : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// J <= 0: trajectories crossed and the label map is no longer invertible.
class MeshTanglingError : public std::runtime_error {
public:
    MeshTanglingError(std::size_t node, double time, double jacobian)
        : std::runtime_error("mesh tangling: J=" + std::to_string(jacobian) + " at node " +
                             std::to_string(node) + ", t=" + std::to_string(time)),
          node_(node), time_(time), jacobian_(jacobian) {}
    std::size_t node() const noexcept { return node_; }
    double time() const noexcept { return time_; }
    double jacobian() const noexcept { return jacobian_; }

private:
    std::size_t node_;
    double time_;
    double jacobian_;
};

/// A requested charge or transformation is not a symmetry for the given potential.
class InadmissibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Finite form requested for a generator that only has an infinitesimal implementation.
class UnsupportedTransformError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qhydro
