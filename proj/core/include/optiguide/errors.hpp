#pragma once

#include <stdexcept>
#include <string>

namespace optiguide {

// Domain errors raised by the dynamics and generation layers.

struct NonPositiveRadius : std::domain_error {
    explicit NonPositiveRadius(double r)
        : std::domain_error("relative distance must be positive, got r=" + std::to_string(r)) {}
};

struct NonPositiveTgo : std::domain_error {
    explicit NonPositiveTgo(double t_go)
        : std::domain_error("time-to-go estimate must be positive, got " + std::to_string(t_go)) {}
};

struct InfeasibleGeometry : std::domain_error {
    explicit InfeasibleGeometry(const std::string& what) : std::domain_error(what) {}
};

struct NonPositiveSigma : std::domain_error {
    explicit NonPositiveSigma(double sigma)
        : std::domain_error("posterior spread must be positive, got " + std::to_string(sigma)) {}
};

struct SingularSensitivity : std::runtime_error {
    explicit SingularSensitivity(double det)
        : std::runtime_error("sensitivity block is singular, |det|=" + std::to_string(det)) {}
};

struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalBlowup : std::runtime_error {
    explicit NumericalBlowup(const std::string& what) : std::runtime_error(what) {}
};

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct DataTooLarge : std::invalid_argument {
    explicit DataTooLarge(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace optiguide
