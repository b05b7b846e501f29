#include "rydcrit/errors.hpp"

namespace rydcrit {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidGeometry: return "invalid geometry";
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Convergence: return "convergence error";
        case ErrorKind::Integration: return "integration error";
        case ErrorKind::Capacity: return "capacity error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::DegenerateFit: return "degenerate fit";
        case ErrorKind::BootstrapInstability: return "bootstrap instability";
        case ErrorKind::Io: return "i/o error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& msg)
    : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

ConvergenceError::ConvergenceError(const std::string& msg, double residual)
    : Error(ErrorKind::Convergence, msg + " (residual " + std::to_string(residual) + ")"),
      residual_(residual) {}

IntegrationError::IntegrationError(const std::string& msg, double achieved_tolerance)
    : Error(ErrorKind::Integration,
            msg + " (achieved tolerance " + std::to_string(achieved_tolerance) + ")"),
      achieved_(achieved_tolerance) {}

void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace rydcrit
