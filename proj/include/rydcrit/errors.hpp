#pragma once

#include <stdexcept>
#include <string>

namespace rydcrit {

enum class ErrorKind {
    InvalidGeometry,
    Domain,
    Dimension,
    Convergence,
    Integration,
    Capacity,
    Config,
    DegenerateFit,
    BootstrapInstability,
    Io,
};

const char* to_string(ErrorKind kind);

/// Base class for every error raised by the library. The kind selects the
/// CLI exit code and lets callers (e.g. the bootstrap driver) decide which
/// failures are recoverable.
class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& msg);
    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

class ConvergenceError : public Error {
   public:
    ConvergenceError(const std::string& msg, double residual);
    double residual() const noexcept { return residual_; }

   private:
    double residual_;
};

class IntegrationError : public Error {
   public:
    IntegrationError(const std::string& msg, double achieved_tolerance);
    double achieved_tolerance() const noexcept { return achieved_; }

   private:
    double achieved_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& msg);

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace rydcrit
