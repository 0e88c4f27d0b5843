#pragma once

#include <stdexcept>
#include <string>

namespace leveldot {

/// Invalid ensemble or experiment configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    /// 1-based line in the config text the error refers to, 0 if unknown.
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Block dimensions of H, W and the level do not fit together.
class AssemblyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a numerical function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Eigensolver, quadrature or Monte Carlo failure. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive quadrature ran out of subdivisions; carries the best estimate.
class QuadratureError : public NumericalError {
public:
    QuadratureError(const std::string& what, double partial_value, double partial_error)
        : NumericalError(what), value(partial_value), abs_error(partial_error) {}

    double value;
    double abs_error;
};

}  // namespace leveldot
