#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gopmc {

// Termination policy shared by the series-based special functions.
struct EvalPolicy {
    double rel_tol = 1e-12;
    int max_terms = 500;
};

inline constexpr EvalPolicy default_policy{};

// Bad inputs: wrong shapes, parameters outside the documented domain.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation that started from valid inputs but could not reach its
// accuracy contract (series overflow, non-convergence, failed factorization).
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Laplace-inversion self-consistency failure: two node counts disagree.
class InversionDiagnosticError : public NumericalError {
  public:
    explicit InversionDiagnosticError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace gopmc
