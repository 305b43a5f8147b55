#pragma once

#include <stdexcept>
#include <string>

namespace sbrw {

/// Parameter outside its admissible range.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inconsistent or unknown configuration (kind/params mismatch, unknown preset, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical procedure failed to converge.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Not enough usable samples for an estimator.
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A preset's estimated cost exceeds the configured budget.
class BudgetExceeded : public std::runtime_error {
public:
    BudgetExceeded(const std::string& what, double estimate, double budget)
        : std::runtime_error(what), estimate_(estimate), budget_(budget)
    {
    }
    [[nodiscard]] double estimate() const noexcept { return estimate_; }
    [[nodiscard]] double budget() const noexcept { return budget_; }

private:
    double estimate_;
    double budget_;
};

} // namespace sbrw
