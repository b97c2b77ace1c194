#pragma once

#include <stdexcept>
#include <string>

namespace gexp {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration-level failures (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

struct ParseError : ConfigError {
    ParseError(int line_, const std::string& what_)
        : ConfigError("parse error at line " + std::to_string(line_) + ": " + what_),
          line(line_) {}
    int line;
};

struct ValidationError : ConfigError {
    ValidationError(std::string key_, std::string rule_)
        : ConfigError("invalid config key '" + key_ + "': " + rule_),
          key(std::move(key_)),
          rule(std::move(rule_)) {}
    std::string key;
    std::string rule;
};

// Numerical / runtime failures (CLI exit code 3, except StepTooCoarse which is
// fixable from the config and maps to 2).
struct NumericalError : Error {
    using Error::Error;
};

struct NonPositiveHorizon : NumericalError {
    using NumericalError::NumericalError;
};

struct TreeTooDeep : NumericalError {
    using NumericalError::NumericalError;
};

struct TerminalNode : NumericalError {
    using NumericalError::NumericalError;
};

struct InvalidNode : NumericalError {
    using NumericalError::NumericalError;
};

struct StepTooCoarse : NumericalError {
    StepTooCoarse(const std::string& what_, int min_steps_)
        : NumericalError(what_), min_steps(min_steps_) {}
    int min_steps;  // smallest step count that satisfies dt * M_eff <= 1/2
};

struct NoConvergence : NumericalError {
    using NumericalError::NumericalError;
};

struct TerminalOutOfBand : NumericalError {
    using NumericalError::NumericalError;
};

struct BarrierCrossing : NumericalError {
    using NumericalError::NumericalError;
};

struct HypothesisViolation : NumericalError {
    using NumericalError::NumericalError;
};

struct MissingPayoff : NumericalError {
    using NumericalError::NumericalError;
};

struct EnumerationTooLarge : NumericalError {
    using NumericalError::NumericalError;
};

struct LadderTooShort : NumericalError {
    using NumericalError::NumericalError;
};

struct NotMonotone : NumericalError {
    using NumericalError::NumericalError;
};

struct IoError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace gexp
