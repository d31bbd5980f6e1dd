#pragma once

#include <stdexcept>
#include <string>

namespace pestsim {

/// Caller broke an operation's precondition (bad window, wrong shape, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A configuration key or value is invalid. `key()` names the offender.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Input data cannot support the requested operation (empty class, missing pool, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Component tuning has no solution; `constraint()` names the one that failed.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(std::string constraint, const std::string& what)
        : std::runtime_error(what), constraint_(std::move(constraint)) {}
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string constraint_;
};

}  // namespace pestsim
