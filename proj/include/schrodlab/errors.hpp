#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace schrodlab {

// Contract violations (bad sizes, out-of-range parameters) throw
// std::invalid_argument. The types below carry extra context for the
// failures a caller may want to handle separately.

/// An iterative method ran out of budget. `residuals` holds the best
/// residual history seen before giving up.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> residuals)
        : std::runtime_error(what), residuals_(std::move(residuals)) {}

    const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
    std::vector<double> residuals_;
};

/// A configuration document failed validation. `path` is the dotted
/// field path, e.g. "sensor.sigma".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& reason)
        : std::runtime_error(path + ": " + reason), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Eigenbasis cache file is unreadable, truncated, or belongs to a
/// different (grid, potential, cutoff) triple.
class CacheError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace schrodlab
