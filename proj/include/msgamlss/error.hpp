#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace msgamlss {

/// Base of every error raised by the library. `exit_code` is what the CLI
/// returns when the error escapes a command.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Bad configuration: unknown covariate, invalid term, negative lambda, ...
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Argument outside the domain of an operation (p outside (0,1),
/// covariate outside the knot range, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what, 3) {}
};

/// Invalid distribution parameter, e.g. sigma <= 0.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error(what, 3) {}
};

/// The likelihood could not be evaluated (zero density in every state).
class LikelihoodError : public Error {
public:
    LikelihoodError(const std::string& what, std::size_t time_index)
        : Error(what, 3), time_index_(time_index) {}
    std::size_t time_index() const noexcept { return time_index_; }

private:
    std::size_t time_index_;
};

/// Generic numerical failure (singular system, non-invertible Hessian).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, 3) {}
};

/// Inner optimizer ran out of iterations. Carries the best iterate seen.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> best_theta,
                     double gradient_norm)
        : Error(what, 3), best_theta_(std::move(best_theta)), gradient_norm_(gradient_norm) {}
    const std::vector<double>& best_theta() const noexcept { return best_theta_; }
    double gradient_norm() const noexcept { return gradient_norm_; }

private:
    std::vector<double> best_theta_;
    double gradient_norm_;
};

}  // namespace msgamlss
