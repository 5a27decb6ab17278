#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clmls {

/// Operand shapes do not agree, or a size precondition (K < L, L >= 2, ...) is violated.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A matrix that must have full column rank does not.
class RankError : public std::runtime_error {
public:
    RankError(std::size_t deficient_columns, std::size_t total_columns, const std::string& what)
        : std::runtime_error(what)
        , deficient_columns_(deficient_columns)
        , total_columns_(total_columns)
    {
    }

    std::size_t deficient_columns() const noexcept { return deficient_columns_; }
    std::size_t total_columns() const noexcept { return total_columns_; }

private:
    std::size_t deficient_columns_;
    std::size_t total_columns_;
};

/// A non-finite error or weight appeared while adapting.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")")
        , iteration_(iteration)
    {
    }

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// The sparse-constraint direction P*s vanished, so the l1 multiplier is undefined.
class DegenerateDirectionError : public std::runtime_error {
public:
    DegenerateDirectionError(double projected_norm2)
        : std::runtime_error("sparsity direction is swallowed by the constraint subspace: ||P s||^2 = "
                             + std::to_string(projected_norm2))
        , projected_norm2_(projected_norm2)
    {
    }

    double projected_norm2() const noexcept { return projected_norm2_; }

private:
    double projected_norm2_;
};

/// Invalid experiment configuration. `line()` is 0 when the problem is not tied to one line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& what)
        : std::runtime_error(what)
        , line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace clmls
