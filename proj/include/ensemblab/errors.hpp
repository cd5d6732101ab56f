#pragma once

#include <stdexcept>
#include <string>

namespace ensemblab {

/// Bad arguments or malformed inputs. Maps to CLI exit code 1.
class rejected_input : public std::invalid_argument {
public:
    explicit rejected_input(const std::string& what) : std::invalid_argument(what) {}
};

/// Not enough samples/windows/segments to run an analysis. Maps to CLI exit code 2.
class insufficient_data : public std::runtime_error {
public:
    explicit insufficient_data(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure (overflow, factorization breakdown, degenerate fit).
/// Maps to CLI exit code 2.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ensemblab
