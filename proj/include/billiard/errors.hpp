#pragma once

#include <stdexcept>
#include <string>

namespace billiard {

/// Invalid configuration or parameter outside its declared range (CLI exit 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A pipeline stage was requested before its upstream stage ran (CLI exit 3).
class MissingStageError : public std::runtime_error {
public:
    explicit MissingStageError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: root finder, ill-conditioned basis, degenerate input (CLI exit 4).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace billiard
