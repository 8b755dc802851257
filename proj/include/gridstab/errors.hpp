#pragma once

#include <stdexcept>
#include <string>

namespace gridstab {

/// Bad input data or configuration (CLI exit code 2).
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation failed (singular system, eigensolver breakdown, ...);
/// CLI exit code 3.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridstab
