#pragma once

#include <stdexcept>
#include <string>

namespace icarh {

// Error categories map onto CLI exit codes: validation -> 2,
// numeric -> 3, io -> 4.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace icarh
