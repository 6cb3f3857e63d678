#pragma once

#include <stdexcept>
#include <string>

namespace gin {

// Data/validation failures (bad input files, malformed records, shape
// mismatches). The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gin
