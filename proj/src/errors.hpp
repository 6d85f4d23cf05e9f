#pragma once

#include <stdexcept>
#include <string>

namespace mdbert {

// Error taxonomy mirrored by the C API status codes: usage = 1, data = 2,
// numeric = 3. Anything else that escapes is reported as a data error.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mdbert
