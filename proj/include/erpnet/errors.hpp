#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace erpnet {

// Error taxonomy. The CLI maps ConfigError/UsageError to exit code 2 and
// everything else to exit code 1.

/// Tensor or layer shape disagreement.
class ShapeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameter or model/run configuration.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Dataset content that cannot satisfy an operation's preconditions.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// API misuse, e.g. backward() without a cached forward pass.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary file. Carries the byte offset at which parsing failed.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

}  // namespace erpnet
