#pragma once

#include <stdexcept>
#include <string>

namespace rankkd {

/// Root of every exception the library throws. `kind()` maps onto the CLI
/// exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    Input,       // malformed or non-finite input, bad parameter
    Shape,       // dimension mismatch
    Config,      // invalid configuration
    Training,    // divergence during training
    Checkpoint,  // incompatible or corrupt checkpoint
    Oracle,      // finite-difference oracle failure
    Usage,       // API misuse (stale cache etc.)
  };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& w) : Error(Kind::Input, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(Kind::Shape, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(Kind::Config, w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(Kind::Training, w) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& w) : Error(Kind::Checkpoint, w) {}
};
struct OracleError : Error {
  explicit OracleError(const std::string& w) : Error(Kind::Oracle, w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(Kind::Usage, w) {}
};

}  // namespace rankkd
