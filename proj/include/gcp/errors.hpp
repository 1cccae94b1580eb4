#pragma once

#include <stdexcept>
#include <string>

namespace gcp {

// Base class for every error the library raises. `code()` is a short
// machine-parsable tag used by the CLI and the HTTP service.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Value-range or structural violation of a domain type.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& message) : Error("checkpoint", message) {}
};

class DatasetError : public Error {
 public:
  explicit DatasetError(const std::string& message) : Error("dataset", message) {}
};

// Raised by trainers: diverged losses, unfrozen weights that must stay frozen.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("training", message) {}
};

}  // namespace gcp
