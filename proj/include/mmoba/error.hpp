#pragma once

#include <stdexcept>
#include <string>

namespace mmoba {

// Error categories double as CLI exit-code classes (see docs/cli.md).
enum class ErrorKind {
  Config,          // invalid configuration field
  IllegalAction,   // action violates the current legal masks
  Io,              // missing or unreadable file
  BadMagic,
  VersionMismatch,
  Truncated,
  CountMismatch,
  HashMismatch,
  Schema,          // incompatible mode / action spec / obs_dim
  Checkpoint,
  Internal,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Thrown for configuration problems; `field` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& why)
      : Error(ErrorKind::Config, field + ": " + why), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace mmoba
