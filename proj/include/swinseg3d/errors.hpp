#pragma once

#include <stdexcept>
#include <string>

namespace swinseg3d {

// Every failure the library raises derives from Error so the CLI can print a
// single-line reason and exit non-zero.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

enum class ParseErrorKind { BadMagic, BadHeader, Truncated, DimensionOverflow, TrailingData };

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ParseErrorKind parse_kind() const noexcept { return kind_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  ParseErrorKind kind_;
};

enum class CheckpointErrorKind { VersionMismatch, CorruptManifest, ConfigMismatch, Truncated };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  CheckpointErrorKind checkpoint_kind() const noexcept { return kind_; }
  const char* kind() const noexcept override { return "checkpoint"; }

 private:
  CheckpointErrorKind kind_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training"; }
};

}  // namespace swinseg3d
