#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fasp {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: missing files, malformed records, invalid parameters.
/// The command-line front end maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Weight container failures. Each has its own type so callers can tell them apart.
class ContainerError : public InputError {
 public:
  using InputError::InputError;
};

class MalformedHeaderError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class MissingTensorError : public ContainerError {
 public:
  explicit MissingTensorError(const std::string& name)
      : ContainerError("missing tensor '" + name + "'"), name_(name) {}

  const std::string& tensor_name() const noexcept { return name_; }

 private:
  std::string name_;
};

class TensorShapeError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class OverlapError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class ChecksumError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class MissingScoreError : public Error {
 public:
  using Error::Error;
};

class PlanError : public InputError {
 public:
  using InputError::InputError;
};

// Remote toxicity scorer failures.
class ScorerError : public Error {
 public:
  using Error::Error;
};

class ScorerTimeoutError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class ScorerHttpError : public ScorerError {
 public:
  ScorerHttpError(int status, const std::string& what) : ScorerError(what), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

class ScorerProtocolError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

}  // namespace fasp
