#pragma once

#include <stdexcept>
#include <string>

namespace pt2i {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty prompt, n_seeds = 0, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A document did not match the expected schema. `path()` is a JSON pointer
/// to the offending field ("" for document-level failures).
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class AllZeroError : public Error {
 public:
  AllZeroError() : Error("every candidate has probability 0") {}
};

class UnknownTargetError : public Error {
 public:
  using Error::Error;
};

class AmbiguousArgmaxError : public Error {
 public:
  using Error::Error;
};

/// No bracketed document could be located in model output.
class NoDocumentFound : public Error {
 public:
  using Error::Error;
};

/// A parser stage could not produce a valid structure within its repair budget.
class ParseFailure : public Error {
 public:
  using Error::Error;
};

class MissingQuestionMarkers : public Error {
 public:
  MissingQuestionMarkers() : Error("model response has no <question> ... </question> markers") {}
};

/// Missing or inconsistent runtime configuration (unset credentials, bad paths).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Backend failures. All remote problems surface as one of these; none abort.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimitedError : public BackendError {
 public:
  using BackendError::BackendError;
};

class MalformedResponseError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ContentBlockedError : public BackendError {
 public:
  using BackendError::BackendError;
};

class BackendUnavailableError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The rendered prompt exceeds the backend's configured character budget.
class ContextBudgetExceeded : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace pt2i
