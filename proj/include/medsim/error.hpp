#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace medsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input; `path` names the offending field ("medication[3]").
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class TemplateError : public Error {
 public:
  TemplateError(std::string slot, const std::string& what)
      : Error(what), slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

class LexiconError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

// Judge output that could not be parsed into the kind's schema. Keeps the raw
// text for audit.
class JudgeFormatError : public Error {
 public:
  JudgeFormatError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Transport-level failures. Everything deriving from TransientError is retried
// by the gateway.
class TransientError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransientError {
 public:
  using TransientError::TransientError;
};

class ConnectionError : public TransientError {
 public:
  using TransientError::TransientError;
};

class RemoteError : public Error {
 public:
  RemoteError(int status, std::string body)
      : Error("remote returned status " + std::to_string(status)),
        status_(status),
        body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  bool transient() const noexcept { return status_ >= 500 || status_ == 429; }

 private:
  int status_;
  std::string body_;
};

class RateLimitError : public RemoteError {
 public:
  explicit RateLimitError(std::string body) : RemoteError(429, std::move(body)) {}
};

}  // namespace medsim
