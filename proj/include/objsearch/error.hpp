#pragma once

#include <stdexcept>
#include <string>

namespace objsearch {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (scene file, script, message). The message
/// carries line or field context.
class ParseError : public Error {
public:
  using Error::Error;
};

/// A value violates a domain invariant.
class InvariantError : public Error {
public:
  using Error::Error;
};

/// An operation was called outside its precondition.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// An embedding or feedback backend failed.
class ProviderError : public Error {
public:
  ProviderError(std::string subject, const std::string &what)
      : Error(what), subject_(std::move(subject)) {}

  /// The text (embedding) or request id (feedback) that was being served.
  const std::string &subject() const noexcept { return subject_; }

private:
  std::string subject_;
};

} // namespace objsearch
