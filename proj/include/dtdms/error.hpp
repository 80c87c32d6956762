#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace dtdms {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input text could not be parsed. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::size_t line = 0, std::string field = {})
      : Error(decorate(message, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string decorate(const std::string& message, std::size_t line,
                              const std::string& field) {
    std::string out;
    if (line != 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  std::size_t line_;
  std::string field_;
};

/// An id names an entity that does not exist.
class ReferenceError : public Error {
 public:
  ReferenceError(const std::string& what_kind, std::string id)
      : Error("unknown " + what_kind + " '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// Two entities of the same kind share an id.
class DuplicateIdError : public Error {
 public:
  DuplicateIdError(const std::string& what_kind, std::string id)
      : Error("duplicate " + what_kind + " id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// A value violates a documented range or invariant.
class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace dtdms
