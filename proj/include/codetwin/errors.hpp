#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace codetwin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lexing or parsing failure. Always carries a 1-based source location.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

// Malformed serialized data (AST JSON, vocab files, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidRoot : public Error {
 public:
  using Error::Error;
};

class MalformedSbt : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class EmptySequence : public Error {
 public:
  using Error::Error;
};

class IdOutOfRange : public Error {
 public:
  using Error::Error;
};

/// Failure of one item inside a batch call; `index` names the item.
class BatchItemError : public Error {
 public:
  BatchItemError(std::size_t index, const std::string& cause)
      : Error("batch item " + std::to_string(index) + ": " + cause), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class VocabMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientClasses : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class EmptySide : public Error {
 public:
  using Error::Error;
};

class TooFewSolutions : public Error {
 public:
  using Error::Error;
};

class NotApplicable : public Error {
 public:
  using Error::Error;
};

// Raised by the reference interpreter.
class RuntimeFault : public Error {
 public:
  using Error::Error;
};

}  // namespace codetwin
