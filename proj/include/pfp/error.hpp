#pragma once

#include <stdexcept>
#include <string>

namespace pfp {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// taxonomy
class UnknownSubFeature : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t position)
      : Error(msg + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// relabel
class DegenerateTarget : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class SizeLimitExceeded : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// annotate / chat
class MissingField : public Error {
 public:
  using Error::Error;
};

class ExtractionParseError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class EmptyGeneration : public Error {
 public:
  using Error::Error;
};

// classifier
class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

// diagnostics
class ZeroSupport : public Error {
 public:
  using Error::Error;
};

// reward providers; carries how far the evaluation got before failing.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& msg, std::size_t records_done,
                std::size_t records_won)
      : Error(msg + " (completed " + std::to_string(records_done) +
              " records, " + std::to_string(records_won) + " wins)"),
        records_done_(records_done),
        records_won_(records_won) {}
  std::size_t records_done() const { return records_done_; }
  std::size_t records_won() const { return records_won_; }

 private:
  std::size_t records_done_;
  std::size_t records_won_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfp
