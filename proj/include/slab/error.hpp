#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slab {

// Base of every error the library throws. `code()` is a stable, machine
// parsable token the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message) : Error("contract", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

class DecodeError : public Error {
 public:
  DecodeError(std::size_t byte_offset, const std::string& message)
      : Error("decode", message + " at byte offset " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

// Persisted file does not match its documented layout.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format", message) {}
};

// Input data is well formed but unusable (empty dataset, bad CSV row, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

#define SLAB_REQUIRE(cond, msg)                      \
  do {                                               \
    if (!(cond)) throw ::slab::ContractError((msg)); \
  } while (0)

}  // namespace slab
