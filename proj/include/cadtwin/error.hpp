#pragma once

#include <stdexcept>
#include <string>

namespace cadtwin {

// Base for every error raised by the library. Carries a short machine-readable
// category next to the human message so the CLI can map failures to exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { kMesh, kNumeric, kIo, kFormat, kArgument };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class MeshError : public Error {
 public:
  explicit MeshError(const std::string& what) : Error(Kind::kMesh, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Kind::kIo, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(Kind::kFormat, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(Kind::kArgument, what) {}
};

}  // namespace cadtwin
