#pragma once

#include <stdexcept>
#include <string>

namespace plugtag {

// Exit-code categories used by the CLI: 1 usage, 2 data, 3 numeric/contract.
enum class ErrorClass { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& msg)
      : std::runtime_error(msg), cls_(cls) {}
  ErrorClass error_class() const { return cls_; }

 private:
  ErrorClass cls_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(ErrorClass::Numeric, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ErrorClass::Numeric, msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(ErrorClass::Numeric, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(ErrorClass::Data, msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(ErrorClass::Usage, msg) {}
};

// Distinct failure kinds for binary artifact loading.
enum class FormatFault {
  BadMagic,
  VersionMismatch,
  Truncated,
  ChecksumMismatch,
  HashMismatch,
};

class FormatError : public Error {
 public:
  FormatError(FormatFault fault, const std::string& msg)
      : Error(ErrorClass::Data, msg), fault_(fault) {}
  FormatFault fault() const { return fault_; }

 private:
  FormatFault fault_;
};

}  // namespace plugtag
