#pragma once

#include <stdexcept>
#include <string>

namespace pcr {

enum class ErrorCode {
  kConfig = 1,
  kParse,
  kDegenerate,
  kNumerical,
  kDivergence,
  kInsufficientData,
  kUnsupported,
  kIo,
  kSchema,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// C layer can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error(ErrorCode::kParse,
              "parse error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class NumericalError : public Error {
 public:
  NumericalError(int layer, const std::string& what)
      : Error(ErrorCode::kNumerical, what), layer_(layer) {}

  /// Index of the layer that produced the non-finite value, -1 if unknown.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

}  // namespace pcr
