#pragma once

#include <stdexcept>
#include <string>

namespace laif {

enum class ErrorKind {
  kShapeMismatch,
  kDivisionByZero,
  kNonPositiveOutput,
  kTapeMismatch,
  kNonScalarRoot,
  kMissingGrad,
  kDegenerateBatch,
  kBadProbability,
  kBadLabel,
  kInvalidPlan,
  kInvalidSpec,
  kNoHead,
  kEmptyClass,
  kUnknownExtension,
  kMalformedHeader,
  kTruncatedData,
  kBadMagic,
  kCrcMismatch,
  kArchMismatch,
  kVersionUnsupported,
  kNumericAbort,
  kIo,
  kInvalidArgument,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kDivisionByZero: return "DivisionByZero";
    case ErrorKind::kNonPositiveOutput: return "NonPositiveOutput";
    case ErrorKind::kTapeMismatch: return "TapeMismatch";
    case ErrorKind::kNonScalarRoot: return "NonScalarRoot";
    case ErrorKind::kMissingGrad: return "MissingGrad";
    case ErrorKind::kDegenerateBatch: return "DegenerateBatch";
    case ErrorKind::kBadProbability: return "BadProbability";
    case ErrorKind::kBadLabel: return "BadLabel";
    case ErrorKind::kInvalidPlan: return "InvalidPlan";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kNoHead: return "NoHead";
    case ErrorKind::kEmptyClass: return "EmptyClass";
    case ErrorKind::kUnknownExtension: return "UnknownExtension";
    case ErrorKind::kMalformedHeader: return "MalformedHeader";
    case ErrorKind::kTruncatedData: return "TruncatedData";
    case ErrorKind::kBadMagic: return "BadMagic";
    case ErrorKind::kCrcMismatch: return "CrcMismatch";
    case ErrorKind::kArchMismatch: return "ArchMismatch";
    case ErrorKind::kVersionUnsupported: return "VersionUnsupported";
    case ErrorKind::kNumericAbort: return "NumericAbort";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace laif
