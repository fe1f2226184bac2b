#pragma once

#include <stdexcept>
#include <string>

namespace nxf {

enum class ErrorKind {
  InvalidArgument,
  InvalidPyramid,
  Config,
  Format,
  CorruptFile,
  UndefinedMetric,
  Numeric,
};

/// Base exception for everything thrown by the library. The kind drives
/// the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidPyramid: return "invalid-pyramid";
    case ErrorKind::Config: return "config";
    case ErrorKind::Format: return "format";
    case ErrorKind::CorruptFile: return "corrupt-file";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace nxf
