#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vif {

enum class ErrorCode {
  InvalidArgument,
  SingularMatrix,
  Diverged,
  DegenerateInput,
  NonFinite,
  EmptyRiskSet,
  NoEvents,
  EmptyGraph,
  EmptyTripletSet,
  NoPresentItems,
  UnrealizableMixture,
  DataError,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyRiskSet: return "EmptyRiskSet";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::EmptyTripletSet: return "EmptyTripletSet";
    case ErrorCode::NoPresentItems: return "NoPresentItems";
    case ErrorCode::UnrealizableMixture: return "UnrealizableMixture";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace vif
