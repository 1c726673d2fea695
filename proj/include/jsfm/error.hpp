#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jsfm {

enum class ErrorKind {
  kInvalidArgument,
  kNonPositiveDepth,
  kInfeasibleLayout,
  kEmptyGraph,
  kDegenerateConfiguration,
  kCheiralityAmbiguous,
  kNoConvergence,
  kDisconnectedGraph,
  kRankDeficient,
  kNumericalFailure,
  kTooFewObservations,
  kTooFewPoints,
  kDivergence,
  kDegenerateAlignment,
  kIo,
  kParse,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::kInfeasibleLayout: return "InfeasibleLayout";
    case ErrorKind::kEmptyGraph: return "EmptyGraph";
    case ErrorKind::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::kCheiralityAmbiguous: return "CheiralityAmbiguous";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kDisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kTooFewObservations: return "TooFewObservations";
    case ErrorKind::kTooFewPoints: return "TooFewPoints";
    case ErrorKind::kDivergence: return "Divergence";
    case ErrorKind::kDegenerateAlignment: return "DegenerateAlignment";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kParse: return "Parse";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind so
/// callers (RANSAC loops, the pipeline driver) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }  // without the kind prefix

 private:
  ErrorKind kind_;
  std::string message_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace jsfm
