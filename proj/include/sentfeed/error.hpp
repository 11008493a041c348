#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sentfeed {

enum class ErrorKind {
  SeriesTooShort,
  DegenerateSeries,
  HorizonTooLong,
  MissingMonth,
  InvalidRho,
  NonstationaryRho,
  NoFiniteThreshold,
  Infeasible,
  DegenerateStates,
  MissingVariance,
  RankDeficient,
  LagNegative,
  InsufficientOverlap,
  MisalignedIndex,
  TooFewHorizons,
  WindowTooLong,
  BlockTooLong,
  DrawOutOfRange,
  PvalOutOfRange,
  TooFewClusters,
  TooFewFirms,
  EmptyBin,
  MissingColumn,
  NoWithinVariation,
  SingularDesign,
  TooFewInUniverse,
  MissingSignal,
  SchemaViolation,
  NonMonotoneDates,
  StageDependencyMissing,
  MissingUpstream,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::HorizonTooLong: return "HorizonTooLong";
    case ErrorKind::MissingMonth: return "MissingMonth";
    case ErrorKind::InvalidRho: return "InvalidRho";
    case ErrorKind::NonstationaryRho: return "NonstationaryRho";
    case ErrorKind::NoFiniteThreshold: return "NoFiniteThreshold";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::DegenerateStates: return "DegenerateStates";
    case ErrorKind::MissingVariance: return "MissingVariance";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::LagNegative: return "LagNegative";
    case ErrorKind::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorKind::MisalignedIndex: return "MisalignedIndex";
    case ErrorKind::TooFewHorizons: return "TooFewHorizons";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::BlockTooLong: return "BlockTooLong";
    case ErrorKind::DrawOutOfRange: return "DrawOutOfRange";
    case ErrorKind::PvalOutOfRange: return "PvalOutOfRange";
    case ErrorKind::TooFewClusters: return "TooFewClusters";
    case ErrorKind::TooFewFirms: return "TooFewFirms";
    case ErrorKind::EmptyBin: return "EmptyBin";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NoWithinVariation: return "NoWithinVariation";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::TooFewInUniverse: return "TooFewInUniverse";
    case ErrorKind::MissingSignal: return "MissingSignal";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::NonMonotoneDates: return "NonMonotoneDates";
    case ErrorKind::StageDependencyMissing: return "StageDependencyMissing";
    case ErrorKind::MissingUpstream: return "MissingUpstream";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// All library failures are reported through this exception; `kind()` lets
// callers (and the CLI exit-code mapping) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace sentfeed
