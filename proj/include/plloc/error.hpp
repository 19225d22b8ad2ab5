#pragma once

#include <stdexcept>
#include <string>

namespace plloc {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (bad files, mismatched sizes, invalid
/// configuration values). CLI exit code 2.
struct InvalidInput : Error {
  using Error::Error;
};

struct InvalidMaps : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct LengthMismatch : InvalidInput {
  using InvalidInput::InvalidInput;
};

/// Geometrically degenerate or infeasible situation. CLI exit code 3.
struct DegenerateError : Error {
  using Error::Error;
};

struct BehindCamera : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct DegenerateLine : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct ParallelLines : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct DegenerateSegment : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct DegenerateBaseline : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct InsufficientDepth : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct TooFewCorrespondences : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct NoConsensus : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct NoCorrespondences : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct EmptyRetrieval : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct EmptyGroundTruth : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct InfeasibleConfig : DegenerateError {
  using DegenerateError::DegenerateError;
};

struct Diverged : DegenerateError {
  using DegenerateError::DegenerateError;
};

}  // namespace plloc
