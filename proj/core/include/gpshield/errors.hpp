#pragma once

#include <stdexcept>
#include <string>

namespace gpshield {

/// A matrix that should have been positive definite was not, even after
/// diagonal jitter escalation.
struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

/// A covariance could not be factored (exactly singular or worse).
struct SingularCovariance : std::runtime_error {
  explicit SingularCovariance(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
  explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

/// Riccati iteration produced non-finite entries or hit the iteration cap
/// without the update norm shrinking.
struct RiccatiDiverged : std::runtime_error {
  explicit RiccatiDiverged(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver hit its iteration cap before reaching tolerance.
struct NoConvergence : std::runtime_error {
  explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

/// Invariant set growth could not certify even the smallest candidate.
struct NoInvariantFound : std::runtime_error {
  explicit NoInvariantFound(const std::string& what) : std::runtime_error(what) {}
};

/// An operation needing data was called on an empty buffer or model.
struct EmptyBuffer : std::runtime_error {
  explicit EmptyBuffer(const std::string& what) : std::runtime_error(what) {}
};

/// A gradient or loss evaluated to NaN or infinity.
struct NonFiniteGradient : std::runtime_error {
  explicit NonFiniteGradient(const std::string& what) : std::runtime_error(what) {}
};

/// Lookup past the end of an explicitly enumerated schedule or table.
struct IndexError : std::out_of_range {
  explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

/// Malformed configuration: unknown keys, missing blocks, bad values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gpshield
