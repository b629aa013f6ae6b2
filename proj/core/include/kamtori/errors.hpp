#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kamtori {

// Base of every library failure. `kind()` is a stable identifier used by the CLI
// and in JSON summaries.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define KAMTORI_DECLARE_ERROR(Name, tag)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(tag, message) {}    \
  };

KAMTORI_DECLARE_ERROR(NumericCorruptionError, "numeric-corruption")
KAMTORI_DECLARE_ERROR(ObstructionError, "obstruction")
KAMTORI_DECLARE_ERROR(ModelDomainError, "model-domain")
KAMTORI_DECLARE_ERROR(DegenerateEmbeddingError, "degenerate-embedding")
KAMTORI_DECLARE_ERROR(TwistDegeneracyError, "twist-degeneracy")
KAMTORI_DECLARE_ERROR(InsufficientHyperbolicityError, "insufficient-hyperbolicity")
KAMTORI_DECLARE_ERROR(AmbiguousRankError, "ambiguous-rank")
KAMTORI_DECLARE_ERROR(RegimeViolationError, "regime-violation")
KAMTORI_DECLARE_ERROR(ScalingError, "scaling")
KAMTORI_DECLARE_ERROR(SignError, "sign")
KAMTORI_DECLARE_ERROR(LogDomainError, "log-domain")
KAMTORI_DECLARE_ERROR(UnitMultiplierError, "unit-multiplier")
KAMTORI_DECLARE_ERROR(UnsupportedRankError, "unsupported-rank")
KAMTORI_DECLARE_ERROR(DegeneratePairingError, "degenerate-pairing")
KAMTORI_DECLARE_ERROR(OrderContractError, "order-contract")
KAMTORI_DECLARE_ERROR(FormatError, "format")
KAMTORI_DECLARE_ERROR(ConfigError, "config")
KAMTORI_DECLARE_ERROR(ParameterError, "parameter")
KAMTORI_DECLARE_ERROR(WindingError, "winding")

#undef KAMTORI_DECLARE_ERROR

class SmallDivisorError : public Error {
 public:
  SmallDivisorError(const std::string& message, std::vector<int> mode)
      : Error("small-divisor", message), mode_(std::move(mode)) {}
  const std::vector<int>& mode() const noexcept { return mode_; }

 private:
  std::vector<int> mode_;
};

class ResonanceError : public Error {
 public:
  ResonanceError(const std::string& message, int order)
      : Error("resonance", message), order_(order) {}
  int order() const noexcept { return order_; }

 private:
  int order_;
};

class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& message, std::vector<double> residuals)
      : Error("no-convergence", message), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

class ContinuationStallError : public Error {
 public:
  ContinuationStallError(const std::string& message, double last_good)
      : Error("continuation-stall", message), last_good_(last_good) {}
  double last_good() const noexcept { return last_good_; }

 private:
  double last_good_;
};

}  // namespace kamtori
