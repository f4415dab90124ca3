#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gne {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidGraph : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

/// A standing assumption of the model (strong monotonicity, connectivity) fails.
struct AssumptionViolation : Error {
  using Error::Error;
};

struct LocalityError : Error {
  using Error::Error;
};

/// NaN/Inf produced by an oracle or an update; carries who and where.
struct NumericFailure : Error {
  NumericFailure(std::size_t agent, std::string phase, std::size_t round = 0)
      : Error("numeric failure at agent " + std::to_string(agent) + " in phase " + phase +
              " (round " + std::to_string(round) + ")"),
        agent(agent),
        phase(std::move(phase)),
        round(round) {}

  std::size_t agent;
  std::string phase;
  std::size_t round;
};

struct NonConvergence : Error {
  using Error::Error;
};

}  // namespace gne
