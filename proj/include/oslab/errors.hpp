#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace oslab {

// Argument outside the mathematical domain of an operation (negative s, negative field values).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed numerical parameter (delta <= 0, empty lists, mismatched grids).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested computation needs data the object cannot supply.
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Two-flow comparison attempted on ensembles that do not share noise.
class CouplingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Refused explicit step; carries the admissible time step.
class CflError : public std::runtime_error {
 public:
  CflError(const std::string& what, double admissible_dt)
      : std::runtime_error(what), admissible_dt_(admissible_dt) {}
  double admissible_dt() const noexcept { return admissible_dt_; }

 private:
  double admissible_dt_;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> findings);
  const std::vector<std::string>& findings() const noexcept { return findings_; }

 private:
  std::vector<std::string> findings_;
};

}  // namespace oslab
