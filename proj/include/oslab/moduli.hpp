#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace oslab {

enum class ModulusKind { Linear, LogLinear, LogLinearSmooth, Custom };

// Result of sampling the structural assumptions on a modulus: rho(0) = 0,
// monotone, rho(s) >= s, and continuity at the splice.
struct ModulusCheck {
  bool ok = true;
  std::vector<std::string> findings;
};

// Osgood modulus rho: nondecreasing, rho(0) = 0, integral of 1/rho diverging at 0+.
class OsgoodModulus {
 public:
  using Fn = std::function<double(double)>;

  static OsgoodModulus linear();
  // s log(1/s) on [0, e^-2], spliced with s + e^-2 beyond.
  static OsgoodModulus loglinear();
  // s log(1/s + e), a smooth alternative without a splice.
  static OsgoodModulus loglinear_smooth();
  static OsgoodModulus custom(std::string name, Fn rho, Fn derivative, double breakpoint = 0.0);
  // (s, rho(s)) table, interpolated linearly in log-log space.
  static OsgoodModulus tabulated(std::string name, std::vector<std::pair<double, double>> table);
  static OsgoodModulus from_csv(const std::string& path);
  // "linear", "loglinear", "loglinear-smooth", or "csv:<path>".
  static OsgoodModulus from_key(const std::string& key);

  ModulusKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double breakpoint() const { return breakpoint_; }

  // Throws DomainError for negative s.
  double operator()(double s) const;
  // One-sided (right) derivative at the breakpoint.
  double derivative(double s) const;

  ModulusCheck check() const;

 private:
  OsgoodModulus(ModulusKind kind, std::string name, Fn rho, Fn derivative, double breakpoint);

  ModulusKind kind_;
  std::string name_;
  Fn rho_;
  Fn derivative_;
  double breakpoint_;
};

double eval_rho(const OsgoodModulus& modulus, double s);

// psi_delta(xi) = int_0^xi ds / (rho(s) + delta); concave, increasing, psi(0) = 0.
class AuxiliaryFunction {
 public:
  AuxiliaryFunction(OsgoodModulus modulus, double delta);

  const OsgoodModulus& modulus() const { return modulus_; }
  double delta() const { return delta_; }
  double operator()(double xi) const;

 private:
  OsgoodModulus modulus_;
  double delta_;
};

double eval_psi(const AuxiliaryFunction& aux, double xi);

struct DivergenceReport {
  std::vector<double> epsilons;
  std::vector<double> integrals;  // I(eps) = int_eps^1 ds / rho(s)
  bool strictly_increasing = false;
  double growth_ratio = 0.0;      // I(eps_min) / I(eps_max)
  double ratio_threshold = 3.0;
  bool unbounded_looking = false;
  ModulusCheck modulus_check;
  // Advisory certificate: all of the above hold and the modulus passed its checks.
  bool certified() const { return strictly_increasing && unbounded_looking && modulus_check.ok; }
};

// Numerical (not analytic) certificate of int_{0+} ds / rho(s) = infinity.
DivergenceReport certify_osgood_divergence(const OsgoodModulus& modulus,
                                           const std::vector<double>& epsilons,
                                           double ratio_threshold = 3.0);

// int_a^b f(s) ds by adaptive Gauss-Kronrod on geometric panels; shared by the
// modulus integrals above.
double integrate_panels(const std::function<double(double)>& f, double a, double b,
                        const std::vector<double>& breaks, double rel_tol);

}  // namespace oslab
