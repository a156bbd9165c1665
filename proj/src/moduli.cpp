#include "oslab/moduli.hpp"

#include "oslab/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace oslab {

namespace {

const double kSplice = std::exp(-2.0);

void require_nonnegative(double s) {
  if (!(s >= 0.0)) throw DomainError("modulus evaluated at negative s");
}

}  // namespace

OsgoodModulus::OsgoodModulus(ModulusKind kind, std::string name, Fn rho, Fn derivative,
                             double breakpoint)
    : kind_(kind),
      name_(std::move(name)),
      rho_(std::move(rho)),
      derivative_(std::move(derivative)),
      breakpoint_(breakpoint) {}

OsgoodModulus OsgoodModulus::linear() {
  return {ModulusKind::Linear, "linear", [](double s) { return s; }, [](double) { return 1.0; },
          0.0};
}

OsgoodModulus OsgoodModulus::loglinear() {
  auto rho = [](double s) {
    if (s == 0.0) return 0.0;
    return s <= kSplice ? s * std::log(1.0 / s) : s + kSplice;
  };
  auto drho = [](double s) {
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    return s < kSplice ? std::log(1.0 / s) - 1.0 : 1.0;
  };
  return {ModulusKind::LogLinear, "loglinear", rho, drho, kSplice};
}

OsgoodModulus OsgoodModulus::loglinear_smooth() {
  auto rho = [](double s) {
    if (s == 0.0) return 0.0;
    return s * std::log(1.0 / s + std::numbers::e);
  };
  auto drho = [](double s) {
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    const double u = 1.0 / s + std::numbers::e;
    return std::log(u) - 1.0 / (s * u);
  };
  return {ModulusKind::LogLinearSmooth, "loglinear-smooth", rho, drho, 0.0};
}

OsgoodModulus OsgoodModulus::custom(std::string name, Fn rho, Fn derivative, double breakpoint) {
  if (!derivative) {
    derivative = [rho](double s) {
      const double h = std::max(1e-7 * s, 1e-12);
      return (rho(s + h) - rho(s)) / h;
    };
  }
  return {ModulusKind::Custom, std::move(name), std::move(rho), std::move(derivative), breakpoint};
}

OsgoodModulus OsgoodModulus::tabulated(std::string name,
                                       std::vector<std::pair<double, double>> table) {
  std::sort(table.begin(), table.end());
  if (table.size() < 2) throw ParameterError("tabulated modulus needs at least two rows");
  std::vector<double> ls, lr;
  for (auto [s, r] : table) {
    if (!(s > 0.0) || !(r > 0.0))
      throw DomainError("tabulated modulus rows must have positive s and rho(s)");
    ls.push_back(std::log(s));
    lr.push_back(std::log(r));
  }
  for (std::size_t i = 1; i < ls.size(); ++i)
    if (!(ls[i] > ls[i - 1])) throw ParameterError("tabulated modulus has duplicate s values");

  // Log-log linear interpolation; the end segments extrapolate.
  auto slope_at = [ls, lr](double s, double& lrho) {
    const double x = std::log(s);
    auto it = std::upper_bound(ls.begin(), ls.end(), x);
    std::size_t i = static_cast<std::size_t>(std::clamp<long>(it - ls.begin(), 1, ls.size() - 1));
    const double slope = (lr[i] - lr[i - 1]) / (ls[i] - ls[i - 1]);
    lrho = lr[i - 1] + slope * (x - ls[i - 1]);
    return slope;
  };
  auto rho = [slope_at](double s) {
    if (s == 0.0) return 0.0;
    double lrho = 0.0;
    slope_at(s, lrho);
    return std::exp(lrho);
  };
  auto drho = [slope_at](double s) {
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    double lrho = 0.0;
    const double slope = slope_at(s, lrho);
    return slope * std::exp(lrho) / s;
  };
  return {ModulusKind::Custom, std::move(name), rho, drho, 0.0};
}

OsgoodModulus OsgoodModulus::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open modulus table " + path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double s = 0.0, r = 0.0;
    if (!(ss >> s >> r)) continue;  // header row
    rows.emplace_back(s, r);
  }
  return tabulated("csv:" + path, std::move(rows));
}

OsgoodModulus OsgoodModulus::from_key(const std::string& key) {
  if (key == "linear") return linear();
  if (key == "loglinear") return loglinear();
  if (key == "loglinear-smooth") return loglinear_smooth();
  if (key.rfind("csv:", 0) == 0) return from_csv(key.substr(4));
  throw ParameterError("unknown modulus key '" + key + "'");
}

double OsgoodModulus::operator()(double s) const {
  require_nonnegative(s);
  return rho_(s);
}

double OsgoodModulus::derivative(double s) const {
  require_nonnegative(s);
  return derivative_(s);
}

ModulusCheck OsgoodModulus::check() const {
  ModulusCheck out;
  auto fail = [&](std::string msg) {
    out.ok = false;
    out.findings.push_back(std::move(msg));
  };
  if (rho_(0.0) != 0.0) fail("rho(0) != 0");

  double prev = 0.0;
  bool monotone = true, dominates = true;
  double worst_s = 0.0;
  for (int k = 0; k <= 600; ++k) {
    const double s = std::pow(10.0, -12.0 + 15.0 * k / 600.0);
    const double r = rho_(s);
    if (!std::isfinite(r) || r < prev) monotone = false;
    if (r < s * (1.0 - 1e-12) && dominates) {
      dominates = false;
      worst_s = s;
    }
    prev = r;
  }
  if (!monotone) fail("rho is not nondecreasing on the sampled log grid");
  if (!dominates) {
    std::ostringstream os;
    os << "rho(s) >= s fails (first at s = " << worst_s << ")";
    fail(os.str());
  }
  if (breakpoint_ > 0.0) {
    const double left = rho_(std::nextafter(breakpoint_, 0.0));
    const double right = rho_(std::nextafter(breakpoint_, 1.0));
    if (std::abs(left - right) > 1e-12) fail("rho is discontinuous at the breakpoint");
  }
  return out;
}

double eval_rho(const OsgoodModulus& modulus, double s) { return modulus(s); }

double integrate_panels(const std::function<double(double)>& f, double a, double b,
                        const std::vector<double>& breaks, double rel_tol) {
  if (!(b > a)) return 0.0;
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());

  using boost::math::quadrature::gauss_kronrod;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    // Each panel is mapped onto [0, 1]: on very short panels the library's error
    // estimate stalls at an absolute floor and recursion runs to full depth.
    const double lo = pts[i], len = pts[i + 1] - pts[i];
    auto g = [&](double t) { return len * f(lo + len * t); };
    double err = 0.0;
    total += gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 15, rel_tol, &err);
  }
  return total;
}

AuxiliaryFunction::AuxiliaryFunction(OsgoodModulus modulus, double delta)
    : modulus_(std::move(modulus)), delta_(delta) {
  if (!(delta > 0.0)) throw ParameterError("psi_delta requires delta > 0");
}

double AuxiliaryFunction::operator()(double xi) const {
  if (!(xi >= 0.0)) throw DomainError("psi_delta evaluated at negative xi");
  if (xi == 0.0) return 0.0;
  if (modulus_.kind() == ModulusKind::Linear) return std::log1p(xi / delta_);

  // Geometric panels resolve the transition from 1/delta near 0 to 1/rho(s).
  std::vector<double> breaks;
  if (modulus_.breakpoint() > 0.0) breaks.push_back(modulus_.breakpoint());
  for (double x = std::min(delta_, xi) * 1e-3; x < xi; x *= 4.0) breaks.push_back(x);
  const auto& rho = modulus_;
  const double delta = delta_;
  return integrate_panels([&](double s) { return 1.0 / (rho(s) + delta); }, 0.0, xi, breaks,
                          1e-10);
}

double eval_psi(const AuxiliaryFunction& aux, double xi) { return aux(xi); }

DivergenceReport certify_osgood_divergence(const OsgoodModulus& modulus,
                                           const std::vector<double>& epsilons,
                                           double ratio_threshold) {
  if (epsilons.empty()) throw ParameterError("divergence certificate needs at least one epsilon");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0 && epsilons[i] < 1.0))
      throw ParameterError("epsilons must lie in (0, 1)");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
      throw ParameterError("epsilons must be strictly decreasing");
  }

  DivergenceReport rep;
  rep.epsilons = epsilons;
  rep.ratio_threshold = ratio_threshold;
  rep.modulus_check = modulus.check();

  // In u = log s the integrand e^u / rho(e^u) is smooth apart from the splice.
  auto integrand = [&](double u) {
    const double s = std::exp(u);
    return s / modulus(s);
  };
  std::vector<double> breaks;
  if (modulus.breakpoint() > 0.0) breaks.push_back(std::log(modulus.breakpoint()));
  for (double u = -1.0; u > std::log(epsilons.back()); u -= 1.0) breaks.push_back(u);

  for (double eps : epsilons)
    rep.integrals.push_back(integrate_panels(integrand, std::log(eps), 0.0, breaks, 1e-12));

  rep.strictly_increasing = true;
  for (std::size_t i = 1; i < rep.integrals.size(); ++i)
    if (!(rep.integrals[i] > rep.integrals[i - 1])) rep.strictly_increasing = false;
  rep.growth_ratio = rep.integrals.back() / rep.integrals.front();
  rep.unbounded_looking = rep.integrals.size() > 1 && rep.growth_ratio > ratio_threshold;
  return rep;
}

}  // namespace oslab
