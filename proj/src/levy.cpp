#include "levyfbsde/levy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace levyfbsde {

namespace {

constexpr double kAbsTol = 1e-10;

struct MomentShape {
  int power;      // power of |e|
  int rho_power;  // power of rho
  bool odd;       // kernel(-e) = -kernel(e) for even rho
};

MomentShape shape(Moment m) {
  switch (m) {
    case Moment::Mass: return {0, 0, false};
    case Moment::AbsMark: return {1, 0, false};
    case Moment::Mark: return {1, 0, true};
    case Moment::Square: return {2, 0, false};
    case Moment::Rho: return {0, 1, false};
    case Moment::RhoMark: return {1, 1, true};
    case Moment::RhoSquare: return {2, 1, false};
    case Moment::Rho2Square: return {2, 2, false};
    case Moment::Rho2: return {0, 2, false};
  }
  return {0, 0, false};
}

std::string interval_text(double lo, double hi) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << lo << ", " << hi << "]";
  return os.str();
}

}  // namespace

LevyFamily LevyFamily::symmetric_stable(double alpha) {
  return {Kind::SymmetricStable, alpha, 1.0, 1.0};
}

LevyFamily LevyFamily::tempered_stable(double alpha, double lambda) {
  return {Kind::TemperedStable, alpha, lambda, 1.0};
}

LevyFamily LevyFamily::exponential_tails(double lambda, double c) {
  return {Kind::ExponentialTails, 0.0, lambda, c};
}

std::string LevyFamily::name() const {
  switch (kind) {
    case Kind::SymmetricStable: return "symmetric_stable";
    case Kind::TemperedStable: return "tempered_stable";
    case Kind::ExponentialTails: return "exponential_tails";
  }
  return "unknown";
}

double RhoSpec::operator()(double e) const {
  return kind == Kind::Constant ? scale : scale * std::cos(frequency * e);
}

double RhoSpec::sup_abs() const { return std::abs(scale); }

std::string moment_name(Moment m) {
  switch (m) {
    case Moment::Mass: return "nu";
    case Moment::AbsMark: return "|e| nu";
    case Moment::Mark: return "e nu";
    case Moment::Square: return "e^2 nu";
    case Moment::Rho: return "rho nu";
    case Moment::RhoMark: return "rho e nu";
    case Moment::RhoSquare: return "rho e^2 nu";
    case Moment::Rho2Square: return "rho^2 e^2 nu";
    case Moment::Rho2: return "rho^2 nu";
  }
  return "?";
}

QuadratureError::QuadratureError(const std::string& integrand, double lo, double hi,
                                 double error_estimate)
    : std::runtime_error("quadrature of " + integrand + " over |e| in " + interval_text(lo, hi) +
                         " did not converge (error estimate " + std::to_string(error_estimate) +
                         ")"),
      integrand_(integrand),
      lo_(lo),
      hi_(hi) {}

LevyModel::LevyModel(LevyFamily family, RhoSpec rho, double rho_bound, double e_max)
    : family_(family), rho_(rho), rho_bound_(rho_bound), e_max_(e_max) {
  const bool stable_like = family.kind != LevyFamily::Kind::ExponentialTails;
  if (stable_like && !(family.alpha > 0.0 && family.alpha < 2.0))
    throw std::invalid_argument("levy: alpha must lie in (0,2)");
  if (family.kind != LevyFamily::Kind::SymmetricStable && !(family.lambda > 0.0))
    throw std::invalid_argument("levy: lambda must be positive");
  if (family.kind == LevyFamily::Kind::ExponentialTails && !(family.c > 0.0))
    throw std::invalid_argument("levy: c must be positive");
  if (!(e_max > 0.0) || !std::isfinite(e_max))
    throw std::invalid_argument("levy: e_max must be positive and finite");
  if (!(rho_bound > 0.0)) throw std::invalid_argument("levy: rho_bound must be positive");
  if (!(rho.sup_abs() < rho_bound))
    throw std::invalid_argument("levy: sup|rho| must be strictly below rho_bound");

  second_moment_ = integrate_quadrature(Moment::Square, 0.0, e_max_);
  if (!std::isfinite(second_moment_))
    throw std::invalid_argument("levy: second moment of nu is not finite");
  if (auto cf = integrate_closed_form(Moment::Square, 0.0, e_max_)) second_moment_ = *cf;
}

double LevyModel::one_sided_density(double a) const {
  if (!(a > 0.0) || a > e_max_) return 0.0;
  switch (family_.kind) {
    case LevyFamily::Kind::SymmetricStable:
      return family_.alpha * std::pow(a, -1.0 - family_.alpha);
    case LevyFamily::Kind::TemperedStable:
      return family_.alpha * std::pow(a, -1.0 - family_.alpha) * std::exp(-family_.lambda * a);
    case LevyFamily::Kind::ExponentialTails:
      return family_.c * std::exp(-family_.lambda * a) / a;
  }
  return 0.0;
}

double LevyModel::density(double e) const { return one_sided_density(std::abs(e)); }

double LevyModel::kernel(Moment m, double e) const {
  const MomentShape s = shape(m);
  double v = std::pow(std::abs(e), s.power);
  if (s.odd && e < 0.0) v = -v;
  for (int r = 0; r < s.rho_power; ++r) v *= rho_(e);
  return v;
}

double LevyModel::side_quadrature(Moment m, double lo, double hi, double sign) const {
  using boost::math::quadrature::gauss_kronrod;
  using boost::math::quadrature::tanh_sinh;
  const MomentShape s = shape(m);
  const double a_pow = s.power;
  const auto& fam = family_;
  const RhoSpec rho = rho_;
  // density(a) * a^power computed without forming a^{-1-alpha} on its own.
  auto weighted = [fam, a_pow](double a) {
    switch (fam.kind) {
      case LevyFamily::Kind::SymmetricStable:
        return fam.alpha * std::pow(a, a_pow - 1.0 - fam.alpha);
      case LevyFamily::Kind::TemperedStable:
        return fam.alpha * std::pow(a, a_pow - 1.0 - fam.alpha) * std::exp(-fam.lambda * a);
      case LevyFamily::Kind::ExponentialTails:
        return fam.c * std::pow(a, a_pow - 1.0) * std::exp(-fam.lambda * a);
    }
    return 0.0;
  };
  auto rho_factor = [rho, s, sign](double a) {
    double r = 1.0;
    for (int k = 0; k < s.rho_power; ++k) r *= rho(sign * a);
    return r;
  };

  double err = 0.0, l1 = 0.0, value = 0.0;
  if (lo > 0.0) {
    auto f = [&](double t) {
      const double a = std::exp(t);
      return weighted(a) * rho_factor(a) * a;
    };
    value = gauss_kronrod<double, 31>::integrate(f, std::log(lo), std::log(hi), 12, 1e-12, &err,
                                                 &l1);
  } else {
    if (s.power == 0)
      throw QuadratureError(moment_name(m) + " (divergent at the origin)", lo, hi,
                            std::numeric_limits<double>::infinity());
    static thread_local tanh_sinh<double> integrator;
    auto f = [&](double a) { return a > 0.0 ? weighted(a) * rho_factor(a) : 0.0; };
    std::size_t levels = 0;
    value = integrator.integrate(f, 0.0, hi, 1e-12, &err, &l1, &levels);
  }
  if (!std::isfinite(value) || !(err <= kAbsTol + 1e-11 * l1))
    throw QuadratureError(moment_name(m), lo, hi, err);
  return value;
}

double LevyModel::integrate_quadrature(Moment m, double lo, double hi) const {
  if (!(lo >= 0.0) || hi < lo) throw std::invalid_argument("levy: bad integration interval");
  hi = std::min(hi, e_max_);
  if (lo >= hi) return 0.0;
  const MomentShape s = shape(m);
  const double pos = side_quadrature(m, lo, hi, 1.0);
  const double neg = side_quadrature(m, lo, hi, -1.0);
  return s.odd ? pos - neg : pos + neg;
}

std::optional<double> LevyModel::side_closed_form(Moment m, double lo, double hi) const {
  const MomentShape s = shape(m);
  const double p = s.power;
  const double al = family_.alpha, la = family_.lambda;
  switch (family_.kind) {
    case LevyFamily::Kind::SymmetricStable:
      if (p == al) return al * std::log(hi / lo);
      if (lo == 0.0 && p < al) return std::nullopt;
      return al * (std::pow(hi, p - al) - std::pow(lo, p - al)) / (p - al);
    case LevyFamily::Kind::TemperedStable: {
      const double a = p - al;
      if (!(a > 0.0)) return std::nullopt;
      using boost::math::tgamma_lower;
      return al * std::pow(la, -a) * (tgamma_lower(a, la * hi) - tgamma_lower(a, la * lo));
    }
    case LevyFamily::Kind::ExponentialTails: {
      const double c = family_.c;
      if (s.power == 2)
        return c * ((1.0 + la * lo) * std::exp(-la * lo) - (1.0 + la * hi) * std::exp(-la * hi)) /
               (la * la);
      if (s.power == 1) return c * (std::exp(-la * lo) - std::exp(-la * hi)) / la;
      if (lo == 0.0) return std::nullopt;
      return c * (boost::math::expint(1, la * lo) - boost::math::expint(1, la * hi));
    }
  }
  return std::nullopt;
}

std::optional<double> LevyModel::integrate_closed_form(Moment m, double lo, double hi) const {
  hi = std::min(hi, e_max_);
  if (lo >= hi) return 0.0;
  const MomentShape s = shape(m);
  // Every rho offered is even, so odd kernels integrate to zero on symmetric nu.
  if (s.odd) return 0.0;
  if (s.rho_power > 0 && rho_.kind != RhoSpec::Kind::Constant) return std::nullopt;
  auto side = side_closed_form(m, lo, hi);
  if (!side) return std::nullopt;
  return 2.0 * *side * std::pow(rho_.scale, s.rho_power);
}

double LevyModel::integrate(Moment m, double lo, double hi) const {
  if (auto cf = integrate_closed_form(m, lo, hi)) return *cf;
  return integrate_quadrature(m, lo, hi);
}

TruncationView make_truncation(const LevyModel& model, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("make_truncation: eps must be positive");
  const double cut = std::min(eps, model.e_max());
  auto checked = [&](Moment m, double lo, double hi) {
    auto cf = model.integrate_closed_form(m, lo, hi);
    const bool quad_ok = !(lo == 0.0 && m == Moment::Mass);
    if (!quad_ok) return cf.value_or(std::numeric_limits<double>::infinity());
    const double q = model.integrate_quadrature(m, lo, hi);
    if (cf) {
      if (std::abs(*cf - q) > 1e-8 * std::max(1.0, std::abs(*cf)))
        throw std::logic_error("make_truncation: closed form and quadrature disagree for " +
                               moment_name(m));
      return *cf;
    }
    return q;
  };
  TruncationView v;
  v.eps = eps;
  v.total_m = model.second_moment();
  v.sigma_eps = std::sqrt(checked(Moment::Square, 0.0, cut));
  v.nu_big = checked(Moment::Mass, cut, model.e_max());
  v.m_big = checked(Moment::Square, cut, model.e_max());
  v.rho2_m_big = checked(Moment::Rho2Square, cut, model.e_max());
  v.rho2_nu_big = checked(Moment::Rho2, cut, model.e_max());
  v.rho_e_nu_big = checked(Moment::RhoMark, cut, model.e_max());
  v.rho_nu_big = checked(Moment::Rho, cut, model.e_max());
  v.rho_m_big = checked(Moment::RhoSquare, cut, model.e_max());
  v.e_nu_big = checked(Moment::Mark, cut, model.e_max());
  v.abs_e_nu_big = checked(Moment::AbsMark, cut, model.e_max());
  return v;
}

GammaConvention parse_gamma_convention(const std::string& s) {
  if (s == "mark_weighted") return GammaConvention::MarkWeighted;
  if (s == "unweighted") return GammaConvention::Unweighted;
  throw std::invalid_argument("unknown gamma convention '" + s + "'");
}

std::string to_string(GammaConvention c) {
  return c == GammaConvention::MarkWeighted ? "mark_weighted" : "unweighted";
}

Moment euler_jump_weight(GammaConvention c) {
  return c == GammaConvention::MarkWeighted ? Moment::RhoMark : Moment::Rho;
}

double gamma_kernel_mass(const TruncationView& view, GammaConvention c) {
  return c == GammaConvention::MarkWeighted ? view.rho_m_big : view.rho_e_nu_big;
}

double weight_quadratic_mass(const TruncationView& view, GammaConvention c) {
  return c == GammaConvention::MarkWeighted ? view.rho2_m_big : view.rho2_nu_big;
}

JumpSampler::JumpSampler(const LevyModel& model, double floor, int table_nodes) : floor_(floor) {
  if (!(floor > 0.0)) throw std::invalid_argument("JumpSampler: floor must be positive");
  if (table_nodes < 2) throw std::invalid_argument("JumpSampler: need at least 2 table nodes");
  if (floor >= model.e_max()) return;
  intensity_ = model.integrate(Moment::Mass, floor, model.e_max());
  const double l0 = std::log(floor), l1 = std::log(model.e_max());
  log_nodes_.resize(table_nodes);
  cdf_.assign(table_nodes, 0.0);
  for (int j = 0; j < table_nodes; ++j)
    log_nodes_[j] = l0 + (l1 - l0) * j / (table_nodes - 1);
  log_nodes_.back() = l1;
  // cells are narrow in log scale, where the integrand is smooth
  auto mass = [&model](double t) {
    const double a = std::exp(t);
    return 2.0 * model.density(a) * a;
  };
  for (int j = 1; j < table_nodes; ++j)
    cdf_[j] = cdf_[j - 1] + boost::math::quadrature::gauss<double, 7>::integrate(
                                mass, log_nodes_[j - 1], log_nodes_[j]);
  const double total = cdf_.back();
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

double JumpSampler::magnitude(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t j = it == cdf_.begin() ? 0 : static_cast<std::size_t>(it - cdf_.begin()) - 1;
  j = std::min(j, cdf_.size() - 2);
  const double width = cdf_[j + 1] - cdf_[j];
  const double w = width > 0.0 ? std::clamp((u - cdf_[j]) / width, 0.0, 1.0) : 0.0;
  return std::exp(log_nodes_[j] + w * (log_nodes_[j + 1] - log_nodes_[j]));
}

std::vector<JumpEvent> JumpSampler::sample(double horizon, const CounterStream& stream,
                                           std::uint64_t path) const {
  if (!(horizon > 0.0)) throw std::invalid_argument("sample_big_jumps: horizon must be positive");
  std::vector<JumpEvent> out;
  if (intensity_ <= 0.0) return out;
  double t = 0.0;
  for (std::uint64_t k = 0;; ++k) {
    const auto w = stream.block(path, k);
    t -= std::log(to_open_unit(w[0], w[1])) / intensity_;
    if (t > horizon) break;
    const double a = magnitude(to_open_unit(w[2], w[3]));
    const bool negative = (w[3] & 1u) != 0u;
    out.push_back({t, negative ? -a : a});
  }
  return out;
}

std::vector<JumpEvent> sample_big_jumps(const TruncationView& view, const LevyModel& model,
                                        double horizon, const CounterStream& stream,
                                        std::uint64_t path) {
  return JumpSampler(model, view.eps).sample(horizon, stream, path);
}

}  // namespace levyfbsde
