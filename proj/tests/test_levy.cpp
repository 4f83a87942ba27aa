#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "levyfbsde/levy.hpp"

using namespace levyfbsde;
using doctest::Approx;

// Reference values from 30-digit adaptive quadrature of the densities.
TEST_CASE("truncation against high precision quadrature") {
  SUBCASE("stable alpha 0.5, eps 0.1") {
    const LevyModel m(LevyFamily::symmetric_stable(0.5));
    const TruncationView v = make_truncation(m, 0.1);
    CHECK(v.sigma2() == Approx(0.021081851067789196).epsilon(1e-12));
    CHECK(v.nu_big == Approx(4.3245553203367587).epsilon(1e-12));
    CHECK(v.m_big == Approx(0.64558481559887747).epsilon(1e-12));
  }
  SUBCASE("tempered alpha 1.3 lambda 2, eps 0.2") {
    const LevyModel m(LevyFamily::tempered_stable(1.3, 2.0));
    const TruncationView v = make_truncation(m, 0.2);
    CHECK(v.sigma2() == Approx(1.0283441448211242).epsilon(1e-10));
    CHECK(v.nu_big == Approx(7.0486101251898417).epsilon(1e-10));
    CHECK(v.m_big == Approx(0.89076054569304543).epsilon(1e-10));
    CHECK(v.abs_e_nu_big == Approx(2.3037984796888641).epsilon(1e-10));
  }
  SUBCASE("exponential tails lambda 1.5, eps 0.05") {
    const LevyModel m(LevyFamily::exponential_tails(1.5, 1.0));
    const TruncationView v = make_truncation(m, 0.05);
    CHECK(v.sigma2() == Approx(0.0023784463971605697).epsilon(1e-10));
    CHECK(v.nu_big == Approx(3.973297559924144).epsilon(1e-10));
    CHECK(v.abs_e_nu_big == Approx(0.93948443490683075).epsilon(1e-10));
  }
  SUBCASE("cosine rho on stable alpha 0.8, eps 0.1") {
    const LevyModel m(LevyFamily::symmetric_stable(0.8), RhoSpec::cosine(0.5, 3.0));
    const TruncationView v = make_truncation(m, 0.1);
    CHECK(v.rho2_m_big == Approx(0.13140341479905285).epsilon(1e-9));
    CHECK(v.rho_m_big == Approx(-0.079907846411377435).epsilon(1e-9));
    CHECK(v.rho_nu_big == Approx(3.2030514302288413).epsilon(1e-9));
    CHECK(v.e_nu_big == 0.0);
    CHECK(v.rho_e_nu_big == 0.0);
  }
}

TEST_CASE("measure split identity on random models") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 60; ++k) {
    const LevyFamily f = k % 3 == 0   ? LevyFamily::symmetric_stable(0.05 + 1.9 * u(gen))
                         : k % 3 == 1 ? LevyFamily::tempered_stable(0.05 + 1.9 * u(gen), 5 * u(gen) + 0.1)
                                      : LevyFamily::exponential_tails(5 * u(gen) + 0.1, 2 * u(gen) + 0.1);
    const LevyModel m(f, RhoSpec{}, 2.0, 0.3 + 2 * u(gen));
    const double eps = m.e_max() * std::pow(10.0, -4 * u(gen));
    const TruncationView v = make_truncation(m, eps);
    CAPTURE(f.name());
    CAPTURE(eps);
    CHECK(std::abs(v.sigma2() + v.m_big - m.second_moment()) <= 1e-10 * m.second_moment());
  }
}

TEST_CASE("closed forms agree with quadrature") {
  const Moment moments[] = {Moment::Mass, Moment::AbsMark, Moment::Square, Moment::Rho,
                            Moment::RhoSquare, Moment::Rho2Square};
  for (const LevyFamily& f : {LevyFamily::symmetric_stable(0.7), LevyFamily::symmetric_stable(1.0),
                              LevyFamily::tempered_stable(1.5, 3.0),
                              LevyFamily::exponential_tails(2.0, 0.7)}) {
    const LevyModel m(f, RhoSpec::constant(0.6));
    for (Moment mo : moments) {
      const auto cf = m.integrate_closed_form(mo, 0.03, 0.9);
      if (!cf) continue;
      CAPTURE(f.name());
      CAPTURE(moment_name(mo));
      CHECK(*cf == Approx(m.integrate_quadrature(mo, 0.03, 0.9)).epsilon(1e-10));
    }
  }
}

TEST_CASE("full truncation leaves no big jumps") {
  for (const LevyFamily& f : {LevyFamily::symmetric_stable(1.4), LevyFamily::exponential_tails(1.0, 1.0)}) {
    const LevyModel m(f);
    const TruncationView v = make_truncation(m, m.e_max());
    CHECK(v.nu_big == 0.0);
    CHECK(v.sigma2() == Approx(m.second_moment()).epsilon(1e-14));
    const CounterStream s(1, StreamTag::Jumps);
    CHECK(sample_big_jumps(v, m, 1.0, s, 0).empty());
  }
  // a cutoff beyond the support is clamped
  const LevyModel m(LevyFamily::symmetric_stable(1.0));
  CHECK(make_truncation(m, 5.0).nu_big == 0.0);
}

TEST_CASE("bad inputs") {
  CHECK_THROWS(LevyModel(LevyFamily::symmetric_stable(2.0)));
  CHECK_THROWS(LevyModel(LevyFamily::tempered_stable(1.0, -1.0)));
  CHECK_THROWS(LevyModel(LevyFamily::symmetric_stable(1.0), RhoSpec::constant(3.0), 2.0));
  const LevyModel m(LevyFamily::symmetric_stable(1.0));
  CHECK_THROWS(make_truncation(m, 0.0));
  CHECK_THROWS_AS(m.integrate_quadrature(Moment::Mass, 0.0, 1.0), QuadratureError);
}

TEST_CASE("gamma convention names") {
  CHECK(parse_gamma_convention("mark_weighted") == GammaConvention::MarkWeighted);
  CHECK(parse_gamma_convention("unweighted") == GammaConvention::Unweighted);
  CHECK_THROWS(parse_gamma_convention("other"));
  const LevyModel m(LevyFamily::symmetric_stable(0.8), RhoSpec::constant(0.5));
  const TruncationView v = make_truncation(m, 0.1);
  CHECK(gamma_kernel_mass(v, GammaConvention::MarkWeighted) == Approx(0.5 * v.m_big));
  CHECK(gamma_kernel_mass(v, GammaConvention::Unweighted) == Approx(v.rho_e_nu_big));
}

TEST_CASE("jump sampler") {
  const LevyModel m(LevyFamily::tempered_stable(0.9, 1.0));
  const double floor = 0.05;
  const JumpSampler js(m, floor);
  CHECK(js.intensity() == Approx(m.integrate(Moment::Mass, floor, 1.0)).epsilon(1e-12));

  SUBCASE("inverse CDF matches the measure") {
    for (double u : {0.01, 0.2, 0.5, 0.77, 0.99}) {
      const double a = js.magnitude(u);
      CHECK(m.integrate(Moment::Mass, floor, a) / js.intensity() == Approx(u).epsilon(1e-6));
    }
    CHECK(js.magnitude(1e-12) >= floor);
    CHECK(js.magnitude(1.0 - 1e-12) <= 1.0);
  }
  SUBCASE("counts, order and signs") {
    const CounterStream s(77, StreamTag::Jumps);
    const int paths = 20000;
    const double horizon = 0.5;
    double count = 0, count2 = 0, positive = 0, abs_sum = 0;
    for (int p = 0; p < paths; ++p) {
      const auto ev = js.sample(horizon, s, p);
      REQUIRE(std::is_sorted(ev.begin(), ev.end(), [](auto& a, auto& b) { return a.time < b.time; }));
      for (const auto& e : ev) {
        REQUIRE(std::abs(e.mark) > floor);
        REQUIRE(std::abs(e.mark) <= 1.0);
        REQUIRE(e.time > 0.0);
        REQUIRE(e.time <= horizon);
        positive += e.mark > 0;
        abs_sum += std::abs(e.mark);
      }
      count += ev.size();
      count2 += double(ev.size()) * ev.size();
    }
    const double lam = js.intensity() * horizon;
    const double mean = count / paths, var = count2 / paths - mean * mean;
    CHECK(std::abs(mean - lam) < 5 * std::sqrt(lam / paths));
    CHECK(var == Approx(lam).epsilon(0.05));  // Poisson dispersion
    CHECK(std::abs(positive / count - 0.5) < 5 * 0.5 / std::sqrt(count));
    const double mean_abs = m.integrate(Moment::AbsMark, floor, 1.0) / js.intensity();
    CHECK(abs_sum / count == Approx(mean_abs).epsilon(0.01));
  }
}
