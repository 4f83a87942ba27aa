#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "levyfbsde/coefficients.hpp"

using namespace levyfbsde;

TEST_CASE("presets pass their own derivative checks") {
  for (const char* name : {"zero_f_identity_g", "linear_bsde", "lipschitz_smooth"}) {
    CAPTURE(name);
    const CoefficientSet c = make_preset(name);
    CHECK_NOTHROW(validate(c));
    CHECK(c.name == name);
  }
  for (const char* name : {"zero_f_identity_g", "linear_bsde"}) {
    const CoefficientSet c = make_preset(name);
    CHECK(c.g(0.3) == 0.3);
    CHECK(c.dg(-2.0) == 1.0);
  }
  CHECK_NOTHROW(validate(make_preset("lipschitz_smooth", {{"x_coupling", 0.7}, {"kappa", 2.0}})));
  CHECK_NOTHROW(validate(make_preset("linear_bsde", {{"f1", -1.0}, {"f2", 0.4}, {"f3", 2.0}, {"b_bar", 0.3}})));
}

TEST_CASE("unknown names and parameters throw") {
  CHECK_THROWS_AS(make_preset("quadratic"), std::invalid_argument);
  CHECK_THROWS_AS(preset_defaults("quadratic"), std::invalid_argument);
  CHECK_THROWS_WITH(make_preset("linear_bsde", {{"kappa", 1.0}}), doctest::Contains("kappa"));
  CHECK_THROWS(make_preset("linear_bsde", {{"f2", std::nan("")}}));
}

TEST_CASE("linear form matches f") {
  const CoefficientSet c = make_preset("linear_bsde", {{"f1", 0.2}, {"f2", -0.3}, {"f3", 0.5}});
  REQUIRE(c.linear);
  CHECK(c.x_free);
  for (double t : {0.0, 0.5})
    for (double y : {-1.0, 2.0})
      for (double g : {0.0, 0.7})
        CHECK(c.f(t, 3.0, y, g) == doctest::Approx(c.linear->f1(t) + c.linear->f2(t) * y + c.linear->f3(t) * g));
  CHECK(c.df_dgamma(0.0, 0.0, 0.0, 0.0) == 0.5);
  CHECK(c.df_dy(0.0, 0.0, 0.0, 0.0) == -0.3);
}

TEST_CASE("lipschitz preset is linear only without x coupling") {
  const CoefficientSet free = make_preset("lipschitz_smooth");
  CHECK(free.linear.has_value());
  CHECK(free.x_free);
  const CoefficientSet coupled = make_preset("lipschitz_smooth", {{"x_coupling", 0.5}});
  CHECK_FALSE(coupled.linear.has_value());
  CHECK_FALSE(coupled.x_free);
  CHECK(coupled.df_dx(0.0, 0.3, 0.0, 0.0) != 0.0);
}

TEST_CASE("validate catches inconsistent derivatives") {
  CoefficientSet c = make_preset("lipschitz_smooth");
  c.db = [](double) { return 0.0; };
  CHECK_THROWS_AS(validate(c), std::invalid_argument);

  c = make_preset("linear_bsde", {{"f3", 0.4}});
  c.df_dgamma = [](double, double, double, double) { return 0.0; };
  CHECK_THROWS_AS(validate(c), std::invalid_argument);

  c = make_preset("linear_bsde", {{"f2", 0.4}});
  c.linear->f2 = [](double) { return 0.5; };
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
}
