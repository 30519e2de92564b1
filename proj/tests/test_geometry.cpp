#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sfw/geometry.hpp"
#include "sfw/rng.hpp"

using namespace sfw;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("lmo examples") {
  const L1Ball<double> b3(3, 1.0);
  CHECK(lmo(b3, vec({3, -1, 2})).value == vec({-1, 0, 0}));
  CHECK(lmo(b3, vec({0, 0, 0})).value == vec({1, 0, 0}));
  const L1Ball<double> b2(2, 2.0);
  CHECK(lmo(b2, vec({0, -5})).value == vec({0, 2}));
}

TEST_CASE("lmo rejects dimension mismatch") {
  const L1Ball<double> b(3, 1.0);
  CHECK_THROWS_AS(lmo(b, vec({1, 2})), InputError);
}

TEST_CASE("ball construction and diameter") {
  CHECK_THROWS_AS(L1Ball<double>(0, 1.0), InputError);
  CHECK_THROWS_AS(L1Ball<double>(2, 0.0), InputError);
  CHECK(L1Ball<double>(4, 3.0, Norm::L1).diameter() == 6.0);
  CHECK(L1Ball<double>(4, 3.0, Norm::L2).diameter() == 6.0);
}

TEST_CASE("minimal_face examples") {
  const L1Ball<double> b3(3, 1.0);
  const Face f = minimal_face(b3, vec({0.5, -0.5, 0}));
  CHECK(f.j_plus == std::vector<Index>{0});
  CHECK(f.j_minus == std::vector<Index>{1});
  CHECK(f.j_zero == std::vector<Index>{2});
  CHECK(f.on_boundary);

  const L1Ball<double> b2(2, 1.0);
  CHECK_FALSE(minimal_face(b2, vec({0.2, 0})).on_boundary);
  const Face v = minimal_face(b2, vec({1, 0}));
  CHECK(v.j_plus == std::vector<Index>{0});
  CHECK(v.on_boundary);

  CHECK_THROWS_AS(minimal_face(b2, vec({0.7, 0.7})), InputError);
}

TEST_CASE("in_face_lmo examples") {
  const L1Ball<double> b(2, 1.0);
  const Face f = minimal_face(b, vec({0.5, -0.5}));
  CHECK(in_face_lmo(b, f, vec({2, -3})).value == vec({1, 0}));
  CHECK(in_face_lmo(b, f, vec({5, -1})).value == vec({0, -1}));
  const Face v = minimal_face(b, vec({1, 0}));
  CHECK(in_face_lmo(b, v, vec({-7, 3})).value == vec({1, 0}));
  CHECK_THROWS_AS(in_face_lmo(b, minimal_face(b, vec({0.2, 0})), vec({1, 1})), ContractError);
}

TEST_CASE("away_direction examples") {
  const L1Ball<double> b3(3, 1.0);
  const auto a = away_direction(b3, vec({0.5, -0.5, 0}), vec({1, -2, 0}));
  CHECK(a.accepted);
  CHECK(a.d == vec({0.5, 0.5, 0}));
  CHECK(vec({1, -2, 0}).dot(a.d) == doctest::Approx(-0.5));

  const L1Ball<double> b2(2, 1.0);
  const auto v = away_direction(b2, vec({1, 0}), vec({-1, 0}));
  CHECK_FALSE(v.accepted);
  CHECK(v.d == vec({0, 0}));

  const auto c = away_direction(b2, vec({0, 0}), vec({1, 0}));
  CHECK(c.accepted);
  CHECK(c.d == vec({-1, 0}));
}

TEST_CASE("max_feasible_step examples") {
  const L1Ball<double> b2(2, 1.0);
  CHECK(max_feasible_step(b2, vec({0.5, 0}), vec({1, 0}), false) == doctest::Approx(0.5));
  CHECK(max_feasible_step(b2, vec({0, 0}), vec({-1, 0}), false) == doctest::Approx(1.0));
  const L1Ball<double> b3(3, 1.0);
  CHECK(max_feasible_step(b3, vec({0.5, -0.5, 0}), vec({0.5, 0.5, 0}), true) == doctest::Approx(1.0));
  CHECK_THROWS_AS(max_feasible_step(b3, vec({0.5, -0.5, 0}), vec({0, 0, 0}), false), InputError);
  CHECK_THROWS_AS(max_feasible_step(b3, vec({0.5, -0.5, 0}), vec({0, 0, 1}), true), InputError);
}

TEST_CASE("max_feasible_step through several kinks") {
  // phi(a) = |1 - a| + |-0.5 + a| + |0.2 a|; radius 2.
  const L1Ball<double> b(3, 2.0);
  const VectorXd x = vec({1, -0.5, 0});
  const VectorXd d = vec({-1, 1, 0.2});
  const double a = max_feasible_step(b, x, d, false);
  CHECK((x + a * d).lpNorm<1>() == doctest::Approx(2.0).epsilon(1e-14));
  // Segments: 1.5 - 1.8a on [0, 0.5], 0.5 + 0.2a on [0.5, 1], 2.2a - 1.5 beyond.
  CHECK(a == doctest::Approx(3.5 / 2.2).epsilon(1e-14));
}

TEST_CASE("lmo matches vertex enumeration") {
  Rng rng(11);
  for (Index dim = 1; dim <= 8; ++dim) {
    const L1Ball<double> ball(dim, 0.5 + rng.uniform() * 3);
    for (int t = 0; t < 1000; ++t) {
      VectorXd g(dim);
      for (Index j = 0; j < dim; ++j) g[j] = rng.normal();
      if (t % 7 == 0) g[static_cast<Index>(rng.index(static_cast<std::uint64_t>(dim)))] = 0.0;
      const VectorXd expect = oracle::brute_lmo(ball.radius(), g);
      REQUIRE(lmo(ball, g).value == expect);
    }
  }
}

TEST_CASE("in_face_lmo matches face enumeration") {
  Rng rng(12);
  for (Index dim = 1; dim <= 8; ++dim) {
    const L1Ball<double> ball(dim, 1.0 + rng.uniform());
    for (int t = 0; t < 1000; ++t) {
      const VectorXd x = oracle::random_boundary_point(rng, dim, ball.radius());
      VectorXd c(dim);
      for (Index j = 0; j < dim; ++j) c[j] = rng.normal();
      const Face f = minimal_face(ball, x, 1e-12);
      REQUIRE(f.on_boundary);
      REQUIRE(in_face_lmo(ball, f, c).value == oracle::brute_in_face_lmo(ball.radius(), x, c));
    }
  }
}

TEST_CASE("max_feasible_step is maximal") {
  Rng rng(13);
  for (int t = 0; t < 2000; ++t) {
    const Index dim = 1 + static_cast<Index>(rng.index(8));
    const L1Ball<double> ball(dim, 1.0);
    VectorXd x(dim), d(dim);
    for (Index j = 0; j < dim; ++j) {
      x[j] = rng.uniform() < 0.3 ? 0.0 : rng.normal();
      d[j] = rng.normal();
    }
    x *= rng.uniform() / std::max(x.lpNorm<1>(), 1e-300);
    const double a = max_feasible_step(ball, x, d, false);
    REQUIRE(a >= 0.0);
    REQUIRE((x + a * d).lpNorm<1>() <= 1.0 + 1e-10);
    REQUIRE((x + (a + 1e-6) * d).lpNorm<1>() > 1.0);
    REQUIRE(a == doctest::Approx(oracle::bisect_step(1.0, x, d)).epsilon(1e-9));
  }
}

TEST_CASE("in-face step is maximal and keeps signed support") {
  Rng rng(14);
  int accepted = 0;
  for (int t = 0; t < 2000; ++t) {
    const Index dim = 1 + static_cast<Index>(rng.index(8));
    const L1Ball<double> ball(dim, 2.0);
    const VectorXd x = oracle::random_boundary_point(rng, dim, 2.0);
    VectorXd g(dim);
    for (Index j = 0; j < dim; ++j) g[j] = rng.normal();
    const auto away = away_direction(ball, x, g);
    if (!away.accepted) continue;
    ++accepted;
    REQUIRE(primal_norm(away.d, Norm::L2) <= ball.diameter());
    REQUIRE(g.dot(away.d) < 0.0);
    const double a = max_feasible_step(ball, x, away.d, true);
    REQUIRE(a > 0.0);
    for (double frac : {0.25, 0.5, 1.0}) {
      const VectorXd z = x + frac * a * away.d;
      REQUIRE(z.lpNorm<1>() <= 2.0 + 1e-10);
      REQUIRE(oracle::signed_support_subset(z, x, 1e-10));
    }
    const VectorXd beyond = x + (a + 1e-6) * away.d;
    REQUIRE((beyond.lpNorm<1>() > 2.0 || !oracle::signed_support_subset(beyond, x, 0.0)));
  }
  CHECK(accepted > 1000);
}

TEST_CASE("in-face step from a point just outside the sphere by round-off") {
  const Ball ball(4, 0.98342053829187881);
  const VectorXd x = vec({0, 0.98162258435159977, -0.0017979539402792064, 0});
  const VectorXd d = vec({0, -0.0017979539402790401, -0.0017979539402792064, 0});
  const auto lim = detail::feasible_step_limit(ball, x, d, true, 1e-12);
  CHECK(lim.blocking == 1);
  CHECK(lim.alpha == doctest::Approx(0.98162258435159977 / 0.0017979539402790401));
}

TEST_CASE("oracles reject non-finite input") {
  const Ball ball(2, 1.0);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(lmo(ball, vec({inf, 1})), InputError);
  CHECK_THROWS_AS(lmo(ball, vec({std::nan(""), std::nan("")})), InputError);
  const Face face = minimal_face(ball, vec({0.5, -0.5}));
  CHECK_THROWS_AS(in_face_lmo(ball, face, vec({std::nan(""), std::nan("")})), InputError);
}
