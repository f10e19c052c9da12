#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gpw/adam.hpp"
#include "gpw/error.hpp"

using namespace gpw;

namespace {

//! Scalar textbook Adam.
struct RefAdam {
  double lr, m = 0.0, v = 0.0;
  long t = 0;
  double step(double theta, double g) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    return theta - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

}  // namespace

TEST_SUITE("adam") {

TEST_CASE("zero gradient leaves parameters unchanged") {
  Adam adam;
  const auto g = adam.add_group("p", 4, 0.1);
  std::vector<double> p{1, 2, 3, 4}, z(4, 0.0);
  adam.step(g, p, z);
  CHECK(p == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("first step of a scalar") {
  Adam adam;
  const auto g = adam.add_group("p", 1, 1e-3);
  std::vector<double> p{0.0}, d{1.0};
  adam.step(g, p, d);
  CHECK(p[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("matches scalar reference over random steps") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Adam adam;
  const auto g = adam.add_group("p", 3, 1e-2);
  std::vector<double> p{0.1, -0.2, 0.3};
  std::vector<RefAdam> ref(3, RefAdam{1e-2});
  std::vector<double> rp = p;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> d{n(rng), n(rng), n(rng)};
    adam.step(g, p, d);
    for (int k = 0; k < 3; ++k) rp[k] = ref[k].step(rp[k], d[k]);
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(p[k] - rp[k]) < 1e-12);
  CHECK(adam.steps(g) == 100);
  for (double v : adam.second_moment(g)) CHECK(v >= 0.0);
}

TEST_CASE("reset reproduces a fresh state") {
  Adam a, b;
  const auto ga = a.add_group("p", 2, 0.05);
  const auto gb = b.add_group("p", 2, 0.05);
  std::vector<double> pa{1, 1}, pb{1, 1};
  a.step(ga, pa, std::vector<double>{0.3, -2.0});
  a.reset();
  CHECK(a.steps(ga) == 0);
  CHECK(a.learning_rate(ga) == 0.05);
  pa = {1, 1};
  a.step(ga, pa, std::vector<double>{0.7, 0.1});
  b.step(gb, pb, std::vector<double>{0.7, 0.1});
  CHECK(pa == pb);

  Adam c;
  const auto gc = c.add_group("p", 2, 0.05);
  c.reset();
  std::vector<double> pc{1, 1};
  c.step(gc, pc, std::vector<double>{0.7, 0.1});
  CHECK(pc == pb);
}

TEST_CASE("interleaved reset and step sequence matches reference") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Adam adam;
  const auto g = adam.add_group("p", 1, 1e-3);
  std::vector<double> p{0.5};
  RefAdam ref{1e-3};
  double rp = 0.5;
  for (int i = 0; i < 60; ++i) {
    if (i % 7 == 3) {
      adam.reset();
      ref = RefAdam{1e-3};
    }
    const double d = n(rng);
    adam.step(g, p, std::vector<double>{d});
    rp = ref.step(rp, d);
  }
  CHECK(std::abs(p[0] - rp) < 1e-12);
}

TEST_CASE("per-step displacement is bounded") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  Adam adam;
  const double lr = 1e-3;
  const auto g = adam.add_group("p", 50, lr);
  std::vector<double> p(50, 0.0), d(50);
  for (int i = 0; i < 200; ++i) {
    for (double& x : d) x = u(rng);
    const std::vector<double> before = p;
    adam.step(g, p, d);
    for (int k = 0; k < 50; ++k) CHECK(std::abs(p[k] - before[k]) <= 3 * lr);
  }
}

TEST_CASE("groups are independent and mismatches throw") {
  Adam adam;
  const auto a = adam.add_group("a", 2, 0.1);
  const auto b = adam.add_group("b", 3, 0.2);
  CHECK(adam.group_index("b") == b);
  CHECK(adam.group_count() == 2);
  std::vector<double> pa(2, 0.0), pb(3, 0.0);
  adam.step(a, pa, std::vector<double>{1, 1});
  CHECK(adam.steps(a) == 1);
  CHECK(adam.steps(b) == 0);
  CHECK_THROWS_AS(adam.step(b, pa, std::vector<double>{1, 1}), Error);
  CHECK_THROWS_AS(adam.step(a, pa, std::vector<double>{1, 1, 1}), Error);
}

TEST_CASE("remap_group keeps moments of surviving rows") {
  Adam adam;
  const auto g = adam.add_group("p", 6, 0.1);
  std::vector<double> p(6, 0.0);
  adam.step(g, p, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<double> m(adam.first_moment(g).begin(), adam.first_moment(g).end());
  const std::vector<long> source{2, -1, 0};
  adam.remap_group(g, 2, source);
  REQUIRE(adam.group_size(g) == 6);
  const auto nm = adam.first_moment(g);
  CHECK(nm[0] == m[4]);
  CHECK(nm[1] == m[5]);
  CHECK(nm[2] == 0.0);
  CHECK(nm[4] == m[0]);
}

}  // TEST_SUITE
