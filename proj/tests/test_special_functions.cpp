#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "mnngp/errors.hpp"
#include "mnngp/special_functions.hpp"

using namespace mnngp;

namespace {

struct Phi2Case {
  double x, y, rho, expected;
};

// 40-digit quadrature values from tests/oracles/binormal_oracle.py.
const std::vector<Phi2Case> kPhi2Oracle = {
    {0, 0, 0.5, 0.33333333333333333333},
    {1.2, -0.3, 0.3, 0.35895076313179783477},
    {-1.5, 0.7, -0.6, 0.019372920128727255952},
    {0.4, 0.9, 0.8, 0.63002530405823932172},
    {-2.0, -1.0, 0.95, 0.022741532912507395639},
    {1.0, 1.5, -0.97, 0.77453754479968488258},
    {-0.5, 2.5, 0.999, 0.30853753872598689636},
    {3.0, -3.0, -0.999, 0.000079016978019567968345},
    {-4.0, -4.5, 0.5, 9.994808687287913609e-8},
    {2.2, 2.1, 0.9999, 0.98213557943718338854},
    {0.1, -0.2, -0.2, 0.19581811793937645162},
    {-6.0, 1.0, 0.7, 9.8658764503762333224e-10},
};

}  // namespace

TEST_CASE("std_normal_pdf reference values") {
  CHECK(std_normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(std::abs(std_normal_pdf(1.0) - 0.24197072451914337) < 1e-16);
  CHECK(std_normal_pdf(-3.0) == std_normal_pdf(3.0));
  CHECK(std_normal_pdf(40.0) >= 0.0);
}

TEST_CASE("std_normal_cdf reference values and tails") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std::abs(std_normal_cdf(1.96) - 0.9750021048517795) < 1e-14);
  CHECK(std::abs(std_normal_cdf(-8.0) - 6.2209605742717841235e-16) < 1e-14);
  const double tail = std_normal_cdf(-40.0);
  CHECK(tail >= 0.0);
  CHECK(tail <= 1e-300);
}

TEST_CASE("std_normal_cdf reflection and monotonicity") {
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    CHECK(std::abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-15);
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> xs(2000);
  for (auto& x : xs) x = u(rng);
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 1; i < xs.size(); ++i) {
    CHECK(std_normal_cdf(xs[i - 1]) <= std_normal_cdf(xs[i]));
  }
}

TEST_CASE("binormal_pdf") {
  CHECK(binormal_pdf(0, 0, 0) == doctest::Approx(0.15915494309189535).epsilon(1e-15));
  CHECK(binormal_pdf(0, 0, 0.5) ==
        doctest::Approx(1.0 / (2.0 * std::numbers::pi * std::sqrt(0.75))).epsilon(1e-14));
  CHECK(std::abs(binormal_pdf(0, 0, 0.5) - 0.18377629847) < 1e-11);
  for (double x : {-2.0, -0.3, 1.7}) {
    for (double y : {-1.1, 0.0, 2.4}) {
      CHECK(binormal_pdf(x, y, 0.0) ==
            doctest::Approx(std_normal_pdf(x) * std_normal_pdf(y)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(binormal_pdf(0, 0, 1.0), DomainError);
  CHECK_THROWS_AS(binormal_pdf(0, 0, -1.0), DomainError);
}

TEST_CASE("binormal_cdf matches the arbitrary-precision oracle") {
  for (const auto& c : kPhi2Oracle) {
    CAPTURE(c.x);
    CAPTURE(c.y);
    CAPTURE(c.rho);
    CHECK(std::abs(binormal_cdf(c.x, c.y, c.rho) - c.expected) <= 1e-10);
  }
}

TEST_CASE("binormal_cdf special values and degenerate limits") {
  CHECK(binormal_cdf(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(binormal_cdf(0, 0, 0.5) - 1.0 / 3.0) <= 1e-12);
  CHECK(binormal_cdf(1.2, -0.3, 1.0) == std_normal_cdf(-0.3));
  CHECK(binormal_cdf(1.2, -0.3, -1.0) ==
        std::max(0.0, std_normal_cdf(1.2) - std_normal_cdf(0.3)));
  CHECK(binormal_cdf(-1.0, -2.0, -1.0) == 0.0);
  // Snapping band.
  CHECK(binormal_cdf(0.3, 0.1, 1.0 + 5e-13) == std_normal_cdf(0.1));
  CHECK(binormal_cdf(0.3, 0.1, 1.0 - 5e-13) == std_normal_cdf(0.1));
  CHECK_THROWS_AS(binormal_cdf(0, 0, 1.0 + 1e-9), DomainError);
  CHECK_THROWS_AS(binormal_cdf(0, 0, -1.0 - 1e-9), DomainError);
}

TEST_CASE("binormal_cdf marginals, diagonal identity and factorization") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-5.0, 5.0);
  std::uniform_real_distribution<double> ur(-0.999, 0.999);
  for (int i = 0; i < 500; ++i) {
    const double x = ux(rng);
    const double rho = ur(rng);
    CHECK(std::abs(binormal_cdf(x, 38.0, rho) - std_normal_cdf(x)) <= 1e-10);
    const double y = ux(rng);
    CHECK(std::abs(binormal_cdf(x, y, 0.0) - std_normal_cdf(x) * std_normal_cdf(y)) <= 1e-12);
  }
  for (double rho : {-0.99, -0.5, 0.0, 0.5, 0.99}) {
    const double expected = 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
    CHECK(std::abs(binormal_cdf(0, 0, rho) - expected) <= 1e-10);
  }
  double prev = -1.0;
  for (int i = 0; i <= 2000; ++i) {
    const double rho = -1.0 + 2.0 * i / 2000.0;
    const double v = binormal_cdf(0, 0, rho);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("binormal_cdf against the one-dimensional integral representation") {
  // Phi2(x, y) = int_{-inf}^{y} phi(t) Phi((x - rho t)/s) dt, fine Simpson rule.
  auto integral = [](double x, double y, double rho) {
    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    const double lo = -12.0;
    const int n = 200000;
    const double h = (y - lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = lo + i * h;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * std_normal_pdf(t) * std_normal_cdf((x - rho * t) / s);
    }
    return acc * h / 3.0;
  };
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(-3.0, 3.0);
  std::uniform_real_distribution<double> ur(-0.98, 0.98);
  for (int i = 0; i < 20; ++i) {
    const double x = ux(rng), y = ux(rng), rho = ur(rng);
    CHECK(std::abs(binormal_cdf(x, y, rho) - integral(x, y, rho)) <= 1e-10);
  }
}

TEST_CASE("fast_normal_cdf agrees with the erfc route") {
  double worst = 0.0;
  for (double z = -12.0; z <= 12.0; z += 1e-4) {
    worst = std::max(worst, std::abs(fast_normal_cdf(z) - std_normal_cdf(z)));
  }
  CHECK(worst <= 1e-14);
  CHECK(fast_normal_cdf(-50.0) == 0.0);
  CHECK(fast_normal_cdf(50.0) == 1.0);
  CHECK(fast_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
}
