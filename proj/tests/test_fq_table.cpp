#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mnngp/errors.hpp"
#include "mnngp/fq_table.hpp"

using namespace mnngp;

namespace {

// Moderate grid: fast enough for unit tests, accurate to ~1e-9 for q <= 4.
const QuadratureGrid kGrid(8.0, 801);

struct FqOracle {
  int q;
  double rho;
  double value;
};

// From tests/oracles/fq_oracle.py (Hoeffding identity + Owen's T; mpmath endpoints).
const FqOracle kFqOracle[] = {
#include "oracles/fq_oracle_values.inc"
};

std::string table_text(const FqTable& t) {
  std::ostringstream out;
  write_table(t, out);
  return out.str();
}

FqTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_table(in, "mem");
}

}  // namespace

TEST_CASE("closed_form_f2 special values") {
  CHECK(closed_form_f2(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(closed_form_f2(0.0) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-15));
  CHECK(std::abs(closed_form_f2(-1.0)) < 1e-15);
  CHECK(closed_form_f2(0.5) == doctest::Approx(0.6089977810442).epsilon(1e-12));
  CHECK_THROWS_AS(closed_form_f2(1.5), DomainError);
}

TEST_CASE("quadrature grid geometry") {
  const QuadratureGrid g(8.0, 2001);
  CHECK(g.spacing() == doctest::Approx(0.008));
  CHECK(g.node(0) == -8.0);
  CHECK(g.node(2000) == 8.0);
  CHECK(g.node(1000) == 0.0);
  for (int i = 0; i < 2001; ++i) CHECK(g.node(i) == -g.node(2000 - i));
  CHECK(QuadratureGrid::published().spacing() == doctest::Approx(0.4));
  CHECK_THROWS_AS(QuadratureGrid(8.0, 2), UsageError);
  CHECK_THROWS_AS(QuadratureGrid(0.0, 11), UsageError);
  CHECK_THROWS_AS(parse_scheme("simpson"), UsageError);
  CHECK(parse_scheme("ratio") == QuadratureScheme::ratio);
}

TEST_CASE("q = 2 interior values against the closed form") {
  for (double rho : {-0.95, -0.5, 0.0, 0.123, 0.5, 0.9, 0.99}) {
    CAPTURE(rho);
    CHECK(std::abs(fq_interior(2, rho, kGrid) - closed_form_f2(rho)) <= 1e-6);
  }
  CHECK(std::abs(fq_interior(2, 0.5, kGrid) - 0.6090) <= 1e-3);
  CHECK(std::abs(fq_interior(2, 0.0, kGrid) - 1.0 / std::numbers::pi) <= 1e-3);
}

TEST_CASE("argmax terms recombine into the q = 2 closed form") {
  const double same = term_same_argmax(2, 0.0, kGrid);
  const double diff = term_diff_argmax(2, 0.0, kGrid);
  CHECK(std::abs(2.0 * same + 2.0 * diff - 1.0 / std::numbers::pi) <= 1e-6);

  const double near = 2.0 * term_same_argmax(2, 0.999, kGrid) + 2.0 * term_diff_argmax(2, 0.999, kGrid);
  CHECK(std::abs(near - closed_form_f2(0.999)) <= 1e-4);
}

TEST_CASE("argmax event masses are probabilities") {
  // rho = 0, q = 2: P(I = I' = 1) = P(I = 1, I' = 2) = 1/4.
  const ArgmaxSums s = argmax_sums(2, 0.0, kGrid);
  CHECK(std::abs(s.same_mass - 0.25) <= 1e-9);
  CHECK(std::abs(s.diff_mass - 0.25) <= 1e-9);
  for (int q : {2, 3, 4}) {
    for (double rho : {-0.7, 0.3, 0.95}) {
      const ArgmaxSums t = argmax_sums(q, rho, kGrid);
      CAPTURE(q);
      CAPTURE(rho);
      CHECK(t.same_mass > 0.0);
      CHECK(t.same_mass < 1.0);
      CHECK(t.diff_mass > 0.0);
      CHECK(t.diff_mass < 0.5);
      // Argmax events partition the sample space.
      CHECK(std::abs(q * t.same_mass + q * (q - 1) * t.diff_mass - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("endpoints") {
  CHECK(fq_at_plus_one(1, kGrid) == 1.0);
  CHECK(fq_at_minus_one(1, kGrid) == -1.0);
  CHECK(std::abs(fq_at_plus_one(2, kGrid) - 1.0) <= 1e-4);
  CHECK(std::abs(fq_at_minus_one(2, kGrid)) <= 1e-4);
  for (const auto& o : kFqOracle) {
    if (o.rho == 1.0) CHECK(std::abs(fq_at_plus_one(o.q, kGrid) - o.value) <= 1e-8);
    if (o.rho == -1.0) CHECK(std::abs(fq_at_minus_one(o.q, kGrid) - o.value) <= 1e-8);
  }
  CHECK(fq_value(3, 1.0, kGrid) == fq_at_plus_one(3, kGrid));
  CHECK(fq_value(3, -1.0, kGrid) == fq_at_minus_one(3, kGrid));
  CHECK_THROWS_AS(fq_value(3, 1.01, kGrid), DomainError);
}

TEST_CASE("q = 3, 4 values against the independent quadrature oracle") {
  for (const auto& o : kFqOracle) {
    CAPTURE(o.q);
    CAPTURE(o.rho);
    CHECK(std::abs(fq_value(o.q, o.rho, kGrid) - o.value) <= 1e-7);
  }
}

TEST_CASE("q = 1 is the identity") {
  CHECK(fq_interior(1, 0.37, kGrid) == 0.37);
  const FqTable t = build_table(1, 101, kGrid);
  for (int i = 0; i < t.n_rho(); ++i) CHECK(t.values()[i] == t.rhos()[i]);
}

TEST_CASE("argument validation") {
  CHECK_THROWS_AS(fq_interior(0, 0.1, kGrid), UsageError);
  CHECK_THROWS_AS(fq_interior(2, 1.0, kGrid), DomainError);
  CHECK_THROWS_AS(argmax_sums(1, 0.0, kGrid), UsageError);
  CHECK_THROWS_AS(build_table(2, 2, kGrid), UsageError);
}

TEST_CASE("fast sums match the reference implementation") {
  const QuadratureGrid g(6.0, 121);
  for (int q : {2, 3, 4}) {
    for (double rho : {-0.9, -0.2, 0.3, 0.95}) {
      const ArgmaxSums a = argmax_sums(q, rho, g);
      const ArgmaxSums b = reference::argmax_sums(q, rho, g);
      CAPTURE(q);
      CAPTURE(rho);
      CHECK(std::abs(a.same_moment - b.same_moment) <= 1e-9);
      CHECK(std::abs(a.same_mass - b.same_mass) <= 1e-9);
      CHECK(std::abs(a.diff_moment - b.diff_moment) <= 1e-9);
      CHECK(std::abs(a.diff_mass - b.diff_mass) <= 1e-9);
    }
  }
  const FqTable fast = build_table(3, 11, g, QuadratureScheme::product, Execution::serial);
  const FqTable ref = reference::build_table(3, 11, g);
  for (int i = 0; i < fast.n_rho(); ++i) CHECK(std::abs(fast.values()[i] - ref.values()[i]) <= 1e-9);
}

TEST_CASE("serial and parallel builds are bit-identical") {
  const FqTable a = build_table(3, 41, kGrid, QuadratureScheme::product, Execution::serial);
  const FqTable b = build_table(3, 41, kGrid, QuadratureScheme::product, Execution::parallel);
  for (int i = 0; i < a.n_rho(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("table invariants: Cauchy-Schwarz, monotonicity, symmetric grid") {
  for (int q : {2, 3, 4}) {
    const FqTable t = build_table(q, 101, kGrid);
    CAPTURE(q);
    CHECK(t.cauchy_schwarz_excess() <= 1e-6);
    const double tol = q == 2 ? 0.0 : 1e-4;
    for (int i = 1; i < t.n_rho(); ++i) CHECK(t.values()[i] >= t.values()[i - 1] - tol);
    for (int i = 0; i < t.n_rho(); ++i) CHECK(t.rhos()[i] == -t.rhos()[t.n_rho() - 1 - i]);
    CHECK(t.rhos().front() == -1.0);
    CHECK(t.rhos().back() == 1.0);
  }
}

TEST_CASE("interpolation") {
  const FqTable t = build_table(2, 201, kGrid);
  for (int k = 0; k < t.n_rho(); ++k) CHECK(t.interpolate(t.rhos()[k]) == t.values()[k]);
  for (int k = 0; k + 1 < t.n_rho(); k += 7) {
    const double mid = 0.5 * (t.rhos()[k] + t.rhos()[k + 1]);
    CHECK(t.interpolate(mid) == doctest::Approx(0.5 * (t.values()[k] + t.values()[k + 1])).epsilon(1e-14));
  }
  CHECK(std::abs(t.interpolate(0.123) - closed_form_f2(0.123)) <= 1e-3);
  CHECK(t.interpolate(1.0 + 5e-10) == t.values().back());
  CHECK(t.interpolate(-1.0 - 5e-10) == t.values().front());
  CHECK_THROWS_AS(t.interpolate(1.0 + 1e-8), DomainError);
  CHECK_THROWS_AS(t.interpolate(std::nan("")), DomainError);
}

TEST_CASE("doubling n_rho barely moves interpolated values") {
  const QuadratureGrid g(8.0, 401);
  for (int q : {2, 3, 4}) {
    const FqTable coarse = build_table(q, 501, g);
    const FqTable fine = build_table(q, 1001, g);
    std::mt19937_64 rng(42 + q);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double rho = u(rng);
      worst = std::max(worst, std::abs(coarse.interpolate(rho) - fine.interpolate(rho)));
    }
    CAPTURE(q);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("ratio scheme") {
  // At rho = 1 the self-normalized sum loses the event probability 1/q.
  const double ratio_plus = fq_at_plus_one(3, kGrid, QuadratureScheme::ratio);
  CHECK(std::abs(ratio_plus - 3.0 * fq_at_plus_one(3, kGrid)) <= 1e-8);
  // For q = 2 the interior ratio form is biased away from the closed form.
  const double r = fq_interior(2, 0.5, kGrid, QuadratureScheme::ratio);
  CHECK(std::isfinite(r));
  CHECK(std::abs(r - closed_form_f2(0.5)) > 1e-2);
  const FqTable t = build_table(2, 11, kGrid, QuadratureScheme::ratio);
  CHECK(t.meta().scheme == QuadratureScheme::ratio);
}

TEST_CASE("Monte Carlo oracle") {
  const McEstimate a = mc_oracle_fq(2, 0.5, 1'000'000, 7);
  CHECK(std::abs(a.estimate - closed_form_f2(0.5)) <= 3.0 * a.std_error);
  const McEstimate b = mc_oracle_fq(1, -0.3, 200'000, 8);
  CHECK(std::abs(b.estimate + 0.3) <= 3.0 * b.std_error);
  const McEstimate c = mc_oracle_fq(3, 0.5, 300'000, 9, Execution::serial);
  const McEstimate d = mc_oracle_fq(3, 0.5, 300'000, 9, Execution::parallel);
  CHECK(c.estimate == d.estimate);
  CHECK(c.std_error == d.std_error);
  CHECK_THROWS_AS(mc_oracle_fq(2, 0.0, 100, 1), UsageError);
  // q = 4, rho = 0: max and max' independent, F = E[max]^2.
  double mean_max4 = 0.0;
  for (const auto& o : kFqOracle) {
    if (o.q == 4 && o.rho == 0.0) mean_max4 = o.value;
  }
  const McEstimate e = mc_oracle_fq(4, 0.0, 1'000'000, 10);
  CHECK(std::abs(e.estimate - mean_max4) <= 3.0 * e.std_error);
}

TEST_CASE("table text round trip is bit-exact") {
  const FqTable t = build_table(3, 51, kGrid);
  const FqTable back = parse(table_text(t));
  CHECK(back.q() == 3);
  CHECK(back.meta().r_max == 8.0);
  CHECK(back.meta().n_grid == 801);
  for (int i = 0; i < t.n_rho(); ++i) {
    CHECK(back.rhos()[i] == t.rhos()[i]);
    CHECK(back.values()[i] == t.values()[i]);
  }
}

TEST_CASE("table loader rejects malformed input") {
  const std::string good = table_text(build_table(1, 5, kGrid));
  auto mutate = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(parse(mutate("v1", "v2")), FormatError);
  CHECK_THROWS_AS(parse(mutate("n_rho=5", "n_rho=6")), FormatError);
  CHECK_THROWS_AS(parse(mutate(" scheme=product", "")), FormatError);
  CHECK_THROWS_AS(parse(mutate("scheme=product", "scheme=gauss")), FormatError);
  CHECK_THROWS_AS(parse(mutate("0.0000000000000000e+00\t0", "nan\t0")), FormatError);
  CHECK_THROWS_AS(parse(mutate("-5.0000000000000000e-01\t", "-5.0000000000000000e-0x\t")), FormatError);
  CHECK_THROWS_AS(parse(mutate("5.0000000000000000e-01\t5", "-6.0000000000000000e-01\t5")), FormatError);
  try {
    parse(mutate("n_rho=5", "n_rho=6"));
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("mem:") == 0);
  }
  CHECK_THROWS_AS(FqTable(2, {-1.0, 0.0, 1.0}, {0.0, 0.3, -1.0}, {}), FormatError);
  CHECK_THROWS_AS(FqTable(2, {-1.0, 0.5}, {0.0, 1.0}, {}), FormatError);
}
