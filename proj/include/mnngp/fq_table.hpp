#pragma once

// Lookup table for the maxout expectation
//
//   F_q(rho) = E[max(h_1..h_q) * max(h'_1..h'_q)],
//
// where (h_i, h'_i) are iid standard bivariate normal pairs with correlation
// rho. Interior correlations are split by which coordinates attain the two
// maxima:
//
//   F_q = q * E[.. 1{I = I' = 1}] + q (q - 1) * E[.. 1{I = 1, I' = 2}],
//
// and each term is a 2-D integral evaluated on a uniform tensor grid.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnngp/execution.hpp"

namespace mnngp {

enum class QuadratureScheme {
  product,  ///< sum f(x_i, y_j) * spacing^2
  ratio,    ///< self-normalized sum f / sum weight (comparison only)
};

std::string_view to_string(QuadratureScheme scheme);
QuadratureScheme parse_scheme(std::string_view text);

/// n_grid equally spaced nodes covering [-r_max, r_max] inclusive.
class QuadratureGrid {
public:
  QuadratureGrid(double r_max, int n_grid);

  /// r_max = 100, n_grid = 501: the published lookup-table parameters.
  static QuadratureGrid published() { return {100.0, 501}; }
  /// r_max = 8, n_grid = 2001: recommended for product-rule accuracy.
  static QuadratureGrid high_accuracy() { return {8.0, 2001}; }

  double r_max() const noexcept { return r_max_; }
  int n_grid() const noexcept { return n_grid_; }
  double spacing() const noexcept { return 2.0 * r_max_ / (n_grid_ - 1); }

  /// Node i; exactly antisymmetric (node(i) == -node(n-1-i)).
  double node(int i) const noexcept {
    return r_max_ * static_cast<double>(2 * i - (n_grid_ - 1)) / (n_grid_ - 1);
  }
  std::vector<double> nodes() const;

private:
  double r_max_;
  int n_grid_;
};

struct FqTableMeta {
  double r_max = 0.0;
  int n_grid = 0;
  QuadratureScheme scheme = QuadratureScheme::product;
  int version = 1;
};

/// Immutable table {(rho_i, F_q(rho_i))} over a strictly increasing rho grid
/// from -1 to 1. Safe to share across threads.
class FqTable {
public:
  /// Validates the grid (endpoints, strict monotonicity, size) and finiteness;
  /// throws FormatError on violation.
  FqTable(int q, std::vector<double> rhos, std::vector<double> values, FqTableMeta meta);

  int q() const noexcept { return q_; }
  int n_rho() const noexcept { return static_cast<int>(rhos_.size()); }
  std::span<const double> rhos() const noexcept { return rhos_; }
  std::span<const double> values() const noexcept { return values_; }
  const FqTableMeta& meta() const noexcept { return meta_; }

  /// Piecewise-linear interpolation; exact at nodes. rho is clamped from the
  /// band [-1 - 1e-9, 1 + 1e-9]; anything outside throws DomainError.
  double interpolate(double rho) const;

  /// max_i |F(rho_i)| - F(1); positive values violate Cauchy-Schwarz.
  double cauchy_schwarz_excess() const;

private:
  int q_;
  std::vector<double> rhos_;
  std::vector<double> values_;
  FqTableMeta meta_;
};

inline constexpr double kInterpolationBand = 1e-9;

/// Uniform grid of n_rho correlations on [-1, 1]; exactly symmetric about 0.
std::vector<double> rho_grid(int n_rho);

/// Raw grid sums for the two argmax events, each already multiplied by the
/// cell area spacing^2. `*_moment` integrates x*y*weight, `*_mass` integrates
/// the weight alone (the event probability).
struct ArgmaxSums {
  double same_moment = 0.0;
  double same_mass = 0.0;
  double diff_moment = 0.0;
  double diff_mass = 0.0;
};

/// Fast evaluation: Phi_2 is accumulated along each grid row by composite
/// Simpson integration of phi(t) * Phi((x - rho t)/s), and the symmetric
/// integrands are summed over one triangle. Requires q >= 2, |rho| < 1.
ArgmaxSums argmax_sums(int q, double rho, const QuadratureGrid& grid);

/// E[max * max' * 1{I = I' = 1}] = int x y phi2(x, y) Phi2(x, y)^(q-1).
double term_same_argmax(int q, double rho, const QuadratureGrid& grid,
                        QuadratureScheme scheme = QuadratureScheme::product);

/// E[max * max' * 1{I = 1, I' = 2}]
///   = int x y phi(x) phi(y) Phi((x - rho y)/s) Phi((y - rho x)/s) Phi2^(q-2),
/// s = sqrt(1 - rho^2).
double term_diff_argmax(int q, double rho, const QuadratureGrid& grid,
                        QuadratureScheme scheme = QuadratureScheme::product);

/// F_q(rho) for |rho| < 1. q == 1 returns rho exactly.
double fq_interior(int q, double rho, const QuadratureGrid& grid,
                   QuadratureScheme scheme = QuadratureScheme::product);

/// F_q(1) = E[max^2] = q int x^2 phi(x) Phi(x)^(q-1) dx.
double fq_at_plus_one(int q, const QuadratureGrid& grid,
                      QuadratureScheme scheme = QuadratureScheme::product);

/// F_q(-1) = -E[max * min]
///   = -q (q - 1) int int_{x > y} x y phi(x) phi(y) (Phi(x) - Phi(y))^(q-2).
/// The product scheme reduces this to one-dimensional cumulative integrals;
/// the ratio scheme is a self-normalized sum over grid nodes with x > y.
double fq_at_minus_one(int q, const QuadratureGrid& grid,
                       QuadratureScheme scheme = QuadratureScheme::product);

/// F_q at any rho in [-1, 1], dispatching to the endpoint routines when rho is
/// within 10 machine epsilons of +-1.
double fq_value(int q, double rho, const QuadratureGrid& grid,
                QuadratureScheme scheme = QuadratureScheme::product);

FqTable build_table(int q, int n_rho, const QuadratureGrid& grid,
                    QuadratureScheme scheme = QuadratureScheme::product,
                    Execution exec = Execution::parallel);

/// (1/pi) (sin(theta) + (pi - theta) rho), theta = arccos(rho).
double closed_form_f2(double rho);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Brute-force Monte Carlo estimate of F_q(rho). Samples are drawn in fixed
/// chunks whose generators are seeded from (seed, chunk index), so serial and
/// parallel runs agree bit for bit.
McEstimate mc_oracle_fq(int q, double rho, std::int64_t n_samples, std::uint64_t seed,
                        Execution exec = Execution::parallel);

// Text format:
//   # mnngp-fq-table v1
//   # q=<int> n_rho=<int> r_max=<decimal> n_grid=<int> scheme=<product|ratio>
//   <rho>\t<value>     (n_rho rows, 17 significant digits)
void write_table(const FqTable& table, std::ostream& out);
FqTable read_table(std::istream& in, const std::string& source = "<stream>");
void save_table(const FqTable& table, const std::filesystem::path& path);
FqTable load_table(const std::filesystem::path& path);

namespace reference {

/// Serial reference for argmax_sums: full square grid, Phi_2 from
/// binormal_cdf at every node. Orders of magnitude slower; kept for testing.
ArgmaxSums argmax_sums(int q, double rho, const QuadratureGrid& grid);

/// Table built from reference::argmax_sums.
FqTable build_table(int q, int n_rho, const QuadratureGrid& grid,
                    QuadratureScheme scheme = QuadratureScheme::product);

}  // namespace reference

}  // namespace mnngp
