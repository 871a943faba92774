#pragma once

// Pieces shared by the fast and reference table builders.

#include <utility>
#include <vector>

#include "mnngp/fq_table.hpp"

namespace mnngp::detail {

/// Nodes beyond this radius carry no mass that survives double rounding.
inline constexpr double kActiveRadius = 10.0;

/// Index range [lo, hi] of grid nodes with |u| <= kActiveRadius; lo > hi if empty.
struct ActiveRange {
  int lo;
  int hi;
};
ActiveRange active_range(const QuadratureGrid& grid);

inline double pow_int(double base, int exponent) {
  double r = 1.0;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

void check_q(int q, int min_q, const char* where);
void check_open_rho(double rho, const char* where);

/// Combines argmax sums into F_q(rho) for 2 <= q.
double combine_interior(int q, const ArgmaxSums& sums, QuadratureScheme scheme);

/// Correlations this close to +-1 use the endpoint routines.
bool snaps_to_endpoint(double rho);

void check_n_rho(int n_rho);

/// Fills a table; interior nodes come from sums_fn(q, rho, grid). Nodes are
/// independent, so the parallel loop matches the serial one bit for bit.
template <class SumsFn>
FqTable build_table_with(int q, int n_rho, const QuadratureGrid& grid,
                         QuadratureScheme scheme, Execution exec, SumsFn&& sums_fn) {
  check_q(q, 1, "build_table");
  check_n_rho(n_rho);
  std::vector<double> rhos = rho_grid(n_rho);
  std::vector<double> values(rhos.size());
  FqTableMeta meta{grid.r_max(), grid.n_grid(), scheme, 1};
  if (q == 1) {
    values = rhos;
    return FqTable(q, std::move(rhos), std::move(values), meta);
  }
  const double at_plus = fq_at_plus_one(q, grid, scheme);
  const double at_minus = fq_at_minus_one(q, grid, scheme);
  const bool parallel = exec == Execution::parallel;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (int k = 0; k < n_rho; ++k) {
    const double rho = rhos[k];
    if (snaps_to_endpoint(rho)) {
      values[k] = rho > 0.0 ? at_plus : at_minus;
    } else {
      values[k] = combine_interior(q, sums_fn(q, rho, grid), scheme);
    }
  }
  return FqTable(q, std::move(rhos), std::move(values), meta);
}

}  // namespace mnngp::detail
