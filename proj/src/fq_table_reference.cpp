// Serial reference quadrature. Every Phi_2 value comes straight from
// binormal_cdf and the full square is summed without exploiting symmetry.

#include <cmath>
#include <numbers>
#include <vector>

#include "fq_detail.hpp"
#include "mnngp/fq_table.hpp"
#include "mnngp/special_functions.hpp"

namespace mnngp::reference {

ArgmaxSums argmax_sums(int q, double rho, const QuadratureGrid& grid) {
  detail::check_q(q, 2, "reference::argmax_sums");
  detail::check_open_rho(rho, "reference::argmax_sums");
  const auto [lo, hi] = detail::active_range(grid);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  ArgmaxSums out;
  for (int i = lo; i <= hi; ++i) {
    const double x = grid.node(i);
    for (int j = lo; j <= hi; ++j) {
      const double y = grid.node(j);
      const double cdf2 = binormal_cdf(x, y, rho);
      const double w_same = binormal_pdf(x, y, rho) * std::pow(cdf2, q - 1);
      const double w_diff = std_normal_pdf(x) * std_normal_pdf(y) *
                            std_normal_cdf((x - rho * y) / s) *
                            std_normal_cdf((y - rho * x) / s) * std::pow(cdf2, q - 2);
      out.same_moment += x * y * w_same;
      out.same_mass += w_same;
      out.diff_moment += x * y * w_diff;
      out.diff_mass += w_diff;
    }
  }
  const double area = grid.spacing() * grid.spacing();
  out.same_moment *= area;
  out.same_mass *= area;
  out.diff_moment *= area;
  out.diff_mass *= area;
  return out;
}

FqTable build_table(int q, int n_rho, const QuadratureGrid& grid, QuadratureScheme scheme) {
  return detail::build_table_with(q, n_rho, grid, scheme, Execution::serial,
                                  [](int qq, double rho, const QuadratureGrid& g) {
                                    return reference::argmax_sums(qq, rho, g);
                                  });
}

}  // namespace mnngp::reference
