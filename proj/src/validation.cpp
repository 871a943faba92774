#include "mnngp/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mnngp/datasets.hpp"
#include "mnngp/errors.hpp"
#include "mnngp/gp_regression.hpp"
#include "mnngp/special_functions.hpp"

namespace mnngp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

CheckResult at_most(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured <= threshold, measured, threshold, std::move(detail), false, "<="};
}

CheckResult at_least(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured >= threshold, measured, threshold, std::move(detail), false, ">="};
}

// Boolean property, shown as 1 == 1 when it holds.
CheckResult holds(std::string name, bool ok, std::string detail = {}) {
  return {std::move(name), ok, ok ? 1.0 : 0.0, 1.0, std::move(detail), false, "=="};
}

CheckResult info(std::string name, double measured, std::string detail = {}) {
  return {std::move(name), true, measured, 0.0, std::move(detail), true, ""};
}

// Runs body, turning a stray exception into a failed check.
template <class Body>
void guarded(std::vector<CheckResult>& out, const std::string& name, Body body) {
  try {
    body();
  } catch (const std::exception& e) {
    out.push_back({name, false, std::numeric_limits<double>::quiet_NaN(), 0.0,
                   std::string("exception: ") + e.what(), false, "<="});
  }
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.informational || c.passed; });
}

std::string SuiteReport::format() const {
  std::ostringstream out;
  for (const CheckResult& c : checks) {
    const char* tag = c.informational ? "INFO" : (c.passed ? "PASS" : "FAIL");
    char buf[160];
    if (c.informational) {
      std::snprintf(buf, sizeof buf, "%s  %-44s %.6g", tag, c.name.c_str(), c.measured);
    } else {
      std::snprintf(buf, sizeof buf, "%s  %-44s %.6g %s %.6g", tag, c.name.c_str(), c.measured,
                    c.relation.c_str(), c.threshold);
    }
    out << buf;
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s suite: %s (%.1f s)\n", suite.c_str(),
                passed() ? "PASS" : "FAIL", seconds);
  out << buf;
  return out.str();
}

void TableCache::insert(FqTable table) {
  const std::pair<int, int> key{table.q(), table.n_rho()};
  for (auto& [k, e] : entries_) {
    if (k == key) {
      e.table = std::make_unique<FqTable>(std::move(table));
      e.seconds = 0.0;
      return;
    }
  }
  entries_.push_back({key, Entry{std::make_unique<FqTable>(std::move(table)), 0.0}});
}

const FqTable& TableCache::get(int q, int n_rho) {
  const std::pair<int, int> key{q, n_rho};
  for (auto& [k, e] : entries_) {
    if (k == key) return *e.table;
  }
  const auto start = Clock::now();
  auto table = std::make_unique<FqTable>(build_table(q, n_rho, grid_, QuadratureScheme::product, exec_));
  entries_.push_back({key, Entry{std::move(table), seconds_since(start)}});
  return *entries_.back().second.table;
}

double TableCache::build_seconds(int q, int n_rho) const {
  for (const auto& [k, e] : entries_) {
    if (k == std::pair<int, int>{q, n_rho}) return e.seconds;
  }
  return 0.0;
}

double portable_uniform(std::uint64_t bits, double lo, double hi) noexcept {
  return lo + (hi - lo) * (static_cast<double>(bits >> 11) * 0x1p-53);
}

Matrix portable_uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = portable_uniform(rng(), lo, hi);
  }
  return M;
}

// ---------------------------------------------------------------- fq

namespace {

double max_closed_form_gap(const FqTable& table) {
  double worst = 0.0;
  for (int i = 0; i < table.n_rho(); ++i) {
    worst = std::max(worst, std::abs(table.values()[i] - closed_form_f2(table.rhos()[i])));
  }
  return worst;
}

void mc_checks(TableCache& tables, int q, const std::vector<double>& rhos, std::int64_t samples,
               double sigmas, int n_rho, std::uint64_t seed, std::vector<CheckResult>& out) {
  const FqTable& table = tables.get(q, n_rho);
  double worst = 0.0;
  std::ostringstream detail;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    const McEstimate mc = mc_oracle_fq(q, rhos[i], samples, derive_seed(seed, 100 * q + i),
                                       tables.execution());
    const double z = std::abs(table.interpolate(rhos[i]) - mc.estimate) / mc.std_error;
    worst = std::max(worst, z);
    detail << (i ? " " : "") << fmt("%g:", rhos[i]) << fmt("%.2f", z);
  }
  out.push_back(at_most("F_" + std::to_string(q) + " vs Monte Carlo, max z-score", worst, sigmas,
                        "z by rho " + detail.str()));
}

}  // namespace

SuiteReport validate_fq(TableCache& tables, const FqSuiteOptions& o) {
  SuiteReport report{"fq", {}, 0.0};
  const auto start = Clock::now();
  auto& out = report.checks;

  if (o.closed_form) guarded(out, "F_2 table vs closed form", [&] {
    const FqTable& t2 = tables.get(2, o.n_rho);
    const double secs = tables.build_seconds(2, o.n_rho);
    char grid[96];
    std::snprintf(grid, sizeof grid, "r_max=%g n_grid=%d n_rho=%d", t2.meta().r_max,
                  t2.meta().n_grid, t2.n_rho());
    out.push_back(at_most("F_2 table vs closed form, max |diff|", max_closed_form_gap(t2),
                          o.threshold, grid));
    if (secs > 0.0) {
      out.push_back(at_most("F_2 table build seconds", secs, o.max_build_seconds));
    } else {
      out.push_back(info("F_2 table build seconds", 0.0, "table supplied, not built"));
    }
  });

  if (o.closed_form && o.report_published_grid) {
    guarded(out, "F_2 published grid deviation", [&] {
      const FqTable coarse =
          build_table(2, o.n_rho, QuadratureGrid::published(), QuadratureScheme::product,
                      tables.execution());
      out.push_back(info("F_2 published grid (r_max=100, n_grid=501) max |diff|",
                         max_closed_form_gap(coarse)));
    });
  }

  guarded(out, "ratio scheme", [&] {
    for (int q : o.mc_qs) {
      for (double rho : {0.5, 1.0}) {
        const double prod = fq_value(q, rho, tables.grid(), QuadratureScheme::product);
        const double ratio = fq_value(q, rho, tables.grid(), QuadratureScheme::ratio);
        out.push_back(info("ratio minus product scheme, q=" + std::to_string(q) + fmt(" rho=%g", rho),
                           ratio - prod));
      }
    }
  });

  const auto mc_start = Clock::now();
  for (int q : o.mc_qs) {
    guarded(out, "F_" + std::to_string(q) + " vs Monte Carlo", [&] {
      mc_checks(tables, q, o.mc_rhos, o.mc_samples, o.mc_sigmas, o.mc_table_n_rho, o.seed, out);
    });
  }
  if (!o.mc_qs.empty()) {
    out.push_back(at_most("F_q Monte Carlo comparison seconds", seconds_since(mc_start),
                          o.max_mc_seconds));
  }
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- prop1

SuiteReport validate_prop1(TableCache& tables, const Prop1Options& o) {
  SuiteReport report{"prop1", {}, 0.0};
  const auto start = Clock::now();
  auto& out = report.checks;
  guarded(out, "maxout vs ReLU residual", [&] {
    const FqTable& table = tables.get(2, o.n_rho);
    const double build = tables.build_seconds(2, o.n_rho);
    const auto eval_start = Clock::now();
    std::mt19937_64 rng(o.seed);
    double worst = 0.0;
    double worst_rel = 0.0;
    std::string where;
    for (int s = 0; s < o.n_sigma; ++s) {
      const double sb = portable_uniform(rng(), 0.0, o.sigma_b2_max);
      const double sw = portable_uniform(rng(), o.sigma_w2_min, o.sigma_w2_max);
      for (int set = 0; set < o.n_sets; ++set) {
        const Matrix X = portable_uniform_matrix(o.rows, o.cols, -1.0, 1.0,
                                                 derive_seed(o.seed, 1000 * s + set));
        for (int depth : o.depths) {
          const KernelParams p{2, depth, sb, sw};
          const double r = prop1_residual(X, p, table);
          const double scale = kernel_matrix(X, p, table).values.cwiseAbs().maxCoeff();
          worst_rel = std::max(worst_rel, r / scale);
          if (r >= worst) {
            worst = r;
            char buf[96];
            std::snprintf(buf, sizeof buf, "worst at depth=%d sigma_b2=%.3f sigma_w2=%.3f", depth,
                          sb, sw);
            where = buf;
          }
        }
      }
    }
    out.push_back(at_most("max |maxout - rescaled ReLU| kernel residual", worst, o.threshold, where));
    out.push_back(info("maxout vs ReLU residual relative to max |K|", worst_rel));
    out.push_back(info("maxout vs ReLU evaluation seconds", seconds_since(eval_start),
                       build > 0.0 ? fmt("plus %.1f s table build", build) : std::string()));
  });
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- finite width

SuiteReport validate_theorem1(TableCache& tables, const Theorem1Options& o) {
  SuiteReport report{"theorem1", {}, 0.0};
  const auto start = Clock::now();
  auto& out = report.checks;
  guarded(out, "finite-width gap", [&] {
    const FqTable& table = tables.get(o.q, o.n_rho);
    const Matrix X = portable_uniform_matrix(o.n_inputs, o.d_in, -1.0, 1.0, o.seed);
    const KernelParams params{o.q, o.depth, o.sigma_b2, o.sigma_w2};
    const auto sample_start = Clock::now();
    double mean[2] = {0.0, 0.0};
    std::string detail[2];
    const int widths[2] = {o.width, o.reference_width};
    for (int w = 0; w < 2; ++w) {
      const NetworkArch arch = NetworkArch::uniform(static_cast<int>(o.d_in), widths[w], o.depth,
                                                    o.q, o.sigma_b2, o.sigma_w2);
      for (int s = 0; s < o.n_seeds; ++s) {
        const double gap = theorem1_gap(arch, params, table, X, o.n_networks,
                                        derive_seed(o.seed, 10 * w + s + 1), o.method, o.estimator,
                                        tables.execution());
        mean[w] += gap / o.n_seeds;
        detail[w] += (s ? " " : "per seed ") + fmt("%.5f", gap);
      }
    }
    const std::string ww = std::to_string(o.width);
    const std::string wr = std::to_string(o.reference_width);
    out.push_back(at_most("finite-width mean gap, width " + ww, mean[0], o.gap_threshold, detail[0]));
    out.push_back(info("finite-width mean gap, width " + wr, mean[1], detail[1]));
    out.push_back(at_most("finite-width gap ratio width " + ww + " / " + wr, mean[0] / mean[1],
                          o.ratio_threshold));
    out.push_back(at_most("finite-width sampling seconds", seconds_since(sample_start), o.max_seconds,
                          o.estimator == OutputEstimator::conditional ? "conditional estimator"
                                                                      : "sampled estimator"));
  });
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- jitter

SuiteReport validate_jitter() {
  SuiteReport report{"jitter", {}, 0.0};
  const auto start = Clock::now();
  auto& out = report.checks;
  const double noise0 = 1e-10;
  guarded(out, "rank-deficient kernel escalates", [&] {
    const Matrix K = Matrix::Constant(3, 3, 1e8);
    const PosteriorResult r = posterior_mean(K, Matrix::Constant(1, 3, 1e8),
                                             encode_targets(std::vector<int>{0, 1, 0}, 2), noise0);
    out.push_back(at_least("rank-deficient kernel, escalations", r.escalations, 1.0));
    const double expected = noise0 * std::pow(10.0, r.escalations);
    const double rel = std::abs(r.noise_used - expected) / expected;
    out.push_back(at_most("noise_used vs 1e-10 * 10^escalations, rel diff", rel, 0.0,
                          fmt("noise_used=%g", r.noise_used)));
  });
  guarded(out, "indefinite kernel exhausts the cap", [&] {
    Matrix K = Matrix::Zero(3, 3);
    K.diagonal() << 2.0, -1.0, 3.0;
    bool threw = false;
    double final_noise = 0.0;
    std::string what;
    try {
      solve_with_jitter(K, noise0);
    } catch (const ConditioningError& e) {
      threw = true;
      final_noise = e.final_noise();
      what = e.what();
    }
    out.push_back(holds("eigenvalue -1 raises ConditioningError", threw, what));
    out.push_back({"final noise after 10 escalations", threw && final_noise == 1.0, final_noise,
                   1.0, "", false, "=="});
  });
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- properties

namespace {

void special_function_properties(std::mt19937_64& rng, std::vector<CheckResult>& out) {
  std::vector<double> xs(2000);
  for (double& x : xs) x = portable_uniform(rng(), -10.0, 10.0);
  std::sort(xs.begin(), xs.end());
  double drops = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std_normal_cdf(xs[i]) < std_normal_cdf(xs[i - 1])) drops += 1.0;
  }
  out.push_back(at_most("Phi monotone on random grid, violations", drops, 0.0));

  double refl = 0.0;
  for (int i = 0; i <= 1600; ++i) {
    const double x = -8.0 + i * 0.01;
    refl = std::max(refl, std::abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0));
  }
  out.push_back(at_most("Phi reflection |Phi(x)+Phi(-x)-1|", refl, 1e-15));

  double marg = 0.0;
  double indep = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double x = portable_uniform(rng(), -6.0, 6.0);
    const double y = portable_uniform(rng(), -6.0, 6.0);
    const double rho = portable_uniform(rng(), -0.999, 0.999);
    marg = std::max(marg, std::abs(binormal_cdf(x, 38.0, rho) - std_normal_cdf(x)));
    indep = std::max(indep, std::abs(binormal_cdf(x, y, 0.0) - std_normal_cdf(x) * std_normal_cdf(y)));
  }
  out.push_back(at_most("Phi2 marginal |Phi2(x, 38, rho) - Phi(x)|", marg, 1e-10));

  double diag = 0.0;
  for (double rho : {-0.99, -0.5, 0.0, 0.5, 0.99}) {
    const double exact = 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
    diag = std::max(diag, std::abs(binormal_cdf(0.0, 0.0, rho) - exact));
  }
  out.push_back(at_most("Phi2(0,0,rho) vs 1/4 + asin(rho)/(2 pi)", diag, 1e-10));
  out.push_back(at_most("Phi2(x,y,0) vs Phi(x)Phi(y)", indep, 1e-12));

  double slepian = 0.0;
  const std::vector<double> rhos = rho_grid(2001);
  for (std::size_t i = 1; i < rhos.size(); ++i) {
    if (binormal_cdf(0, 0, rhos[i]) < binormal_cdf(0, 0, rhos[i - 1])) slepian += 1.0;
  }
  out.push_back(at_most("Phi2(0,0,rho) nondecreasing in rho, violations", slepian, 0.0));
}

double max_descent(const FqTable& t) {
  double worst = 0.0;
  for (int i = 1; i < t.n_rho(); ++i) worst = std::max(worst, t.values()[i - 1] - t.values()[i]);
  return worst;
}

void fq_properties(TableCache& tables, std::mt19937_64& rng, const PropertyOptions& o,
                   std::vector<CheckResult>& out) {
  const FqTable& t2 = tables.get(2, 1001);
  out.push_back(at_most("F_2 table vs closed form, max |diff|", max_closed_form_gap(t2), 1e-3));
  mc_checks(tables, 3, {-1.0, -0.9, -0.5, 0.0, 0.5, 0.9, 1.0}, o.mc_samples, 3.0, 201, o.seed, out);
  mc_checks(tables, 4, {-1.0, -0.9, -0.5, 0.0, 0.5, 0.9, 1.0}, o.mc_samples, 3.0, 201, o.seed, out);

  const FqTable& t3 = tables.get(3, 201);
  const FqTable& t4 = tables.get(4, 201);
  const double cs = std::max({t2.cauchy_schwarz_excess(), t3.cauchy_schwarz_excess(),
                              t4.cauchy_schwarz_excess()});
  out.push_back(at_most("Cauchy-Schwarz max |F(rho_i)| - F(1), q=2,3,4", cs, 1e-6));
  out.push_back(at_most("F_2 monotone, largest descent", max_descent(t2), 0.0));
  out.push_back(at_most("F_3, F_4 monotone, largest descent",
                        std::max(max_descent(t3), max_descent(t4)), 1e-4));

  const FqTable t1 = build_table(1, 1001, tables.grid());
  double lin = 0.0;
  for (int i = 0; i < t1.n_rho(); ++i) lin = std::max(lin, std::abs(t1.values()[i] - t1.rhos()[i]));
  out.push_back(at_most("q=1 table equals rho grid", lin, 1e-12));

  const FqTable& half = tables.get(2, 501);
  double interp = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double rho = portable_uniform(rng(), -1.0, 1.0);
    interp = std::max(interp, std::abs(half.interpolate(rho) - t2.interpolate(rho)));
  }
  out.push_back(at_most("n_rho 501 vs 1001 interpolation at 100 rho", interp, 1e-4));

  std::stringstream buf;
  write_table(t3, buf);
  const FqTable back = read_table(buf, "memory");
  const bool same = std::equal(back.rhos().begin(), back.rhos().end(), t3.rhos().begin()) &&
                    std::equal(back.values().begin(), back.values().end(), t3.values().begin());
  out.push_back(holds("table save/load bit-exact", same));
}

Matrix permute_rows(const Matrix& M, const std::vector<std::size_t>& perm) {
  Matrix out(M.rows(), M.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(perm[i]);
  return out;
}

void kernel_properties(TableCache& tables, std::mt19937_64& rng, const PropertyOptions& o,
                       std::vector<CheckResult>& out) {
  const FqTable& t2 = tables.get(2, 1001);
  const FqTable& t3 = tables.get(3, 201);
  double asym = 0.0;
  double below_sb = std::numeric_limits<double>::infinity();
  double isolation = 0.0;
  double worst_eig = 0.0;
  double perm_diff = 0.0;
  int band_errors = 0;
  for (int set = 0; set < 20; ++set) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(bounded_uniform(rng, 46));
    const Matrix X = portable_uniform_matrix(n, 10, -1.0, 1.0, derive_seed(o.seed, 300 + set));
    const int q = set % 2 ? 3 : 2;
    const KernelParams p{q, 1 + 4 * (set % 4), portable_uniform(rng(), 0.0, 2.0),
                         portable_uniform(rng(), 0.1, 2.0)};
    const FqTable& t = q == 2 ? t2 : t3;
    KernelMatrix K;
    try {
      K = kernel_matrix(X, p, t);
    } catch (const DomainError&) {
      ++band_errors;
      continue;
    }
    asym = std::max(asym, (K.values - K.values.transpose()).cwiseAbs().maxCoeff());
    for (int l = 1; l <= p.depth; ++l) {
      below_sb = std::min(below_sb, K.diag_x[l].minCoeff() - p.sigma_b2);
    }
    const Matrix single = kernel_matrix(Matrix(X.row(0)), p, t).values;
    isolation = std::max(isolation, std::abs(single(0, 0) - K.values(0, 0)));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(K.values, Eigen::EigenvaluesOnly);
    worst_eig = std::min(worst_eig, eig.eigenvalues().minCoeff() / K.values.diagonal().maxCoeff());
    const std::vector<std::size_t> perm = shuffled_indices(static_cast<std::size_t>(n), o.seed + set);
    const Matrix Kp = kernel_matrix(permute_rows(X, perm), p, t).values;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        perm_diff = std::max(perm_diff, std::abs(Kp(i, j) - K.values(perm[i], perm[j])));
      }
    }
  }
  out.push_back(at_most("kernel symmetric, max |K - K^T|", asym, 0.0));
  out.push_back(at_most("correlation band violations", band_errors, 0.0));
  out.push_back(at_least("min over l >= 1 of K^l(x,x) - sigma_b2", below_sb, 0.0));
  out.push_back(at_most("diagonal independent of other points", isolation, 0.0));
  out.push_back(at_most("PSD: -min eigenvalue / max diagonal", std::max(0.0, -worst_eig), 1e-8));
  out.push_back(at_most("permutation equivariance, max |diff|", perm_diff, 0.0));

  double prop1 = 0.0;
  for (int s = 0; s < 5; ++s) {
    const double sb = portable_uniform(rng(), 0.0, 2.0);
    const double sw = portable_uniform(rng(), 0.1, 1.0);
    const Matrix X = portable_uniform_matrix(20, 10, -1.0, 1.0, derive_seed(o.seed, 400 + s));
    for (int depth : {1, 5, 9, 13, 17, 21}) {
      prop1 = std::max(prop1, prop1_residual(X, {2, depth, sb, sw}, t2));
    }
  }
  out.push_back(at_most("maxout vs ReLU residual, 5 sigma pairs x 6 depths", prop1, 1e-3));

  const FqTable t1 = build_table(1, 101, tables.grid());
  double affine = 0.0;
  const Matrix X = portable_uniform_matrix(12, 7, -1.0, 1.0, derive_seed(o.seed, 500));
  const Matrix K0 = k0_matrix(X, X);
  for (int depth : {1, 3, 8}) {
    const double sb = 0.3;
    const double sw = 0.9;
    const Matrix K = kernel_matrix(X, {1, depth, sb, sw}, t1).values;
    double bias = 0.0;
    for (int k = 0; k <= depth; ++k) bias += sb * std::pow(sw, k);
    const Matrix expected = (std::pow(sw, depth + 1) * K0).array() + bias;
    affine = std::max(affine, (K - expected).cwiseAbs().maxCoeff());
  }
  out.push_back(at_most("q=1 kernel vs affine closed form", affine, 1e-12));
}

void gp_properties(TableCache& tables, std::mt19937_64& rng, const PropertyOptions& o,
                   std::vector<CheckResult>& out) {
  double solve_res = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 8 + 14 * trial;
    const Matrix B = portable_uniform_matrix(n, n, -1.0, 1.0, derive_seed(o.seed, 600 + trial));
    Matrix K = B * B.transpose() / static_cast<double>(n);
    K.diagonal().array() += 0.05;
    const Matrix t = portable_uniform_matrix(n, 3, -1.0, 1.0, derive_seed(o.seed, 650 + trial));
    const JitteredCholesky f = solve_with_jitter(K, 1e-10);
    const Matrix s = f.solve(t);
    Matrix Kn = K;
    Kn.diagonal().array() += f.noise_used();
    solve_res = std::max(solve_res, (Kn * s - t).cwiseAbs().maxCoeff() / t.cwiseAbs().maxCoeff());
  }
  out.push_back(at_most("solver residual / |t|_inf, SPD n <= 64", solve_res, 1e-8));

  const FqTable& t2 = tables.get(2, 1001);
  const KernelParams p{2, 3, 0.2, 1.2};
  const Matrix Xtr = portable_uniform_matrix(30, 6, -1.0, 1.0, derive_seed(o.seed, 700));
  const Matrix Xte = portable_uniform_matrix(10, 6, -1.0, 1.0, derive_seed(o.seed, 701));
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[i] = static_cast<int>(bounded_uniform(rng, 3));
  const Matrix T = encode_targets(labels, 3);
  const Matrix mu = posterior_mean(kernel_matrix(Xtr, p, t2).values,
                                   kernel_matrix(Xte, Xtr, p, t2).values, T, 1e-10)
                        .mean;
  const auto ptr = shuffled_indices(30, o.seed + 1);
  const Matrix Xtr_p = permute_rows(Xtr, ptr);
  const Matrix mu_tr = posterior_mean(kernel_matrix(Xtr_p, p, t2).values,
                                      kernel_matrix(Xte, Xtr_p, p, t2).values, permute_rows(T, ptr),
                                      1e-10)
                           .mean;
  const auto pte = shuffled_indices(10, o.seed + 2);
  const Matrix Xte_p = permute_rows(Xte, pte);
  const Matrix mu_te = posterior_mean(kernel_matrix(Xtr, p, t2).values,
                                      kernel_matrix(Xte_p, Xtr, p, t2).values, T, 1e-10)
                           .mean;
  const double scale = mu.cwiseAbs().maxCoeff();
  out.push_back(at_most("train permutation leaves mean unchanged (rel)",
                        (mu_tr - mu).cwiseAbs().maxCoeff() / scale, 1e-8));
  out.push_back(at_most("test permutation permutes mean rows (rel)",
                        (mu_te - permute_rows(mu, pte)).cwiseAbs().maxCoeff() / scale, 1e-12));

  bool decreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  double last = 0.0;
  for (int k = -6; k <= 6; ++k) {
    const double s = std::pow(10.0, k);
    const double m = std::abs(
        posterior_mean(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.8),
                       Matrix::Constant(1, 1, 1.0), s)
            .mean(0, 0));
    decreasing = decreasing && m < prev;
    prev = m;
    last = m;
  }
  out.push_back(holds("scalar mean shrinks as noise grows", decreasing && last < 1e-5,
                      fmt("|mean| at noise 1e6 = %.3g", last)));

  const Matrix deficient = Matrix::Constant(3, 3, 1e8);
  const JitteredCholesky a = solve_with_jitter(deficient, 1e-10);
  const JitteredCholesky b = solve_with_jitter(deficient, 1e-10);
  out.push_back(holds("escalation count deterministic",
                      a.escalations() == b.escalations() && a.noise_used() == b.noise_used(),
                      "escalations " + std::to_string(a.escalations())));

  Matrix Btr(50, 6), Bte(50, 6);
  std::vector<int> ytr(50), yte(50);
  for (int i = 0; i < 50; ++i) {
    const double centre = i < 25 ? 1.0 : -1.0;
    ytr[i] = yte[i] = i < 25 ? 0 : 1;
    for (int j = 0; j < 6; ++j) {
      Btr(i, j) = centre + portable_uniform(rng(), -0.5, 0.5);
      Bte(i, j) = centre + portable_uniform(rng(), -0.5, 0.5);
    }
  }
  const KernelParams pb{2, 3, 0.1, 1.5};
  const PosteriorResult r = posterior_mean(kernel_matrix(Btr, pb, t2).values,
                                           kernel_matrix(Bte, Btr, pb, t2).values,
                                           encode_targets(ytr, 2), 1e-10);
  const double acc = accuracy(predict_classes(r.mean), yte);
  out.push_back({"two-blob pipeline accuracy", acc == 1.0, acc, 1.0, "", false, "=="});
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

void dataset_properties(std::mt19937_64& rng, const PropertyOptions& o,
                        std::vector<CheckResult>& out) {
  Dataset ds;
  ds.inputs = portable_uniform_matrix(40, 9, -3.0, 3.0, derive_seed(o.seed, 800));
  ds.inputs(0, 0) = 0.1;
  ds.inputs(1, 1) = 1.0 / 3.0;
  ds.labels.resize(40);
  for (int& y : ds.labels) y = static_cast<int>(bounded_uniform(rng, 4));
  ds.labels[0] = 3;
  ds.n_classes = 4;
  std::stringstream buf;
  write_dataset_csv(ds, buf);
  const Dataset back = read_dataset_csv(buf, "memory");
  const double diff = (back.inputs - ds.inputs).cwiseAbs().maxCoeff();
  out.push_back(holds("dataset CSV round trip exact", diff == 0.0 && back.labels == ds.labels));

  Dataset idx;
  idx.inputs.resize(200, 1);
  idx.labels.assign(200, 0);
  idx.n_classes = 1;
  for (int i = 0; i < 200; ++i) idx.inputs(i, 0) = i;
  const auto [tr, va] = split(idx, 120, 80, o.seed);
  std::set<double> seen;
  for (Eigen::Index i = 0; i < tr.size(); ++i) seen.insert(tr.inputs(i, 0));
  double overlap = 0.0;
  for (Eigen::Index i = 0; i < va.size(); ++i) overlap += seen.count(va.inputs(i, 0));
  out.push_back(at_most("split train/validation overlap", overlap, 0.0));

  const auto dir = std::filesystem::temp_directory_path() /
                   ("mnngp_validate_" + std::to_string(derive_seed(o.seed, rng())));
  std::filesystem::create_directories(dir);
  double lo = 1.0;
  double hi = 0.0;
  try {
    {
      std::ofstream img(dir / "images", std::ios::binary);
      put_be32(img, 2051);
      put_be32(img, 3);
      put_be32(img, 28);
      put_be32(img, 28);
      for (int i = 0; i < 3 * 784; ++i) img.put(static_cast<char>(i % 256));
      std::ofstream lab(dir / "labels", std::ios::binary);
      put_be32(lab, 2049);
      put_be32(lab, 3);
      for (int i = 0; i < 3; ++i) lab.put(static_cast<char>(i));
      std::ofstream cif(dir / "batch", std::ios::binary);
      for (int r = 0; r < 2; ++r) {
        cif.put(static_cast<char>(r));
        for (int i = 0; i < 3072; ++i) cif.put(static_cast<char>((i * 7 + r) % 256));
      }
    }
    const Dataset m = load_mnist(dir / "images", dir / "labels");
    const Dataset c = load_cifar10({dir / "batch"});
    lo = std::min(m.inputs.minCoeff(), c.inputs.minCoeff());
    hi = std::max(m.inputs.maxCoeff(), c.inputs.maxCoeff());
  } catch (...) {
    std::filesystem::remove_all(dir);
    throw;
  }
  std::filesystem::remove_all(dir);
  out.push_back(holds("loader scaling within [0, 1]", lo >= 0.0 && hi <= 1.0,
                      "synthetic IDX and CIFAR files, bytes 0..255 map to " + fmt("[%g, ", lo) +
                          fmt("%g]", hi)));
}

}  // namespace

SuiteReport validate_properties(TableCache& tables, const PropertyOptions& o) {
  SuiteReport report{"properties", {}, 0.0};
  const auto start = Clock::now();
  std::mt19937_64 rng(o.seed);
  guarded(report.checks, "special functions", [&] { special_function_properties(rng, report.checks); });
  guarded(report.checks, "fq table", [&] { fq_properties(tables, rng, o, report.checks); });
  guarded(report.checks, "kernel", [&] { kernel_properties(tables, rng, o, report.checks); });
  guarded(report.checks, "gp regression", [&] { gp_properties(tables, rng, o, report.checks); });
  guarded(report.checks, "datasets", [&] { dataset_properties(rng, o, report.checks); });
  report.checks.push_back(at_most("property suite seconds", seconds_since(start), 600.0));
  report.seconds = seconds_since(start);
  return report;
}

}  // namespace mnngp
