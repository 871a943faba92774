#include "mnngp/fq_table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "fq_detail.hpp"
#include "mnngp/errors.hpp"
#include "mnngp/special_functions.hpp"

namespace mnngp {

namespace detail {

ActiveRange active_range(const QuadratureGrid& grid) {
  int lo = 0;
  while (lo < grid.n_grid() && grid.node(lo) < -kActiveRadius) ++lo;
  return {lo, grid.n_grid() - 1 - lo};
}

void check_q(int q, int min_q, const char* where) {
  if (q < min_q) {
    std::ostringstream msg;
    msg << where << ": maxout rank q must be >= " << min_q << ", got " << q;
    throw UsageError(msg.str());
  }
}

void check_open_rho(double rho, const char* where) {
  if (!(std::abs(rho) < 1.0)) {
    std::ostringstream msg;
    msg << where << ": rho must lie in (-1, 1), got " << rho;
    throw DomainError(msg.str());
  }
}

void check_n_rho(int n_rho) {
  if (n_rho < 3) throw UsageError("build_table: n_rho must be >= 3");
}

bool snaps_to_endpoint(double rho) {
  return std::abs(rho) > 1.0 - 10.0 * std::numeric_limits<double>::epsilon();
}

double combine_interior(int q, const ArgmaxSums& sums, QuadratureScheme scheme) {
  const double qd = q;
  if (scheme == QuadratureScheme::product) {
    return qd * sums.same_moment + qd * (qd - 1.0) * sums.diff_moment;
  }
  return qd * sums.same_moment / sums.same_mass +
         qd * (qd - 1.0) * sums.diff_moment / sums.diff_mass;
}

}  // namespace detail

using detail::pow_int;

std::string_view to_string(QuadratureScheme scheme) {
  return scheme == QuadratureScheme::product ? "product" : "ratio";
}

QuadratureScheme parse_scheme(std::string_view text) {
  if (text == "product") return QuadratureScheme::product;
  if (text == "ratio") return QuadratureScheme::ratio;
  throw UsageError("unknown quadrature scheme '" + std::string(text) +
                   "' (expected product|ratio)");
}

QuadratureGrid::QuadratureGrid(double r_max, int n_grid) : r_max_(r_max), n_grid_(n_grid) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) {
    throw UsageError("QuadratureGrid: r_max must be positive and finite");
  }
  if (n_grid < 3) throw UsageError("QuadratureGrid: n_grid must be >= 3");
}

std::vector<double> QuadratureGrid::nodes() const {
  std::vector<double> out(n_grid_);
  for (int i = 0; i < n_grid_; ++i) out[i] = node(i);
  return out;
}

// ---------------------------------------------------------------------------
// FqTable

FqTable::FqTable(int q, std::vector<double> rhos, std::vector<double> values, FqTableMeta meta)
    : q_(q), rhos_(std::move(rhos)), values_(std::move(values)), meta_(meta) {
  if (q_ < 1) throw FormatError("FqTable: q must be >= 1");
  if (rhos_.size() < 2 || rhos_.size() != values_.size()) {
    throw FormatError("FqTable: need matching rho/value arrays of length >= 2");
  }
  if (rhos_.front() != -1.0 || rhos_.back() != 1.0) {
    throw FormatError("FqTable: rho grid must start at -1 and end at 1");
  }
  for (std::size_t i = 0; i < rhos_.size(); ++i) {
    if (!std::isfinite(rhos_[i]) || !std::isfinite(values_[i])) {
      throw FormatError("FqTable: non-finite entry at row " + std::to_string(i));
    }
    if (i > 0 && !(rhos_[i] > rhos_[i - 1])) {
      throw FormatError("FqTable: rho grid not strictly increasing at row " + std::to_string(i));
    }
  }
  if (!(values_.back() > 0.0)) throw FormatError("FqTable: F_q(1) must be positive");
}

double FqTable::interpolate(double rho) const {
  if (!(std::abs(rho) <= 1.0 + kInterpolationBand)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "FqTable::interpolate: correlation " << rho << " outside [-1, 1]";
    throw DomainError(msg.str());
  }
  rho = std::clamp(rho, -1.0, 1.0);
  const auto it = std::upper_bound(rhos_.begin(), rhos_.end(), rho);
  if (it == rhos_.end()) return values_.back();
  const std::size_t hi = static_cast<std::size_t>(it - rhos_.begin());
  const std::size_t lo = hi - 1;
  if (rhos_[lo] == rho) return values_[lo];
  const double r0 = rhos_[lo];
  const double r1 = rhos_[hi];
  return ((r1 - rho) * values_[lo] + (rho - r0) * values_[hi]) / (r1 - r0);
}

double FqTable::cauchy_schwarz_excess() const {
  double worst = 0.0;
  for (double v : values_) worst = std::max(worst, std::abs(v));
  return worst - values_.back();
}

std::vector<double> rho_grid(int n_rho) {
  detail::check_n_rho(n_rho);
  std::vector<double> out(n_rho);
  const int m = n_rho - 1;
  for (int k = 0; k < n_rho; ++k) out[k] = static_cast<double>(2 * k - m) / m;
  return out;
}

// ---------------------------------------------------------------------------
// Interior terms

namespace {

// Simpson sub-steps along a row never exceed this, nor a fraction of the
// conditional scale s = sqrt(1 - rho^2) of the integrand's step.
constexpr double kMaxSubstep = 0.02;
constexpr double kSubstepPerScale = 1.0 / 6.0;

}  // namespace

ArgmaxSums argmax_sums(int q, double rho, const QuadratureGrid& grid) {
  detail::check_q(q, 2, "argmax_sums");
  detail::check_open_rho(rho, "argmax_sums");

  const auto [lo, hi] = detail::active_range(grid);
  if (lo > hi) return {};

  const int n = grid.n_grid();
  const double dx = grid.spacing();
  const double s2 = (1.0 - rho) * (1.0 + rho);
  const double s = std::sqrt(s2);
  const double inv_s = 1.0 / s;
  const double pdf2_norm = 1.0 / (2.0 * std::numbers::pi * s);
  const double half_inv_s2 = 0.5 / s2;

  const int substeps = std::max(1, static_cast<int>(std::ceil(
                                       dx / std::min(kMaxSubstep, s * kSubstepPerScale))));
  const double hs = dx / substeps;

  std::vector<double> u(n), phi(n);
  for (int i = lo; i <= hi; ++i) {
    u[i] = grid.node(i);
    phi[i] = std_normal_pdf(u[i]);
  }
  // phi at the Simpson midpoints and interior sub-nodes of interval (j-1, j).
  std::vector<double> t_mid(static_cast<std::size_t>(n) * substeps);
  std::vector<double> phi_mid(t_mid.size());
  std::vector<double> t_sub(static_cast<std::size_t>(n) * substeps);
  std::vector<double> phi_sub(t_sub.size());
  for (int j = lo + 1; j <= hi; ++j) {
    for (int k = 0; k < substeps; ++k) {
      const std::size_t idx = static_cast<std::size_t>(j) * substeps + k;
      t_mid[idx] = u[j - 1] + (k + 0.5) * hs;
      phi_mid[idx] = std_normal_pdf(t_mid[idx]);
      t_sub[idx] = u[j - 1] + (k + 1) * hs;
      phi_sub[idx] = std_normal_pdf(t_sub[idx]);
    }
  }

  ArgmaxSums total;
  for (int i = lo; i <= hi; ++i) {
    const double x = u[i];
    double cdf2 = binormal_cdf(x, u[lo], rho);
    double g_prev = 0.0;
    ArgmaxSums row;
    for (int j = lo; j <= i; ++j) {
      const double y = u[j];
      const double a_ij = fast_normal_cdf((x - rho * y) * inv_s);
      const double g_node = phi[j] * a_ij;
      if (j > lo) {
        double g_left = g_prev;
        const std::size_t base = static_cast<std::size_t>(j) * substeps;
        for (int k = 0; k < substeps; ++k) {
          const double g_mid =
              phi_mid[base + k] * fast_normal_cdf((x - rho * t_mid[base + k]) * inv_s);
          const double g_right =
              (k + 1 == substeps)
                  ? g_node
                  : phi_sub[base + k] * fast_normal_cdf((x - rho * t_sub[base + k]) * inv_s);
          cdf2 += hs / 6.0 * (g_left + 4.0 * g_mid + g_right);
          g_left = g_right;
        }
      }
      g_prev = g_node;

      const double p = std::clamp(cdf2, 0.0, 1.0);
      const double a_ji = fast_normal_cdf((y - rho * x) * inv_s);
      const double pdf2 = pdf2_norm * std::exp(-(x * x - 2.0 * rho * x * y + y * y) * half_inv_s2);
      const double p_pow = pow_int(p, q - 2);
      const double w_same = pdf2 * p_pow * p;
      const double w_diff = phi[i] * phi[j] * a_ij * a_ji * p_pow;
      const double mult = (j == i) ? 1.0 : 2.0;
      const double xy = x * y;
      row.same_moment += mult * xy * w_same;
      row.same_mass += mult * w_same;
      row.diff_moment += mult * xy * w_diff;
      row.diff_mass += mult * w_diff;
    }
    total.same_moment += row.same_moment;
    total.same_mass += row.same_mass;
    total.diff_moment += row.diff_moment;
    total.diff_mass += row.diff_mass;
  }
  const double area = dx * dx;
  total.same_moment *= area;
  total.same_mass *= area;
  total.diff_moment *= area;
  total.diff_mass *= area;
  return total;
}

double term_same_argmax(int q, double rho, const QuadratureGrid& grid, QuadratureScheme scheme) {
  const ArgmaxSums s = argmax_sums(q, rho, grid);
  return scheme == QuadratureScheme::product ? s.same_moment : s.same_moment / s.same_mass;
}

double term_diff_argmax(int q, double rho, const QuadratureGrid& grid, QuadratureScheme scheme) {
  const ArgmaxSums s = argmax_sums(q, rho, grid);
  return scheme == QuadratureScheme::product ? s.diff_moment : s.diff_moment / s.diff_mass;
}

double fq_interior(int q, double rho, const QuadratureGrid& grid, QuadratureScheme scheme) {
  detail::check_q(q, 1, "fq_interior");
  detail::check_open_rho(rho, "fq_interior");
  if (q == 1) return rho;
  return detail::combine_interior(q, argmax_sums(q, rho, grid), scheme);
}

// ---------------------------------------------------------------------------
// Endpoints

double fq_at_plus_one(int q, const QuadratureGrid& grid, QuadratureScheme scheme) {
  detail::check_q(q, 1, "fq_at_plus_one");
  if (q == 1) return 1.0;
  const auto [lo, hi] = detail::active_range(grid);
  double moment = 0.0;
  double mass = 0.0;
  for (int i = lo; i <= hi; ++i) {
    const double x = grid.node(i);
    const double w = std_normal_pdf(x) * pow_int(std_normal_cdf(x), q - 1);
    moment += x * x * w;
    mass += w;
  }
  if (scheme == QuadratureScheme::product) return q * moment * grid.spacing();
  return q * moment / mass;
}

namespace {

// Product-scheme F_q(-1). Expanding (Phi(x) - Phi(y))^(q-2) binomially turns
// the triangular double integral into
//   sum_k C(q-2, k) (-1)^k int x phi(x) Phi(x)^(q-2-k) J_k(x) dx,
//   J_k(x) = int_{-inf}^{x} y phi(y) Phi(y)^k dy,
// where J_k is accumulated along the grid by composite Simpson steps and the
// outer integrand is smooth, so no diagonal kink enters the rule.
double minus_one_product(int q, const QuadratureGrid& grid) {
  const auto [lo, hi] = detail::active_range(grid);
  if (lo > hi) return 0.0;
  const int m = q - 2;
  const double dx = grid.spacing();
  const int substeps = std::max(1, static_cast<int>(std::ceil(dx / kMaxSubstep)));
  const double hs = dx / substeps;
  auto integrand = [](double y, int k) { return y * std_normal_pdf(y) * pow_int(std_normal_cdf(y), k); };

  std::vector<double> binom(m + 1, 1.0);
  for (int k = 1; k <= m; ++k) binom[k] = binom[k - 1] * (m - k + 1) / k;

  std::vector<double> j_acc(m + 1);
  for (int k = 0; k <= m; ++k) j_acc[k] = k == 0 ? -std_normal_pdf(grid.node(lo)) : 0.0;
  double total = 0.0;
  for (int i = lo; i <= hi; ++i) {
    const double x = grid.node(i);
    if (i > lo) {
      const double x0 = grid.node(i - 1);
      for (int k = 1; k <= m; ++k) {
        double acc = 0.0;
        for (int t = 0; t < substeps; ++t) {
          const double a = x0 + t * hs;
          acc += integrand(a, k) + 4.0 * integrand(a + 0.5 * hs, k) + integrand(a + hs, k);
        }
        j_acc[k] += acc * hs / 6.0;
      }
      j_acc[0] = -std_normal_pdf(x);
    }
    const double cdf = std_normal_cdf(x);
    double inner = 0.0;
    for (int k = 0; k <= m; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      inner += sign * binom[k] * pow_int(cdf, m - k) * j_acc[k];
    }
    total += x * std_normal_pdf(x) * inner;
  }
  return -static_cast<double>(q) * (q - 1) * total * dx;
}

}  // namespace

double fq_at_minus_one(int q, const QuadratureGrid& grid, QuadratureScheme scheme) {
  detail::check_q(q, 1, "fq_at_minus_one");
  if (q == 1) return -1.0;
  if (scheme == QuadratureScheme::product) return minus_one_product(q, grid);
  const auto [lo, hi] = detail::active_range(grid);
  if (lo > hi) return 0.0;
  std::vector<double> u(grid.n_grid()), phi(grid.n_grid()), cdf(grid.n_grid());
  for (int i = lo; i <= hi; ++i) {
    u[i] = grid.node(i);
    phi[i] = std_normal_pdf(u[i]);
    cdf[i] = std_normal_cdf(u[i]);
  }
  // Self-normalized sum over the strict triangle x > y.
  double moment = 0.0;
  double mass = 0.0;
  for (int i = lo; i <= hi; ++i) {
    for (int j = lo; j < i; ++j) {
      const double w = phi[i] * phi[j] * pow_int(cdf[i] - cdf[j], q - 2);
      moment += u[i] * u[j] * w;
      mass += w;
    }
  }
  return -static_cast<double>(q) * (q - 1) * moment / mass;
}

double fq_value(int q, double rho, const QuadratureGrid& grid, QuadratureScheme scheme) {
  detail::check_q(q, 1, "fq_value");
  if (!(std::abs(rho) <= 1.0)) {
    throw DomainError("fq_value: rho outside [-1, 1]");
  }
  if (q == 1) return rho;
  if (detail::snaps_to_endpoint(rho)) {
    return rho > 0.0 ? fq_at_plus_one(q, grid, scheme) : fq_at_minus_one(q, grid, scheme);
  }
  return fq_interior(q, rho, grid, scheme);
}

FqTable build_table(int q, int n_rho, const QuadratureGrid& grid, QuadratureScheme scheme,
                    Execution exec) {
  return detail::build_table_with(q, n_rho, grid, scheme, exec,
                                  [](int qq, double rho, const QuadratureGrid& g) {
                                    return argmax_sums(qq, rho, g);
                                  });
}

double closed_form_f2(double rho) {
  if (!(std::abs(rho) <= 1.0)) throw DomainError("closed_form_f2: rho outside [-1, 1]");
  const double theta = std::acos(rho);
  return (std::sin(theta) + (std::numbers::pi - theta) * rho) / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle

McEstimate mc_oracle_fq(int q, double rho, std::int64_t n_samples, std::uint64_t seed,
                        Execution exec) {
  detail::check_q(q, 1, "mc_oracle_fq");
  if (n_samples < 10000) throw UsageError("mc_oracle_fq: n_samples must be >= 1e4");
  if (!(std::abs(rho) <= 1.0)) throw DomainError("mc_oracle_fq: rho outside [-1, 1]");

  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  const double s = std::sqrt(std::max(0.0, (1.0 - rho) * (1.0 + rho)));
  std::vector<double> sums(n_chunks), sq_sums(n_chunks);

  const bool parallel = exec == Execution::parallel;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> normal;
    const std::int64_t count = std::min(kChunk, n_samples - c * kChunk);
    double sum = 0.0, sq = 0.0;
    for (std::int64_t k = 0; k < count; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      double my = mx;
      for (int l = 0; l < q; ++l) {
        const double h = normal(rng);
        const double g = normal(rng);
        mx = std::max(mx, h);
        my = std::max(my, rho * h + s * g);
      }
      const double prod = mx * my;
      sum += prod;
      sq += prod * prod;
    }
    sums[c] = sum;
    sq_sums[c] = sq;
  }
  double sum = 0.0, sq = 0.0;
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    sum += sums[c];
    sq += sq_sums[c];
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::string_view kMagicLine = "# mnngp-fq-table v1";

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

[[noreturn]] void format_fail(const std::string& source, int line, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

double parse_real(const std::string& tok, const std::string& source, int line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size()) {
    format_fail(source, line, "cannot parse real '" + tok + "'");
  }
  return v;
}

long parse_int(const std::string& tok, const std::string& source, int line) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || end != tok.c_str() + tok.size()) {
    format_fail(source, line, "cannot parse integer '" + tok + "'");
  }
  return v;
}

}  // namespace

void write_table(const FqTable& table, std::ostream& out) {
  const auto& m = table.meta();
  out << kMagicLine << '\n';
  out << "# q=" << table.q() << " n_rho=" << table.n_rho() << " r_max=" << format_real(m.r_max)
      << " n_grid=" << m.n_grid << " scheme=" << to_string(m.scheme) << '\n';
  for (int i = 0; i < table.n_rho(); ++i) {
    out << format_real(table.rhos()[i]) << '\t' << format_real(table.values()[i]) << '\n';
  }
}

FqTable read_table(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) format_fail(source, 1, "empty file, missing header");
  strip_cr(line);
  if (line != kMagicLine) format_fail(source, 1, "bad magic line '" + line + "'");

  if (!std::getline(in, line)) format_fail(source, 2, "missing parameter header");
  strip_cr(line);
  std::istringstream header(line);
  std::string hash;
  header >> hash;
  if (hash != "#") format_fail(source, 2, "parameter header must start with '#'");
  std::map<std::string, std::string> kv;
  std::string tok;
  while (header >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) format_fail(source, 2, "garbled header field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"q", "n_rho", "r_max", "n_grid", "scheme"}) {
    if (!kv.count(key)) format_fail(source, 2, std::string("header lacks '") + key + "'");
  }
  const long q = parse_int(kv["q"], source, 2);
  const long n_rho = parse_int(kv["n_rho"], source, 2);
  FqTableMeta meta;
  meta.r_max = parse_real(kv["r_max"], source, 2);
  meta.n_grid = static_cast<int>(parse_int(kv["n_grid"], source, 2));
  try {
    meta.scheme = parse_scheme(kv["scheme"]);
  } catch (const UsageError& e) {
    format_fail(source, 2, e.what());
  }
  if (q < 1 || n_rho < 2) format_fail(source, 2, "q must be >= 1 and n_rho >= 2");

  std::vector<double> rhos, values;
  rhos.reserve(n_rho);
  values.reserve(n_rho);
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, extra;
    if (!(row >> a >> b) || (row >> extra)) {
      format_fail(source, lineno, "expected '<rho>\\t<value>'");
    }
    const double rho = parse_real(a, source, lineno);
    const double val = parse_real(b, source, lineno);
    if (!std::isfinite(rho) || !std::isfinite(val)) format_fail(source, lineno, "non-finite entry");
    if (!rhos.empty() && !(rho > rhos.back())) format_fail(source, lineno, "rho not increasing");
    rhos.push_back(rho);
    values.push_back(val);
  }
  if (static_cast<long>(rhos.size()) != n_rho) {
    format_fail(source, lineno,
                "row count " + std::to_string(rhos.size()) + " != n_rho " + std::to_string(n_rho));
  }
  try {
    return FqTable(static_cast<int>(q), std::move(rhos), std::move(values), meta);
  } catch (const FormatError& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save_table(const FqTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_table(table, out);
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

FqTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open table '" + path.string() + "'");
  return read_table(in, path.string());
}

}  // namespace mnngp
