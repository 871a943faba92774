#include "mnngp/special_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <sstream>

#include "mnngp/errors.hpp"

namespace mnngp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Half-interval Gauss-Legendre abscissae/weights on [-1, 1] (positive half).
constexpr std::array<double, 3> kX6 = {0.9324695142031522, 0.6612093864662647,
                                       0.2386191860831970};
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384,
                                       0.4679139345726904};
constexpr std::array<double, 6> kX12 = {0.9815606342467191, 0.9041172563704750,
                                        0.7699026741943050, 0.5873179542866171,
                                        0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183,
                                        0.1600783285433464,  0.2031674267230659,
                                        0.2334925365383547,  0.2491470458134029};
constexpr std::array<double, 10> kX20 = {
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733};
constexpr std::array<double, 10> kW20 = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};

double phid(double z) { return std_normal_cdf(z); }

}  // namespace

double binormal_pdf(double x, double y, double rho) {
  if (!(std::abs(rho) < 1.0)) {
    std::ostringstream msg;
    msg << "binormal_pdf: |rho| must be < 1, got " << rho;
    throw DomainError(msg.str());
  }
  const double one_minus = (1.0 - rho) * (1.0 + rho);
  const double quad = (x * x - 2.0 * rho * x * y + y * y) / one_minus;
  return std::exp(-0.5 * quad) / (kTwoPi * std::sqrt(one_minus));
}

double binormal_upper(double h, double k, double r) noexcept {
  if (r == 0.0) return phid(-h) * phid(-k);

  std::span<const double> xs;
  std::span<const double> ws;
  if (std::abs(r) < 0.3) {
    xs = kX6;
    ws = kW6;
  } else if (std::abs(r) < 0.75) {
    xs = kX12;
    ws = kW12;
  } else {
    xs = kX20;
    ws = kW20;
  }

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sign * xs[i]));
        bvn += ws[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / kTwoPi + phid(-h) * phid(-k), 0.0, 1.0);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0) {
      bvn = a * std::exp(asr) *
            (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(kTwoPi) * phid(-b / a);
      bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double t = a * (1.0 + sign * xs[i]);
        const double xs2 = t * t;
        const double asr_i = -0.5 * (bs / xs2 + hk);
        if (asr_i > -100.0) {
          const double sp = 1.0 + c * xs2 * (1.0 + 5.0 * d * xs2);
          const double rs = std::sqrt(1.0 - xs2);
          const double ep = std::exp(-0.5 * hk * xs2 / ((1.0 + rs) * (1.0 + rs))) / rs;
          sum += ws[i] * std::exp(asr_i) * (sp - ep);
        }
      }
    }
    bvn = (a * sum - bvn) / kTwoPi;
  }
  if (r > 0.0) {
    bvn += phid(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double lower = h < 0.0 ? phid(k) - phid(h) : phid(-h) - phid(-k);
    bvn = lower - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double binormal_cdf(double x, double y, double rho) {
  if (std::isnan(rho) || std::abs(rho) > 1.0 + kRhoSnap) {
    std::ostringstream msg;
    msg << "binormal_cdf: rho outside [-1, 1]: " << rho;
    throw DomainError(msg.str());
  }
  if (rho >= 1.0 - kRhoSnap) return std_normal_cdf(std::min(x, y));
  if (rho <= -1.0 + kRhoSnap) {
    return std::max(0.0, std_normal_cdf(x) - std_normal_cdf(-y));
  }
  return binormal_upper(-x, -y, rho);
}

}  // namespace mnngp

namespace mnngp::detail {

namespace {

struct HermiteCdfTable {
  static constexpr int kPieces = static_cast<int>(2 * kCdfTableLimit) * kCdfTablePerUnit;

  // Coefficients of p(t) = sum c_k t^k on each piece, t in [0, 1].
  std::array<std::array<double, 6>, kPieces> coeffs;

  HermiteCdfTable() {
    const double h = 1.0 / kCdfTablePerUnit;
    for (int i = 0; i < kPieces; ++i) {
      const double a = -kCdfTableLimit + static_cast<double>(i) / kCdfTablePerUnit;
      const double b = -kCdfTableLimit + static_cast<double>(i + 1) / kCdfTablePerUnit;
      const double f0 = std_normal_cdf(a), f1 = std_normal_cdf(b);
      const double d0 = h * std_normal_pdf(a), d1 = h * std_normal_pdf(b);
      const double s0 = -h * h * a * std_normal_pdf(a), s1 = -h * h * b * std_normal_pdf(b);
      const double df = f1 - f0;
      coeffs[i] = {f0,
                   d0,
                   0.5 * s0,
                   10.0 * df - 6.0 * d0 - 4.0 * d1 - 0.5 * (3.0 * s0 - s1),
                   -15.0 * df + 8.0 * d0 + 7.0 * d1 + 0.5 * (3.0 * s0 - 2.0 * s1),
                   6.0 * df - 3.0 * (d0 + d1) - 0.5 * (s0 - s1)};
    }
  }
};

}  // namespace

const double* hermite_cdf_coeffs() noexcept {
  static const HermiteCdfTable table;
  return table.coeffs[0].data();
}

}  // namespace mnngp::detail
