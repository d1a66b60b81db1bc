#include "dyntx/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

namespace dyntx::gauss {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInfD = std::numeric_limits<double>::infinity();
// Phi(-8.3) is below 1e-16, so the integration range is truncated there.
constexpr double kLim = 8.3;
constexpr double kPanel = 2.0;
constexpr int kMaxDim = 8;

// Genz's bivariate upper probability P(X > h, Y > k).
double bvnu(double h, double k, double r) {
  if (h == kInfD || k == kInfD) return 0.0;
  if (h == -kInfD) return k == -kInfD ? 1.0 : Phi(-k);
  if (k == -kInfD) return Phi(-h);
  if (r == 0.0) return Phi(-h) * Phi(-k);

  static const double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static const double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
  static const double x12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static const double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                 0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                 0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                 0.1527533871307259};
  static const double x20[10] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                 0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                 0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                 0.07652652113349733};
  const double* w;
  const double* x;
  int ng;
  double ar = std::fabs(r);
  if (ar < 0.3) {
    w = w6, x = x6, ng = 3;
  } else if (ar < 0.75) {
    w = w12, x = x12, ng = 6;
  } else {
    w = w20, x = x20, ng = 10;
  }

  const double tp = 2.0 * kPi;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    double hs = (h * h + k * k) / 2.0;
    double asr = std::asin(r) / 2.0;
    for (int i = 0; i < ng; ++i) {
      for (int s = -1; s <= 1; s += 2) {
        double sn = std::sin(asr * (1.0 + s * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / tp + Phi(-h) * Phi(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      double as = 1.0 - r * r;
      double a = std::sqrt(as);
      double bs = (h - k) * (h - k);
      double asr = -(bs / as + hk) / 2.0;
      double c = (4.0 - hk) / 8.0;
      double d = (12.0 - hk) / 80.0;
      if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        double b = std::sqrt(bs);
        double sp = std::sqrt(tp) * Phi(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double sum = 0.0;
      for (int i = 0; i < ng; ++i) {
        for (int s = -1; s <= 1; s += 2) {
          double xs = a * (1.0 + s * x[i]);
          xs *= xs;
          double asr2 = -(bs / xs + hk) / 2.0;
          if (asr2 > -100.0) {
            double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            double rs = std::sqrt(1.0 - xs);
            double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
            sum += w[i] * std::exp(asr2) * (sp - ep);
          }
        }
      }
      bvn = (a * sum - bvn) / tp;
    }
    if (r > 0.0) {
      bvn += Phi(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      double L = h < 0.0 ? Phi(k) - Phi(h) : Phi(-h) - Phi(-k);
      bvn = L - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

struct Small {
  int n = 0;
  double r[kMaxDim][kMaxDim];
  double a[kMaxDim];
};

double orthant_rec(const Small& s, int order) {
  for (int i = 0; i < s.n; ++i)
    if (s.a[i] == -kInfD) return 0.0;
  if (s.n == 0) return 1.0;
  if (s.n == 1) return Phi(s.a[0]);
  if (s.n == 2) return bvn_cdf(s.a[0], s.a[1], s.r[0][1]);

  int p = 0;
  for (int i = 1; i < s.n; ++i)
    if (s.a[i] < s.a[p]) p = i;
  if (s.a[p] < -kLim) return 0.0;
  double hi = std::min(s.a[p], kLim);
  double lo = -kLim;

  Small c;
  c.n = s.n - 1;
  double rp[kMaxDim], sd[kMaxDim];
  int idx[kMaxDim];
  for (int i = 0, j = 0; i < s.n; ++i) {
    if (i == p) continue;
    idx[j] = i;
    rp[j] = s.r[i][p];
    sd[j] = std::sqrt(std::max(1.0 - rp[j] * rp[j], 1e-300));
    ++j;
  }
  for (int j = 0; j < c.n; ++j)
    for (int k = 0; k < c.n; ++k)
      c.r[j][k] = j == k ? 1.0 : (s.r[idx[j]][idx[k]] - rp[j] * rp[k]) / (sd[j] * sd[k]);

  const auto& gl = legendre(order);
  int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / kPanel)));
  double width = (hi - lo) / panels;
  double total = 0.0;
  for (int q = 0; q < panels; ++q) {
    double mid = lo + (q + 0.5) * width;
    double half = width / 2.0;
    double part = 0.0;
    for (const auto& [x, wt] : gl) {
      double w = mid + half * x;
      for (int j = 0; j < c.n; ++j) {
        double aj = s.a[idx[j]];
        c.a[j] = aj == kInfD ? kInfD : (aj - rp[j] * w) / sd[j];
      }
      part += wt * phi(w) * orthant_rec(c, order);
    }
    total += part * half;
  }
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace

double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double bvn_cdf(double a, double b, double r) { return bvnu(-a, -b, r); }

const std::vector<std::pair<double, double>>& legendre(int order) {
  static std::mutex m;
  static std::map<int, std::vector<std::pair<double, double>>> table;
  std::lock_guard<std::mutex> lock(m);
  auto it = table.find(order);
  if (it != table.end()) return it->second;
  std::vector<std::pair<double, double>> nodes;
  for (int i = 1; i <= order; ++i) {
    double x = std::cos(kPi * (i - 0.25) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (order == 1) p0 = 1.0;
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    nodes.emplace_back(x, 2.0 / ((1.0 - x * x) * dp * dp));
  }
  return table.emplace(order, std::move(nodes)).first->second;
}

double mvn_cdf(const Eigen::MatrixXd& R, const std::vector<double>& a, int order) {
  Small s;
  std::vector<int> keep;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == -kInfD) return 0.0;
    if (a[i] != kInfD) keep.push_back(static_cast<int>(i));
  }
  s.n = static_cast<int>(keep.size());
  for (int i = 0; i < s.n; ++i) {
    s.a[i] = a[keep[i]];
    for (int j = 0; j < s.n; ++j) s.r[i][j] = R(keep[i], keep[j]);
  }
  return orthant_rec(s, order);
}

RectangleProb::RectangleProb(Eigen::MatrixXd R, int order) : R_(std::move(R)), order_(order) {}

double RectangleProb::orthant(unsigned mask, const std::vector<double>& a) const {
  std::string key(sizeof(unsigned), '\0');
  std::memcpy(key.data(), &mask, sizeof(unsigned));
  for (int i = 0; i < dim(); ++i) {
    if (!(mask & (1u << i))) continue;
    key.append(reinterpret_cast<const char*>(&a[i]), sizeof(double));
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  Small s;
  s.n = 0;
  int idx[kMaxDim];
  for (int i = 0; i < dim(); ++i)
    if (mask & (1u << i)) idx[s.n++] = i;
  for (int i = 0; i < s.n; ++i) {
    s.a[i] = a[idx[i]];
    for (int j = 0; j < s.n; ++j) s.r[i][j] = R_(idx[i], idx[j]);
  }
  double v = orthant_rec(s, order_);
  std::lock_guard<std::mutex> lock(mu_);
  cache_.emplace(std::move(key), v);
  return v;
}

double RectangleProb::operator()(const std::vector<Side>& sides) const {
  unsigned le = 0;
  std::vector<int> gt;
  std::vector<double> a(dim(), 0.0);
  for (int i = 0; i < dim(); ++i) {
    const Side& s = sides[i];
    if (s.kind == Side::Le) {
      if (s.v == -kInfD) return 0.0;
      if (s.v == kInfD) continue;
      le |= 1u << i;
      a[i] = s.v;
    } else if (s.kind == Side::Gt) {
      if (s.v == kInfD) return 0.0;
      if (s.v == -kInfD) continue;
      gt.push_back(i);
      a[i] = s.v;
    }
  }
  double total = 0.0;
  std::size_t ng = gt.size();
  for (std::uint32_t sub = 0; sub < (1u << ng); ++sub) {
    unsigned mask = le;
    int bits = 0;
    for (std::size_t j = 0; j < ng; ++j)
      if (sub & (1u << j)) {
        mask |= 1u << gt[j];
        ++bits;
      }
    double v = orthant(mask, a);
    total += (bits % 2 ? -v : v);
  }
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace dyntx::gauss
