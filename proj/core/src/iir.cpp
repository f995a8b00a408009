#include "p300/iir.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace p300 {

namespace {

using cplx = std::complex<double>;

// Expands prod_k (x - roots[k]) into monomial coefficients, highest power first.
std::vector<cplx> poly_from_roots(const std::vector<cplx>& roots) {
  std::vector<cplx> coef{1.0};
  for (const cplx& r : roots) {
    std::vector<cplx> next(coef.size() + 1, 0.0);
    for (std::size_t i = 0; i < coef.size(); ++i) {
      next[i] += coef[i];
      next[i + 1] -= coef[i] * r;
    }
    coef = std::move(next);
  }
  return coef;
}

std::vector<double> real_coef(const std::vector<cplx>& c) {
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

void assert_stable(const IirFilter& f) {
  const double m = max_pole_modulus(f);
  if (!(m < 1.0)) {
    throw std::runtime_error("designed filter is unstable (max pole modulus " +
                             std::to_string(m) + ")");
  }
}

// Direct form II transposed single pass with initial state; y may alias x.
void lfilter(std::span<const double> b, std::span<const double> a, std::span<const double> x,
             std::span<double> y, std::vector<double>& z) {
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = b[0] * xi + z[0];
    for (std::size_t k = 1; k + 1 < n; ++k) {
      z[k - 1] = z[k] + (k < b.size() ? b[k] * xi : 0.0) - (k < a.size() ? a[k] * yi : 0.0);
    }
    z[n - 2] = (n - 1 < b.size() ? b[n - 1] * xi : 0.0) - (n - 1 < a.size() ? a[n - 1] * yi : 0.0);
    y[i] = yi;
  }
}

// Steady-state state for a unit step input: solves zi = companion(a)^T zi + B.
std::vector<double> lfilter_zi(std::span<const double> b, std::span<const double> a) {
  const std::size_t n = std::max(a.size(), b.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n - 1),
                                                static_cast<Eigen::Index>(n - 1));
  // I - companion(a)^T: first column gains a[1:], the superdiagonal loses 1
  for (std::size_t i = 0; i + 1 < n; ++i) {
    m(static_cast<Eigen::Index>(i), 0) += (i + 1 < a.size() ? a[i + 1] : 0.0);
    if (i + 2 < n) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) -= 1.0;
  }
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n - 1));
  for (std::size_t i = 1; i < n; ++i) {
    const double bi = i < b.size() ? b[i] : 0.0;
    const double ai = i < a.size() ? a[i] : 0.0;
    rhs(static_cast<Eigen::Index>(i - 1)) = bi - ai * b[0];
  }
  Eigen::VectorXd zi = m.partialPivLu().solve(rhs);
  return {zi.data(), zi.data() + zi.size()};
}

struct SectionView {
  std::span<const double> b;
  std::span<const double> a;
};

std::vector<SectionView> section_views(const IirFilter& f,
                                       std::vector<std::array<double, 3>>& storage) {
  std::vector<SectionView> views;
  if (f.sections.empty()) {
    views.push_back({f.b, f.a});
    return views;
  }
  storage.resize(2 * f.sections.size());
  for (std::size_t i = 0; i < f.sections.size(); ++i) {
    const auto& s = f.sections[i];
    storage[2 * i] = {s[0], s[1], s[2]};
    storage[2 * i + 1] = {s[3], s[4], s[5]};
    views.push_back({storage[2 * i], storage[2 * i + 1]});
  }
  return views;
}

// One cascade pass with steady-state initialization at `level` per section;
// level propagates through the section DC gains.
void cascade_pass(const std::vector<SectionView>& sections, std::vector<double>& x) {
  double level = x.front();
  for (const SectionView& sec : sections) {
    std::vector<double> z = lfilter_zi(sec.b, sec.a);
    for (double& v : z) v *= level;
    lfilter(sec.b, sec.a, x, x, z);
    double bsum = 0.0, asum = 0.0;
    for (double v : sec.b) bsum += v;
    for (double v : sec.a) asum += v;
    level *= bsum / asum;
  }
}

}  // namespace

IirFilter design_bandpass(double low_hz, double high_hz, int order, double fs) {
  if (!(0 < low_hz && low_hz < high_hz && high_hz < fs / 2)) {
    throw std::invalid_argument("bandpass edges must satisfy 0 < low < high < fs/2");
  }
  if (order < 1) throw std::invalid_argument("bandpass order must be >= 1");

  // analog Butterworth prototype poles on the unit circle, left half plane
  std::vector<cplx> proto;
  for (int k = -order + 1; k < order; k += 2) {
    const double angle = std::numbers::pi * k / (2.0 * order);
    proto.push_back(-std::exp(cplx(0.0, angle)));
  }

  // prewarped band edges, lowpass-to-bandpass transform, bilinear mapping
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / fs);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0_sq = w1 * w2;

  std::vector<cplx> poles;  // digital poles, conjugate pairs adjacent
  cplx gain_den = 1.0;
  poles.reserve(2 * proto.size());
  for (const cplx& p : proto) {
    const cplx ps = p * (bw / 2.0);
    const cplx d = std::sqrt(ps * ps - w0_sq);
    for (const cplx& bp : {ps + d, ps - d}) {
      poles.push_back((fs2 + bp) / (fs2 - bp));
      gain_den *= fs2 - bp;
    }
  }
  // zeros: `order` at the origin before the bilinear map -> z = 1, plus the
  // degree mismatch at z = -1; gain k = bw^order * prod(fs2 - 0) / prod(fs2 - p)
  const double gain =
      (std::pow(bw, order) * std::pow(fs2, order) / gain_den).real();

  IirFilter f;
  f.design = "butterworth_bandpass";
  f.sample_rate = fs;
  f.f_low = low_hz;
  f.f_high = high_hz;
  f.order = order;

  // biquads: poles paired by conjugacy (a real pole, when the order is odd,
  // pairs with the other real pole), one zero at +1 and one at -1 per
  // section, the pair closest to the unit circle last, gain on the first
  std::vector<cplx> unpaired = poles;
  std::vector<std::pair<cplx, cplx>> pairs;
  while (!unpaired.empty()) {
    const cplx p = unpaired.front();
    unpaired.erase(unpaired.begin());
    std::size_t best = 0;
    for (std::size_t i = 1; i < unpaired.size(); ++i) {
      if (std::abs(unpaired[i] - std::conj(p)) < std::abs(unpaired[best] - std::conj(p))) best = i;
    }
    pairs.emplace_back(p, unpaired[best]);
    unpaired.erase(unpaired.begin() + static_cast<long>(best));
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    return std::abs(x.first) < std::abs(y.first);
  });
  for (std::size_t rank = 0; rank < pairs.size(); ++rank) {
    const auto& [p, q] = pairs[rank];
    const double k = rank == 0 ? gain : 1.0;
    f.sections.push_back({k, 0.0, -k, 1.0, -(p + q).real(), (p * q).real()});
  }

  // expanded transfer function for export and inspection
  std::vector<cplx> zeros(static_cast<std::size_t>(order), cplx(1.0));
  zeros.insert(zeros.end(), static_cast<std::size_t>(order), cplx(-1.0));
  std::vector<cplx> num = poly_from_roots(zeros);
  for (cplx& c : num) c *= gain;
  f.b = real_coef(num);
  f.a = real_coef(poly_from_roots(poles));

  assert_stable(f);
  return f;
}

IirFilter design_notch(double f0_hz, double q, double fs) {
  if (!(0 < f0_hz && f0_hz < fs / 2)) {
    throw std::invalid_argument("notch frequency must satisfy 0 < f0 < fs/2");
  }
  if (!(q > 0)) throw std::invalid_argument("notch q must be positive");

  const double w0 = 2.0 * std::numbers::pi * f0_hz / fs;
  const double bw = w0 / q;  // -3 dB width in rad/sample
  const double beta = std::tan(bw / 2.0);
  const double gain = 1.0 / (1.0 + beta);

  IirFilter f;
  f.design = "notch";
  f.sample_rate = fs;
  f.f_low = f0_hz;
  f.f_high = f0_hz;
  f.q = q;
  f.order = 2;
  f.b = {gain, -2.0 * gain * std::cos(w0), gain};
  f.a = {1.0, -2.0 * gain * std::cos(w0), 2.0 * gain - 1.0};
  f.sections.push_back({f.b[0], f.b[1], f.b[2], f.a[0], f.a[1], f.a[2]});
  assert_stable(f);
  return f;
}

std::complex<double> frequency_response(const IirFilter& f, double hz) {
  const double w = 2.0 * std::numbers::pi * hz / f.sample_rate;
  const cplx zinv = std::exp(cplx(0.0, -w));
  if (!f.sections.empty()) {
    cplx h = 1.0;
    for (const auto& s : f.sections) {
      h *= (s[0] + s[1] * zinv + s[2] * zinv * zinv) /
           (s[3] + s[4] * zinv + s[5] * zinv * zinv);
    }
    return h;
  }
  cplx num = 0.0, den = 0.0, zk = 1.0;
  for (std::size_t k = 0; k < f.n_coef(); ++k) {
    if (k < f.b.size()) num += f.b[k] * zk;
    if (k < f.a.size()) den += f.a[k] * zk;
    zk *= zinv;
  }
  return num / den;
}

double max_pole_modulus(const IirFilter& f) {
  if (!f.sections.empty()) {
    double best = 0.0;
    for (const auto& s : f.sections) {
      // |roots of a0 z^2 + a1 z + a2|
      const cplx disc = std::sqrt(cplx(s[4] * s[4] - 4.0 * s[3] * s[5]));
      best = std::max({best, std::abs((-s[4] + disc) / (2.0 * s[3])),
                       std::abs((-s[4] - disc) / (2.0 * s[3]))});
    }
    return best;
  }
  const std::size_t n = f.a.size() - 1;
  if (n == 0) return 0.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    companion(0, static_cast<Eigen::Index>(i)) = -f.a[i + 1] / f.a[0];
    if (i > 0) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  }
  return companion.eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<double> filtfilt(const IirFilter& f, std::span<const double> x) {
  const std::size_t padlen = 3 * (f.n_coef() - 1);
  if (x.size() <= padlen) {
    throw std::invalid_argument("signal of " + std::to_string(x.size()) +
                                " samples is too short for filtfilt padding of " +
                                std::to_string(padlen));
  }
  if (padlen == 0) {  // pure gain
    const double g = (f.b.empty() ? 1.0 : f.b[0]) / (f.a.empty() ? 1.0 : f.a[0]);
    std::vector<double> y(x.begin(), x.end());
    for (double& v : y) v *= g * g;
    return y;
  }

  // odd reflection about the end points
  std::vector<double> ext(x.size() + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<long>(padlen));
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[padlen + x.size() + i] = 2.0 * x[x.size() - 1] - x[x.size() - 2 - i];
  }

  std::vector<std::array<double, 3>> storage;
  const std::vector<SectionView> sections = section_views(f, storage);
  cascade_pass(sections, ext);
  std::reverse(ext.begin(), ext.end());
  cascade_pass(sections, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<long>(padlen),
          ext.begin() + static_cast<long>(padlen + x.size())};
}

std::string filter_to_json(const IirFilter& f) {
  nlohmann::json j;
  j["b"] = f.b;
  j["a"] = f.a;
  j["sections"] = f.sections;
  j["design"] = f.design;
  j["sample_rate"] = f.sample_rate;
  j["f_low"] = f.f_low;
  j["f_high"] = f.f_high;
  j["q"] = f.q;
  j["order"] = f.order;
  return j.dump(2);
}

IirFilter filter_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  IirFilter f;
  f.b = j.at("b").get<std::vector<double>>();
  f.a = j.at("a").get<std::vector<double>>();
  if (j.contains("sections")) {
    f.sections = j.at("sections").get<std::vector<std::array<double, 6>>>();
  }
  f.design = j.value("design", "");
  f.sample_rate = j.value("sample_rate", 0.0);
  f.f_low = j.value("f_low", 0.0);
  f.f_high = j.value("f_high", 0.0);
  f.q = j.value("q", 0.0);
  f.order = j.value("order", 0);
  return f;
}

}  // namespace p300
