#pragma once

#include <array>
#include <complex>
#include <span>
#include <string>
#include <vector>

namespace p300 {

/// Digital IIR filter. The transfer-function form (b, a with a[0] == 1) is
/// the exported/inspected representation; designs also carry an equivalent
/// cascade of biquad sections {b0,b1,b2,a0,a1,a2}, which filtering and
/// response evaluation prefer (the expanded order-8 polynomial is too
/// ill-conditioned at these band edges).
struct IirFilter {
  std::vector<double> b;
  std::vector<double> a;
  std::vector<std::array<double, 6>> sections;
  std::string design;  // "butterworth_bandpass" or "notch"
  double sample_rate{0.0};
  double f_low{0.0};
  double f_high{0.0};
  double q{0.0};
  int order{0};

  std::size_t n_coef() const { return std::max(a.size(), b.size()); }
};

/// Butterworth bandpass via analog prototype, lowpass-to-bandpass transform
/// and bilinear mapping. `order` is the design order (the digital filter has
/// 2*order poles). Stability is asserted at design time.
IirFilter design_bandpass(double low_hz, double high_hz, int order, double fs);

/// Second-order notch with zeros on the unit circle at f0 and -3 dB
/// bandwidth f0/q.
IirFilter design_notch(double f0_hz, double q, double fs);

/// H(e^{j 2 pi f / fs}) of a single forward pass.
std::complex<double> frequency_response(const IirFilter& f, double hz);

/// Largest pole modulus; < 1 for a stable filter.
double max_pole_modulus(const IirFilter& f);

/// Forward-backward zero-phase filtering with odd-reflection edge padding of
/// 3*(n_coef-1) samples and steady-state initial conditions. Output length
/// equals input length; effective magnitude response is |H|^2 with zero
/// phase. Throws when the signal is not longer than the padding.
std::vector<double> filtfilt(const IirFilter& f, std::span<const double> x);

/// Coefficient JSON ({"b": [...], "a": [...], design metadata}) for
/// cross-implementation comparison.
std::string filter_to_json(const IirFilter& f);
IirFilter filter_from_json(const std::string& text);

}  // namespace p300
