#include "pitta/oracles.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "pitta/common.hpp"

namespace pitta::oracles {

namespace {

// Naive O(N^2) DFT power at bin k (DC excluded by callers).
double dft_power_at(const std::vector<double>& x, int k) {
  const int n = static_cast<int>(x.size());
  double re = 0.0, im = 0.0;
  for (int t = 0; t < n; ++t) {
    const double ang = -2.0 * M_PI * k * t / n;
    re += x[t] * std::cos(ang);
    im += x[t] * std::sin(ang);
  }
  return re * re + im * im;
}

int dft_argmax_bin(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  int best = 1;
  double best_p = -1.0;
  for (int k = 1; k <= n / 2; ++k) {
    const double p = dft_power_at(x, k);
    if (p > best_p) {
      best_p = p;
      best = k;
    }
  }
  return best;
}

}  // namespace

double js_two_bin() {
  // P=(1,0), Q=(0,1), M=(0.5,0.5), eps-smoothed logs; zero entries contribute
  // exactly zero because the formula multiplies by P(w).
  const double eps = 1e-8;
  const double kl_pm = 1.0 * std::log((1.0 + eps) / (0.5 + eps));
  const double kl_qm = 1.0 * std::log((1.0 + eps) / (0.5 + eps));
  return 0.5 * kl_pm + 0.5 * kl_qm;
}

double silhouette_six_point() {
  const std::vector<std::array<double, 2>> pts = {
      {0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {10.0, 10.0}, {11.0, 10.0}, {10.0, 11.0}};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  auto dist = [&](size_t i, size_t j) {
    const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1];
    return std::sqrt(dx * dx + dy * dy);
  };
  double total = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    for (size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        intra += dist(i, j);
        ++n_intra;
      } else {
        inter += dist(i, j);
        ++n_inter;
      }
    }
    const double a = intra / n_intra;
    const double b = inter / n_inter;  // two clusters: the other one is "min"
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(pts.size());
}

int window_count_1000_128_64() { return static_cast<int>(window_starts_1000_128_64().size()); }

std::vector<int> window_starts_1000_128_64() {
  std::vector<int> starts;
  for (int s = 0; s + 128 <= 1000; s += 64) starts.push_back(s);
  return starts;
}

int psd_sine_bin() {
  const int n = 1024;
  const double rate = 100.0, f = 2.0;
  std::vector<double> x(n);
  for (int t = 0; t < n; ++t) x[t] = std::sin(2.0 * M_PI * f * t / rate);
  return dft_argmax_bin(x);
}

int drift_shifted_bin() {
  const int n = 250;
  const double rate = 100.0, f = 2.0, ratio = 120.0 / 100.0;
  std::vector<double> x(n), y(n);
  for (int t = 0; t < n; ++t) x[t] = std::sin(2.0 * M_PI * f * t / rate);
  for (int t = 0; t < n; ++t) {
    double pos = std::min(static_cast<double>(t) / ratio, static_cast<double>(n - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, n - 1);
    const double frac = pos - lo;
    y[t] = (1.0 - frac) * x[lo] + frac * x[hi];
  }
  return dft_argmax_bin(y);
}

int drift_expected_bin() {
  const double apparent_hz = 2.0 * (100.0 / 120.0);
  return static_cast<int>(std::lround(apparent_hz * 250.0 / 100.0));
}

double placement_waist_arm_norm() {
  // Rotation 60 deg about z applied to gravity (1,0,0), then gains
  // (1.3, 1.3, 0.9): closed-form magnitude.
  const double th = 60.0 * M_PI / 180.0;
  const double x = std::cos(th) * 1.3;
  const double y = std::sin(th) * 1.3;
  return std::sqrt(x * x + y * y);
}

double harmonic_power_ratio() {
  // Integer-cycle setup (f=2 Hz, rate=100 Hz, N=1000 -> 20 cycles exactly),
  // harmonics (1, 1.0) and (2, 0.5): peak power ratio should be 4.
  const int n = 1000;
  const double rate = 100.0, f = 2.0;
  std::vector<double> x(n);
  for (int t = 0; t < n; ++t) {
    const double ts = t / rate;
    x[t] = std::sin(2.0 * M_PI * f * ts) + 0.5 * std::sin(2.0 * M_PI * 2.0 * f * ts);
  }
  const double p1 = dft_power_at(x, 20);
  const double p2 = dft_power_at(x, 40);
  return p1 / p2;
}

std::vector<std::string> names() {
  return {"js-two-bin",    "silhouette-six-point", "windows-enum",   "psd-sine-bin",
          "drift-bin",     "placement-waist-arm",  "harmonic-ratio"};
}

std::string run(const std::string& name) {
  std::ostringstream os;
  os.precision(17);
  if (name == "js-two-bin") {
    os << js_two_bin() << "\n";
  } else if (name == "silhouette-six-point") {
    os << silhouette_six_point() << "\n";
  } else if (name == "windows-enum") {
    const auto starts = window_starts_1000_128_64();
    os << "count " << starts.size() << "\nstarts";
    for (int s : starts) os << " " << s;
    os << "\n";
  } else if (name == "psd-sine-bin") {
    os << psd_sine_bin() << "\n";
  } else if (name == "drift-bin") {
    os << "shifted " << drift_shifted_bin() << "\nexpected " << drift_expected_bin() << "\n";
  } else if (name == "placement-waist-arm") {
    os << placement_waist_arm_norm() << "\n";
  } else if (name == "harmonic-ratio") {
    os << harmonic_power_ratio() << "\n";
  } else {
    throw Error("oracle: unknown name '" + name + "'");
  }
  return os.str();
}

}  // namespace pitta::oracles
