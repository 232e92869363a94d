#include "pitta/fft.hpp"

#include <cmath>

#include "pitta/common.hpp"

namespace pitta {

namespace {

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Bluestein: reshape an arbitrary-length DFT as a convolution of chirped
// sequences, evaluated with two power-of-two FFTs.
void fft_bluestein(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  const size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<cplx> w(n);  // chirp: exp(sign * i * pi * k^2 / n)
  for (size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for long inputs.
    const auto k2 = static_cast<double>((static_cast<unsigned long long>(k) * k) % (2 * n));
    const double ang = M_PI * k2 / static_cast<double>(n);
    w[k] = {std::cos(ang), sign * std::sin(ang)};
  }

  std::vector<cplx> x(m, cplx{0.0, 0.0});
  std::vector<cplx> y(m, cplx{0.0, 0.0});
  for (size_t k = 0; k < n; ++k) x[k] = a[k] * w[k];
  y[0] = std::conj(w[0]);
  for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(w[k]);

  fft_pow2(x, false);
  fft_pow2(y, false);
  for (size_t k = 0; k < m; ++k) x[k] *= y[k];
  fft_pow2(x, true);

  for (size_t k = 0; k < n; ++k) a[k] = x[k] * w[k];
}

}  // namespace

void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  if (n <= 1) return;
  if (!is_pow2(n)) throw Error("fft_pow2: length must be a power of two");

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const cplx wl{std::cos(ang), std::sin(ang)};
    for (size_t i = 0; i < n; i += len) {
      cplx w{1.0, 0.0};
      for (size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& c : a) c *= inv;
  }
}

void fft(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    fft_pow2(a, false);
  else
    fft_bluestein(a, false);
}

void ifft(std::vector<cplx>& a) {
  const size_t n = a.size();
  if (n <= 1) return;
  if (is_pow2(n)) {
    fft_pow2(a, true);
  } else {
    fft_bluestein(a, true);
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& c : a) c *= inv;
  }
}

std::vector<cplx> dft_real(const std::vector<double>& x) {
  std::vector<cplx> a(x.size());
  for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft(a);
  return a;
}

std::vector<double> power_spectrum(const std::vector<double>& x) {
  const size_t n = x.size();
  if (n < 2) throw Error("power_spectrum: need at least 2 samples");
  auto spec = dft_real(x);
  const size_t f = n / 2;
  std::vector<double> p(f);
  for (size_t k = 1; k <= f; ++k) p[k - 1] = std::norm(spec[k]);
  return p;
}

}  // namespace pitta
