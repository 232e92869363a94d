#pragma once
// Complex FFT used by the spectral loss and its gradient. Radix-2 iterative
// Cooley-Tukey for power-of-two lengths, Bluestein's chirp-z for everything
// else, so any temporal length runs in O(N log N).

#include <complex>
#include <vector>

namespace pitta {

using cplx = std::complex<double>;

// In-place forward DFT (exponent -i 2*pi k t / N) for power-of-two n.
void fft_pow2(std::vector<cplx>& a, bool inverse);

// Forward DFT of arbitrary length (Bluestein fallback). Does not normalize.
void fft(std::vector<cplx>& a);

// Inverse DFT of arbitrary length; includes the 1/N factor.
void ifft(std::vector<cplx>& a);

// DFT of a real sequence; returns all n complex bins.
std::vector<cplx> dft_real(const std::vector<double>& x);

// Power spectrum |X_k|^2 for k = 1..floor(n/2) (DC excluded).
std::vector<double> power_spectrum(const std::vector<double>& x);

}  // namespace pitta
