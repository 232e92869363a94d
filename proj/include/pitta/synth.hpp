#pragma once
// Synthetic inertial stream generation with known ground-truth gravity
// direction, motion fundamental, and noise level. Gravity magnitude is fixed
// at exactly 1 g so the feasible band [0.9, 1.1] g has a known center;
// sensor-gain corruption is modeled only through shift operators.

#include <cstdint>
#include <string>
#include <vector>

#include "pitta/common.hpp"

namespace pitta {

enum class ActivityKind { kStatic, kPeriodic };

struct Harmonic {
  double multiple = 1.0;
  double rel_amplitude = 1.0;
};

struct ActivitySpec {
  std::string name;
  ActivityKind kind = ActivityKind::kStatic;
  Vec3 gravity_dir{0.0, 0.0, 1.0};  // unit vector
  double fundamental_hz = 0.0;      // periodic only
  Vec3 amplitude_g{0.0, 0.0, 0.0};  // per-axis motion amplitude
  double noise_std_g = 0.0;
  std::vector<Harmonic> harmonics{{1.0, 1.0}};

  // |gravity_dir| = 1 +- 1e-9; periodic fundamentals below Nyquist are
  // checked at generation time.
  void validate() const;
};

// N x 3 time-major signal: gravity + noise. Deterministic for a fixed seed.
std::vector<double> gen_static(const ActivitySpec& spec, double rate_hz, double duration_s,
                               uint64_t seed, int* n_samples_out);

// Gravity + per-axis harmonic sum + noise. Per-axis phases are deterministic
// functions of (seed, axis).
std::vector<double> gen_periodic(const ActivitySpec& spec, double rate_hz, double duration_s,
                                 uint64_t seed, int* n_samples_out);

std::vector<double> gen_signal(const ActivitySpec& spec, double rate_hz, double duration_s,
                               uint64_t seed, int* n_samples_out);

struct LabeledStream {
  // Contiguous per-class segments in spec order.
  std::vector<std::vector<double>> segments;  // each N_i x 3 time-major
  std::vector<int> segment_samples;
  std::vector<int> labels;  // label of each segment (index into specs)
  double rate_hz = 0.0;
};

LabeledStream gen_labeled_stream(const std::vector<ActivitySpec>& specs,
                                 double per_class_duration_s, double rate_hz, uint64_t seed);

}  // namespace pitta
