#include "pitta/synth.hpp"

#include <cmath>

#include "pitta/rng.hpp"

namespace pitta {

void ActivitySpec::validate() const {
  const double n = norm(gravity_dir);
  if (std::abs(n - 1.0) > 1e-9) throw Error("ActivitySpec: gravity_dir must be unit length");
  if (noise_std_g < 0.0) throw Error("ActivitySpec: negative noise std");
  if (kind == ActivityKind::kPeriodic) {
    if (fundamental_hz <= 0.0) throw Error("ActivitySpec: periodic needs positive fundamental");
    for (const auto& h : harmonics)
      if (h.multiple <= 0.0) throw Error("ActivitySpec: nonpositive harmonic multiple");
  }
  for (double a : amplitude_g)
    if (a < 0.0) throw Error("ActivitySpec: negative amplitude");
}

namespace {

int sample_count(double rate_hz, double duration_s) {
  if (duration_s <= 0.0) throw Error("gen: duration must be positive");
  if (rate_hz <= 0.0) throw Error("gen: rate must be positive");
  const int n = static_cast<int>(std::floor(rate_hz * duration_s));
  if (n < 1) throw Error("gen: duration too short for one sample");
  return n;
}

}  // namespace

std::vector<double> gen_static(const ActivitySpec& spec, double rate_hz, double duration_s,
                               uint64_t seed, int* n_samples_out) {
  spec.validate();
  if (spec.kind != ActivityKind::kStatic) throw Error("gen_static: spec is not static");
  const int n = sample_count(rate_hz, duration_s);
  Rng rng(mix_seed(seed, 0x57a71cull));
  std::vector<double> sig(static_cast<size_t>(n) * 3);
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < 3; ++c) {
      double v = spec.gravity_dir[c];
      if (spec.noise_std_g > 0.0) v += rng.normal(0.0, spec.noise_std_g);
      sig[static_cast<size_t>(t) * 3 + c] = v;
    }
  if (n_samples_out) *n_samples_out = n;
  return sig;
}

std::vector<double> gen_periodic(const ActivitySpec& spec, double rate_hz, double duration_s,
                                 uint64_t seed, int* n_samples_out) {
  spec.validate();
  if (spec.kind != ActivityKind::kPeriodic) throw Error("gen_periodic: spec is not periodic");
  for (const auto& h : spec.harmonics)
    if (h.multiple * spec.fundamental_hz >= rate_hz / 2.0)
      throw Error("gen_periodic: harmonic at or above Nyquist");

  const int n = sample_count(rate_hz, duration_s);
  Rng rng(mix_seed(seed, 0x9e210d1cull));
  Vec3 phase;
  for (int c = 0; c < 3; ++c)
    phase[c] = 2.0 * M_PI * (static_cast<double>(mix_seed(seed, 100 + c) >> 11) * 0x1.0p-53);

  std::vector<double> sig(static_cast<size_t>(n) * 3);
  for (int t = 0; t < n; ++t) {
    const double ts = static_cast<double>(t) / rate_hz;
    for (int c = 0; c < 3; ++c) {
      double v = spec.gravity_dir[c];
      for (const auto& h : spec.harmonics)
        v += spec.amplitude_g[c] * h.rel_amplitude *
             std::sin(2.0 * M_PI * h.multiple * spec.fundamental_hz * ts + phase[c]);
      if (spec.noise_std_g > 0.0) v += rng.normal(0.0, spec.noise_std_g);
      sig[static_cast<size_t>(t) * 3 + c] = v;
    }
  }
  if (n_samples_out) *n_samples_out = n;
  return sig;
}

std::vector<double> gen_signal(const ActivitySpec& spec, double rate_hz, double duration_s,
                               uint64_t seed, int* n_samples_out) {
  return spec.kind == ActivityKind::kStatic
             ? gen_static(spec, rate_hz, duration_s, seed, n_samples_out)
             : gen_periodic(spec, rate_hz, duration_s, seed, n_samples_out);
}

LabeledStream gen_labeled_stream(const std::vector<ActivitySpec>& specs,
                                 double per_class_duration_s, double rate_hz, uint64_t seed) {
  if (specs.empty()) throw Error("gen_labeled_stream: need at least one spec");
  LabeledStream out;
  out.rate_hz = rate_hz;
  for (size_t i = 0; i < specs.size(); ++i) {
    int n = 0;
    out.segments.push_back(
        gen_signal(specs[i], rate_hz, per_class_duration_s, mix_seed(seed, 7000 + i), &n));
    out.segment_samples.push_back(n);
    out.labels.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace pitta
