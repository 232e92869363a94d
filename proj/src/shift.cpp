#include "pitta/shift.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pitta {

Mat3 RotationSpec::matrix() const {
  const double n = norm(axis);
  if (n < 1e-12) throw Error("RotationSpec: zero axis");
  const Vec3 u = scale(axis, 1.0 / n);
  const double th = angle_deg * M_PI / 180.0;
  const double c = std::cos(th), s = std::sin(th), ic = 1.0 - c;
  // Rodrigues formula, right-hand convention.
  return Mat3{{{c + u[0] * u[0] * ic, u[0] * u[1] * ic - u[2] * s, u[0] * u[2] * ic + u[1] * s},
               {u[1] * u[0] * ic + u[2] * s, c + u[1] * u[1] * ic, u[1] * u[2] * ic - u[0] * s},
               {u[2] * u[0] * ic - u[1] * s, u[2] * u[1] * ic + u[0] * s,
                c + u[2] * u[2] * ic}}};
}

void PlacementSpec::validate() const {
  for (double gv : per_axis_gain)
    if (!(gv > 0.0) || !std::isfinite(gv)) throw Error("PlacementSpec: gains must be positive");
  if (extra_noise_std_g < 0.0) throw Error("PlacementSpec: negative noise");
}

PlacementSpec placement_preset(const std::string& name) {
  PlacementSpec p;
  if (name == "waist->arm") {
    p.rotation = {{0.0, 0.0, 1.0}, 60.0};
    p.per_axis_gain = {1.3, 1.3, 0.9};
    p.extra_noise_std_g = 0.02;
  } else if (name == "waist->chest") {
    p.rotation = {{1.0, 0.0, 0.0}, 30.0};
    p.per_axis_gain = {1.1, 0.95, 1.05};
    p.extra_noise_std_g = 0.01;
  } else {
    throw Error("placement_preset: unknown preset '" + name + "'");
  }
  return p;
}

void DriftSpec::validate() const {
  if (effective_rate_hz <= 0.0 || nominal_rate_hz <= 0.0)
    throw Error("DriftSpec: rates must be positive");
  const double r = ratio();
  if (r < 0.5 || r > 2.0) throw Error("DriftSpec: ratio outside supported range [0.5, 2.0]");
}

Window apply_rotation(const Window& w, const RotationSpec& r) {
  if (w.channels < 3) throw Error("apply_rotation: need >= 3 channels");
  const Mat3 m = r.matrix();
  Window out = w;
  for (int t = 0; t < w.time_len; ++t) {
    const Vec3 a{w.at(t, 0), w.at(t, 1), w.at(t, 2)};
    for (int i = 0; i < 3; ++i) out.at(t, i) = dot(m[i], a);
  }
  return out;
}

Window apply_sampling_drift(const Window& w, const DriftSpec& d) {
  d.validate();
  const double r = d.ratio();
  Window out = w;
  if (r == 1.0) return out;
  const int T = w.time_len;
  for (int t = 0; t < T; ++t) {
    // Content the effective-rate sampler would have recorded at slot t,
    // expressed in nominal-grid index units, edge-clamped.
    const double pos = std::min(static_cast<double>(t) / r, static_cast<double>(T - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, T - 1);
    const double frac = pos - lo;
    for (int c = 0; c < w.channels; ++c)
      out.at(t, c) = (1.0 - frac) * w.at(lo, c) + frac * w.at(hi, c);
  }
  return out;
}

Window apply_placement(const Window& w, const PlacementSpec& p, Rng& rng) {
  p.validate();
  Window out = apply_rotation(w, p.rotation);
  for (int t = 0; t < out.time_len; ++t)
    for (int c = 0; c < 3; ++c) {
      out.at(t, c) *= p.per_axis_gain[c];
      if (p.extra_noise_std_g > 0.0) out.at(t, c) += rng.normal(0.0, p.extra_noise_std_g);
    }
  return out;
}

StreamSchedule apply_compound(const StreamSchedule& schedule,
                              const std::vector<CompoundStage>& stages, uint64_t seed,
                              std::vector<AppliedShifts>* applied_out) {
  std::vector<CompoundStage> ordered = stages;
  std::sort(ordered.begin(), ordered.end(),
            [](const CompoundStage& a, const CompoundStage& b) {
              return a.start_step < b.start_step;
            });
  std::set<int64_t> starts;
  for (const auto& st : ordered)
    if (!starts.insert(st.start_step).second)
      throw Error("apply_compound: duplicate stage start_step");

  StreamSchedule out = schedule;
  if (applied_out) applied_out->assign(schedule.batches.size(), {});

  for (size_t bi = 0; bi < out.batches.size(); ++bi) {
    const auto step = static_cast<int64_t>(bi);
    AppliedShifts flags;
    // Per-batch generator keyed by batch index keeps the pass parallelizable
    // and independent of batch visit order.
    Rng rng(mix_seed(seed, 0xc03d0000ull + bi));
    for (const auto& st : ordered) {
      if (st.start_step > step) break;
      for (Window& w : out.batches[bi].windows) {
        if (st.rotation) w = apply_rotation(w, *st.rotation);
        if (st.placement) w = apply_placement(w, *st.placement, rng);
        if (st.drift) w = apply_sampling_drift(w, *st.drift);
      }
      flags.rotation |= st.rotation.has_value();
      flags.placement |= st.placement.has_value();
      flags.drift |= st.drift.has_value();
    }
    if (applied_out) (*applied_out)[bi] = flags;
  }
  return out;
}

}  // namespace pitta
