#pragma once
// Factorized physical shifts and compound schedules: device-frame rotation,
// placement change (modeled as rotation + per-axis gain + extra noise), and
// sampling-rate drift (time-axis warp via linear interpolation). Channels
// beyond the accelerometer triad pass through unchanged.

#include <array>
#include <optional>
#include <vector>

#include "pitta/rng.hpp"
#include "pitta/window.hpp"

namespace pitta {

using Mat3 = std::array<Vec3, 3>;  // row-major 3x3

struct RotationSpec {
  Vec3 axis{0.0, 0.0, 1.0};
  double angle_deg = 0.0;

  // Rodrigues rotation matrix; R^T R = I and det R = 1 to 1e-9.
  Mat3 matrix() const;
};

struct PlacementSpec {
  RotationSpec rotation;
  Vec3 per_axis_gain{1.0, 1.0, 1.0};
  double extra_noise_std_g = 0.0;

  void validate() const;
};

// Named presets documenting their parameters ("waist->arm", "waist->chest").
PlacementSpec placement_preset(const std::string& name);

struct DriftSpec {
  double effective_rate_hz = 100.0;  // what the hardware actually does
  double nominal_rate_hz = 100.0;    // what the model believes

  double ratio() const { return effective_rate_hz / nominal_rate_hz; }
  // Supported range: ratio in [0.5, 2.0].
  void validate() const;
};

// A stage activates at start_step and stays active; later stages accumulate
// on top of earlier ones. Within the accumulated set the operator order is
// fixed: rotation -> placement -> drift.
struct CompoundStage {
  int64_t start_step = 0;
  std::optional<RotationSpec> rotation;
  std::optional<PlacementSpec> placement;
  std::optional<DriftSpec> drift;
};

// Which operators were applied to a batch (instrumentation for traces).
struct AppliedShifts {
  bool rotation = false;
  bool placement = false;
  bool drift = false;
};

// First three channels replaced by R*a per time step; label/rate preserved.
Window apply_rotation(const Window& w, const RotationSpec& r);

// Signal re-timed by ratio = effective/nominal via linear interpolation, then
// brought back to exactly T samples (edge-clamped). The output window still
// reports the nominal rate: the model is unaware of the drift.
Window apply_sampling_drift(const Window& w, const DriftSpec& d);

// Rotation, then per-axis gain, then additive Gaussian noise drawn from the
// run-context generator.
Window apply_placement(const Window& w, const PlacementSpec& p, Rng& rng);

// Applies the union of all stages with start_step <= batch step to each
// batch; the region before the first stage is untouched. Duplicate
// start_steps are rejected. applied_out (optional) records per-batch flags.
StreamSchedule apply_compound(const StreamSchedule& schedule,
                              const std::vector<CompoundStage>& stages, uint64_t seed,
                              std::vector<AppliedShifts>* applied_out = nullptr);

}  // namespace pitta
