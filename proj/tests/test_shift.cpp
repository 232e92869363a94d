// Shift operators: rotation algebra, drift warping against DFT oracles,
// placement presets, compound accumulation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pitta/adapt.hpp"
#include "pitta/oracles.hpp"
#include "pitta/shift.hpp"
#include "pitta/synth.hpp"

using namespace pitta;

namespace {

Window sine_window(int T, double f, double rate) {
  Window w;
  w.time_len = T;
  w.channels = 3;
  w.nominal_rate_hz = rate;
  w.samples.resize(static_cast<size_t>(T) * 3, 0.0);
  for (int t = 0; t < T; ++t) w.at(t, 0) = std::sin(2.0 * M_PI * f * t / rate);
  return w;
}

Window const_window(const Vec3& v, int T = 8) {
  Window w;
  w.time_len = T;
  w.channels = 3;
  w.nominal_rate_hz = 100.0;
  w.samples.resize(static_cast<size_t>(T) * 3);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < 3; ++c) w.at(t, c) = v[c];
  return w;
}

int dominant_bin_ch0(const Window& w) {
  const int n = w.time_len;
  int best = 1;
  double best_p = -1.0;
  for (int k = 1; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * k * t / n;
      re += w.at(t, 0) * std::cos(ang);
      im += w.at(t, 0) * std::sin(ang);
    }
    const double p = re * re + im * im;
    if (p > best_p) {
      best_p = p;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("rotation matrix is orthonormal with unit determinant") {
  for (double deg : {0.0, 30.0, 60.0, 90.0, 123.4}) {
    RotationSpec r{{0.3, -0.5, 0.81}, deg};
    const Mat3 m = r.matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double rtr = 0.0;
        for (int k = 0; k < 3; ++k) rtr += m[k][i] * m[k][j];
        CHECK(std::abs(rtr - (i == j ? 1.0 : 0.0)) < 1e-9);
      }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    CHECK(std::abs(det - 1.0) < 1e-9);
  }
}

TEST_CASE("apply_rotation identity and axis algebra") {
  const Window w = const_window({0.0, 0.0, 1.0});
  const Window same = apply_rotation(w, {{0.0, 0.0, 1.0}, 0.0});
  for (size_t i = 0; i < w.samples.size(); ++i) CHECK(same.samples[i] == doctest::Approx(w.samples[i]));

  // 90 degrees about x, right-hand convention: (0,0,1) -> (0,-1,0).
  const Window rot = apply_rotation(w, {{1.0, 0.0, 0.0}, 90.0});
  CHECK(rot.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rot.at(0, 1) == doctest::Approx(-1.0));
  CHECK(rot.at(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rotation preserves per-sample norms") {
  Rng rng(5);
  Window w;
  w.time_len = 1000;
  w.channels = 3;
  w.nominal_rate_hz = 100.0;
  w.samples.resize(3000);
  for (auto& v : w.samples) v = rng.normal();
  const Window rot = apply_rotation(w, {{0.2, 0.9, -0.4}, 73.0});
  for (int t = 0; t < w.time_len; ++t) {
    const double n0 = std::hypot(w.at(t, 0), std::hypot(w.at(t, 1), w.at(t, 2)));
    const double n1 = std::hypot(rot.at(t, 0), std::hypot(rot.at(t, 1), rot.at(t, 2)));
    CHECK(std::abs(n0 - n1) < 1e-9);
  }
}

TEST_CASE("sampling drift: identity at ratio 1") {
  const Window w = sine_window(128, 2.0, 100.0);
  const Window out = apply_sampling_drift(w, {100.0, 100.0});
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(out.samples[i] - w.samples[i]) < 1e-12);
}

TEST_CASE("sampling drift moves the dominant bin as the oracle predicts") {
  // 2 Hz at 100 Hz nominal, effective 120 Hz: apparent 1.667 Hz.
  const Window w = sine_window(250, 2.0, 100.0);
  CHECK(dominant_bin_ch0(w) == 5);
  const Window warped = apply_sampling_drift(w, {120.0, 100.0});
  CHECK(warped.nominal_rate_hz == 100.0);
  CHECK(dominant_bin_ch0(warped) == oracles::drift_expected_bin());
  CHECK(oracles::drift_shifted_bin() == oracles::drift_expected_bin());
}

TEST_CASE("sampling drift rejects ratios outside [0.5, 2.0]") {
  const Window w = sine_window(64, 2.0, 100.0);
  CHECK_THROWS_AS(apply_sampling_drift(w, {40.0, 100.0}), Error);
  CHECK_THROWS_AS(apply_sampling_drift(w, {250.0, 100.0}), Error);
}

TEST_CASE("drift round-trip recovers low-frequency content") {
  // Linear interpolation bounds the recoverable band: the round-trip RMS
  // grows like (f/rate)^2, so the 1% contract is asserted for genuinely
  // low-frequency tones. The compressing direction clamps the window tail;
  // the comparison stays inside the valid (non-clamped) region.
  for (double f : {2.0, 3.0}) {
    const Window w = sine_window(256, f, 100.0);
    for (double ratio_hz : {120.0, 80.0}) {
      const Window fwd = apply_sampling_drift(w, {ratio_hz, 100.0});
      const Window back = apply_sampling_drift(fwd, {100.0 * 100.0 / ratio_hz, 100.0});
      const int lo = 8;
      const int hi = static_cast<int>(w.time_len * std::min(1.0, 100.0 / ratio_hz)) - 2;
      double err = 0.0, ref = 0.0;
      for (int t = lo; t < hi; ++t) {
        err += (back.at(t, 0) - w.at(t, 0)) * (back.at(t, 0) - w.at(t, 0));
        ref += w.at(t, 0) * w.at(t, 0);
      }
      CHECK(std::sqrt(err / ref) < 0.01);
    }
  }
}

TEST_CASE("drift changes spectral entropy by a finite amount") {
  const Window w = sine_window(256, 4.0, 100.0);
  const Window warped = apply_sampling_drift(w, {70.0, 100.0});
  auto se_of = [](const Window& win) {
    Tensor x({1, 3, win.time_len});
    for (int t = 0; t < win.time_len; ++t)
      for (int c = 0; c < 3; ++c) x.at3(0, c, t, 3, win.time_len) = win.at(t, c);
    return spectral_entropy(psd(x, 1e-8), 1e-8);
  };
  const double before = se_of(w), after = se_of(warped);
  CHECK(std::isfinite(before));
  CHECK(std::isfinite(after));
  CHECK(before != after);
}

TEST_CASE("placement: identity preset and gain algebra") {
  Rng rng(9);
  PlacementSpec ident;
  const Window w = const_window({0.4, -0.2, 0.8});
  const Window out = apply_placement(w, ident, rng);
  for (size_t i = 0; i < w.samples.size(); ++i) CHECK(out.samples[i] == doctest::Approx(w.samples[i]));

  PlacementSpec gains;
  gains.per_axis_gain = {1.5, 1.0, 1.0};
  const Window g = apply_placement(const_window({1.0, 0.0, 0.0}), gains, rng);
  CHECK(g.at(0, 0) == doctest::Approx(1.5));
  CHECK(g.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("waist->arm preset matches the closed-form gravity magnitude") {
  PlacementSpec p = placement_preset("waist->arm");
  p.extra_noise_std_g = 0.0;  // deterministic check of the linear part
  Rng rng(1);
  const Window out = apply_placement(const_window({1.0, 0.0, 0.0}, 16), p, rng);
  Vec3 mean{0.0, 0.0, 0.0};
  for (int t = 0; t < out.time_len; ++t)
    for (int c = 0; c < 3; ++c) mean[c] += out.at(t, c);
  for (auto& m : mean) m /= out.time_len;
  CHECK(norm(mean) == doctest::Approx(oracles::placement_waist_arm_norm()).epsilon(1e-9));
  CHECK(norm(mean) > 1.1);  // the proxy leaves the feasible band under this preset
  CHECK_THROWS_AS(placement_preset("hip->ankle"), Error);
}

TEST_CASE("apply_compound accumulates stages and records applied operators") {
  std::map<int, std::vector<Window>> pools;
  for (int i = 0; i < 8; ++i) pools[0].push_back(sine_window(64, 2.0, 100.0));
  auto sched = class_sorted_stream(pools, 8, 1);

  SUBCASE("no stages is the identity") {
    auto out = apply_compound(sched, {}, 1);
    for (int64_t s = 0; s < sched.steps(); ++s)
      CHECK(out.batches[s].windows[0].samples == sched.batches[s].windows[0].samples);
  }

  SUBCASE("single rotation stage equals mapping apply_rotation") {
    CompoundStage st;
    st.start_step = 0;
    st.rotation = RotationSpec{{0.0, 1.0, 0.0}, 45.0};
    auto out = apply_compound(sched, {st}, 1);
    for (int64_t s = 0; s < sched.steps(); ++s) {
      const Window ref = apply_rotation(sched.batches[s].windows[0], *st.rotation);
      CHECK(out.batches[s].windows[0].samples == ref.samples);
    }
  }

  SUBCASE("staged operators activate at their start steps") {
    std::vector<CompoundStage> stages(3);
    stages[0].start_step = 2;
    stages[0].rotation = RotationSpec{{1.0, 0.0, 0.0}, 30.0};
    stages[1].start_step = 4;
    stages[1].placement = placement_preset("waist->arm");
    stages[2].start_step = 6;
    stages[2].drift = DriftSpec{120.0, 100.0};
    std::vector<AppliedShifts> applied;
    auto out = apply_compound(sched, stages, 1, &applied);
    REQUIRE(applied.size() == 8);
    CHECK((!applied[0].rotation && !applied[0].placement && !applied[0].drift));
    CHECK((applied[2].rotation && !applied[2].placement));
    CHECK((applied[5].rotation && applied[5].placement && !applied[5].drift));
    CHECK((applied[7].rotation && applied[7].placement && applied[7].drift));
    // The untouched region really is untouched.
    CHECK(out.batches[0].windows[0].samples == sched.batches[0].windows[0].samples);
  }

  SUBCASE("duplicate start steps are rejected") {
    std::vector<CompoundStage> stages(2);
    stages[0].start_step = 3;
    stages[1].start_step = 3;
    CHECK_THROWS_AS(apply_compound(sched, stages, 1), Error);
  }
}
