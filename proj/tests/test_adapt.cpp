// Adaptation engine: loss-term examples, EMA state updates, spectral ops,
// analytic-vs-finite-difference gradients (gates frozen at the base point),
// and the objective reduction identities.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "pitta/adapt.hpp"
#include "pitta/diagnostics.hpp"
#include "pitta/oracles.hpp"
#include "pitta/rng.hpp"
#include "test_util.hpp"

using namespace pitta;
using namespace pitta_test;

namespace {

PittaConfig default_cfg() {
  PittaConfig cfg;
  return cfg;
}

// Warm an AdaptState with a few engine steps so every loss term is active.
AdaptState warmed_state(Backbone& model, const std::vector<Window>& pool, const PittaConfig& cfg,
                        int steps) {
  AdaptState st;
  for (int i = 0; i < steps; ++i) {
    Batch b = take_batch(pool, static_cast<size_t>(i) * 4, 4);
    PittaConfig frozen_cfg = cfg;
    frozen_cfg.eta = 0.0;  // warm the references without moving parameters
    engine_step(model, b, st, frozen_cfg, Method::kPitta);
  }
  return st;
}

uint64_t adaptable_checksum(const Backbone& m) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor* t : m.adaptable_tensors()) h = fnv1a64(t->data, h);
  return h;
}

}  // namespace

TEST_CASE("entropy_loss closed-form values") {
  CHECK(entropy_loss({0.25, 0.25, 0.25, 0.25}, 1, 4) == doctest::Approx(std::log(4.0)));
  CHECK(entropy_loss({1.0, 0.0, 0.0, 0.0}, 1, 4) == doctest::Approx(0.0));
  CHECK(entropy_loss({0.5, 0.5, 0.0, 0.0}, 1, 4) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(entropy_loss({1.2, -0.2}, 1, 2), Error);
}

TEST_CASE("project_band three-case rule and idempotence") {
  const Vec3 inside{0.0, 0.0, 1.0};
  CHECK(project_band(inside) == inside);

  const Vec3 above = project_band({2.0, 0.0, 0.0});
  CHECK(above[0] == doctest::Approx(1.1).epsilon(1e-12));

  const Vec3 below = project_band({0.45, 0.0, 0.0});
  CHECK(below[0] == doctest::Approx(0.9).epsilon(1e-9));

  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    Vec3 u{rng.normal(), rng.normal(), rng.normal()};
    const double target = std::exp(rng.uniform(std::log(1e-3), std::log(5.0)));
    const double n0 = norm(u);
    if (n0 > 0) u = scale(u, target / n0);
    const Vec3 p = project_band(u);
    const Vec3 pp = project_band(p);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(pp[c] - p[c]) <= 1e-12);
    const double np = norm(p);
    CHECK(np >= 0.9 - 1e-9);
    CHECK(np <= 1.1 + 1e-9);
  }
}

TEST_CASE("gravity_loss examples") {
  PittaConfig cfg = default_cfg();

  SUBCASE("in band with aligned reference is ~0") {
    const Vec3 g{0.0, 0.0, 1.0};
    CHECK(gravity_loss(g, g, cfg) < 1e-6);
  }
  SUBCASE("band distance squared") {
    PittaConfig c0 = cfg;
    c0.lambda_dir = 0.0;
    CHECK(gravity_loss({1.3, 0.0, 0.0}, {1.0, 0.0, 0.0}, c0) == doctest::Approx(0.04));
  }
  SUBCASE("orthogonal reference costs lambda_dir") {
    PittaConfig c1 = cfg;
    c1.lambda_dir = 1.0;
    CHECK(gravity_loss({1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, c1) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("direction term suppressed during reference warm-up") {
    PittaConfig c1 = cfg;
    c1.lambda_dir = 1.0;
    CHECK(gravity_loss({1.0, 0.0, 0.0}, {0.0, 0.1, 0.0}, c1) == doctest::Approx(0.0));
  }
}

TEST_CASE("gravity_gate values and monotonicity") {
  PittaConfig cfg = default_cfg();
  cfg.lambda_grav = 2.0;
  cfg.tau_g = 0.1;
  CHECK(gravity_gate(0.0, cfg) == doctest::Approx(2.0));
  CHECK(gravity_gate(0.1, cfg) == doctest::Approx(2.0 / std::exp(1.0)));
  double prev = gravity_gate(0.0, cfg);
  for (double v = 0.01; v < 2.0; v += 0.01) {
    const double g = gravity_gate(v, cfg);
    CHECK(g <= prev);
    CHECK(g > 0.0);
    prev = g;
  }
  CHECK_THROWS_AS(gravity_gate(-1.0, cfg), Error);
}

TEST_CASE("g_ref_update EMA behavior") {
  PittaConfig cfg = default_cfg();
  const Vec3 ref{0.0, 1.0, 0.0};

  cfg.alpha_r = 1.0;
  CHECK(g_ref_update(ref, {1.0, 0.0, 0.0}, cfg, true) == ref);

  cfg.alpha_r = 0.0;
  const Vec3 out = g_ref_update(ref, {0.0, 0.0, 2.0}, cfg, true);
  CHECK(out[2] == doctest::Approx(1.0).epsilon(1e-6));

  cfg.alpha_r = 0.5;
  CHECK(g_ref_update(ref, {5.0, 5.0, 5.0}, cfg, false) == ref);
}

TEST_CASE("temporal_gate shape") {
  PittaConfig cfg = default_cfg();
  cfg.tau_c = 0.6;
  cfg.tau_h = 0.55;
  CHECK(temporal_gate(0.9, 0.1, true, cfg, 3) == 0.0);
  CHECK(temporal_gate(0.6, 0.55, false, cfg, 3) == doctest::Approx(0.25));
  cfg.kappa_c = 200.0;
  cfg.kappa_h = 200.0;
  CHECK(temporal_gate(1.0, 0.0, false, cfg, 3) > 0.999);
  CHECK_THROWS_AS(temporal_gate(1.5, 0.1, false, cfg, 3), Error);
}

TEST_CASE("temporal_loss second-difference algebra") {
  const std::vector<double> e{1.0, 0.0};
  std::vector<double> z0{0.0, 0.0};

  // Constant trajectory.
  CHECK(temporal_loss(e, e, e, 1.0) == doctest::Approx(0.0));

  // Linear trajectory z_t = t*v is annihilated.
  const std::vector<double> v{0.3, -0.2};
  std::vector<double> z1{0.3, -0.2}, z2{0.6, -0.4};
  CHECK(temporal_loss(z2, z1, z0, 1.0) == doctest::Approx(0.0));

  // Quadratic z_t = t^2 * e: second difference is 2e.
  std::vector<double> q0{0.0, 0.0}, q1{1.0, 0.0}, q2{4.0, 0.0};
  CHECK(temporal_loss(q2, q1, q0, 1.0) == doctest::Approx(4.0));
  CHECK(temporal_loss(q2, q1, q0, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(temporal_loss({1.0}, {1.0, 2.0}, {1.0}, 1.0), Error);
}

TEST_CASE("psd: pure sinusoid mass, white-noise flatness, degenerate input") {
  SUBCASE("sinusoid concentrates at its bin") {
    const int T = 64;
    Tensor x({1, 1, T});
    for (int t = 0; t < T; ++t) x.data[t] = std::sin(2.0 * M_PI * 8.0 * t / T);
    bool degen = true;
    const auto p = psd(x, 1e-8, &degen);
    CHECK_FALSE(degen);
    REQUIRE(p.size() == 32);
    CHECK(p[7] > 0.99);  // bin 8, DC excluded
  }
  SUBCASE("aggregated white noise is near-uniform") {
    const int B = 64, C = 3, T = 256;
    Rng rng(1234);
    Tensor x({B, C, T});
    for (auto& v : x.data) v = rng.normal();
    const auto p = psd(x, 1e-8);
    const double se = spectral_entropy(p, 1e-8);
    CHECK(se > 0.95 * std::log(128.0));
  }
  SUBCASE("constant input degenerates to uniform") {
    Tensor x({2, 3, 32});
    for (auto& v : x.data) v = 0.77;
    bool degen = false;
    const auto p = psd(x, 1e-8, &degen);
    CHECK(degen);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 16.0));
  }
}

TEST_CASE("js_divergence axioms and the two-bin oracle") {
  const double eps = 1e-8;
  CHECK(js_divergence({0.3, 0.7}, {0.3, 0.7}, eps) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(js_divergence({1.0, 0.0}, {0.0, 1.0}, eps) ==
        doctest::Approx(oracles::js_two_bin()).epsilon(1e-12));

  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(8), q(8);
    double sp = 0.0, sq = 0.0;
    for (int k = 0; k < 8; ++k) {
      p[k] = rng.uniform() + 1e-6;
      q[k] = rng.uniform() + 1e-6;
      sp += p[k];
      sq += q[k];
    }
    for (int k = 0; k < 8; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    const double ab = js_divergence(p, q, eps);
    const double ba = js_divergence(q, p, eps);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(ab >= -1e-6);
  }
  CHECK_THROWS_AS(js_divergence({1.0}, {0.5, 0.5}, eps), Error);
}

TEST_CASE("spectral_entropy values") {
  const double eps = 1e-8;
  std::vector<double> uniform(64, 1.0 / 64.0);
  CHECK(std::abs(spectral_entropy(uniform, eps) - std::log(64.0)) < 1e-5);

  std::vector<double> onehot(16, 0.0);
  onehot[3] = 1.0;
  CHECK(std::abs(spectral_entropy(onehot, eps)) < 1e-7);

  CHECK(spectral_entropy({0.5, 0.5, 0.0, 0.0}, eps) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("gravity_state_update EMA degenerate cases and convergence") {
  // Constructed psi with known unit map: psi = 0, stats mean = g, var = 0.
  Tensor psi({2, 3, 8});
  PsiStats stats;
  stats.kind = NormKind::kBatch;
  stats.per_instance = false;
  stats.mean = Tensor({3}, {0.0, 0.0, 1.0});
  stats.var = Tensor({3});

  PittaConfig cfg = default_cfg();
  AdaptState st;

  SUBCASE("alpha_g = 0 tracks a_bar exactly") {
    cfg.alpha_g = 0.0;
    const auto u = gravity_state_update(psi, stats, 1e-5, st, cfg);
    CHECK(u.g_hat[2] == doctest::Approx(1.0));
    CHECK(u.v_t == doctest::Approx(0.0));
  }
  SUBCASE("alpha_g = 1 keeps the previous estimate") {
    cfg.alpha_g = 1.0;
    st.g_hat_ema = {0.1, 0.2, 0.3};
    st.g_hat_obs = 5;
    const auto u = gravity_state_update(psi, stats, 1e-5, st, cfg);
    CHECK(u.g_hat == Vec3{0.1, 0.2, 0.3});
  }
  SUBCASE("50 EMA steps land within 0.01 g of ground truth") {
    cfg.alpha_g = 0.9;
    for (int i = 0; i < 50; ++i) {
      const auto u = gravity_state_update(psi, stats, 1e-5, st, cfg);
      st.g_hat_ema = u.g_ema_new;
      st.g_hat_obs += 1;
    }
    const Vec3 g = st.g_hat(cfg.alpha_g);
    CHECK(norm(sub(g, {0.0, 0.0, 1.0})) < 0.01);
  }
}

TEST_CASE("loss breakdown recomposes exactly from parts") {
  auto pools = window_pools(20.0, 51);
  Backbone model = pretrained_model(pools, small_backbone(), 23, 6);
  PittaConfig cfg = default_cfg();
  AdaptState st;
  const auto stream = flatten(pools);
  for (int i = 0; i < 12; ++i) {
    Batch b = take_batch(stream, static_cast<size_t>(i) * 8, 8);
    const auto out = pitta_step(model, b, st, cfg);
    const double recomposed = out.lb.l_stat + cfg.lambda_temp * out.lb.l_temp +
                              out.lb.lambda_grav_t * out.lb.l_grav +
                              out.lb.lambda_spec_t * out.lb.l_spec;
    CHECK(std::abs(out.lb.total - recomposed) <= 1e-9);
    CHECK(out.lb.lambda_grav_t > 0.0);
    CHECK(out.lb.lambda_grav_t <= cfg.lambda_grav);
    CHECK(out.lb.w_t_mean >= 0.0);
    CHECK(out.lb.w_t_mean <= 1.0);
  }
}

TEST_CASE("analytic gradients match finite differences per loss term") {
  auto pools = window_pools(20.0, 52);
  BackboneConfig bc = small_backbone();
  Backbone model = pretrained_model(pools, bc, 29, 5);
  PittaConfig cfg = default_cfg();
  const auto stream = flatten(pools);
  AdaptState st = warmed_state(model, stream, cfg, 10);
  REQUIRE(norm(st.g_ref) >= 0.5);  // direction term active

  Batch b = take_batch(stream, 40, 4);

  // Base evaluation: record gate values and node ids.
  ForwardPass fp0 = forward(model, b, StatsMode::kTrain, GradScope::kAdaptable);
  LossBuildResult base = build_losses(fp0, model, st, cfg, true);
  const GateValues gates = base.gates;

  struct TermCase {
    const char* name;
    int LossBuildResult::*node;
  };
  const TermCase terms[] = {{"l_stat", &LossBuildResult::l_stat},
                            {"l_grav", &LossBuildResult::l_grav},
                            {"l_temp", &LossBuildResult::l_temp},
                            {"l_spec", &LossBuildResult::l_spec},
                            {"total", &LossBuildResult::total}};

  auto eval_term = [&](int LossBuildResult::*node) {
    ForwardPass fp = forward(model, b, StatsMode::kTrain, GradScope::kNone);
    LossBuildResult r = build_losses(fp, model, st, cfg, true, &gates);
    return fp.tape->scalar(r.*node);
  };

  for (const auto& term : terms) {
    CAPTURE(term.name);
    ForwardPass fp = forward(model, b, StatsMode::kTrain, GradScope::kAdaptable);
    LossBuildResult r = build_losses(fp, model, st, cfg, true, &gates);
    fp.tape->backward(r.*(term.node));

    auto params = model.adaptable_tensors();
    const double h = 1e-5;
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
      const Tensor g = fp.tape->grad_of(fp.adaptable_leaves[pi]);
      for (size_t j = 0; j < params[pi]->numel(); ++j) {
        const double saved = params[pi]->data[j];
        params[pi]->data[j] = saved + h;
        const double up = eval_term(term.node);
        params[pi]->data[j] = saved - h;
        const double dn = eval_term(term.node);
        params[pi]->data[j] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(g.data[j]), 1e-4});
        max_rel = std::max(max_rel, std::abs(fd - g.data[j]) / denom);
      }
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("pitta with zero physics weights is bitwise identical to tent") {
  auto pools = window_pools(20.0, 53);
  Backbone m1 = pretrained_model(pools, small_backbone(), 31, 5);
  Backbone m2 = m1;
  const auto stream = flatten(pools);

  PittaConfig zero = default_cfg();
  zero.lambda_temp = zero.lambda_grav = zero.lambda_spec = 0.0;
  zero.eta = 1e-2;
  PittaConfig tent_cfg = default_cfg();
  tent_cfg.eta = 1e-2;

  AdaptState s1, s2;
  for (int i = 0; i < 25; ++i) {
    Batch b = take_batch(stream, static_cast<size_t>(i) * 8, 8);
    const auto o1 = pitta_step(m1, b, s1, zero);
    const auto o2 = tent_step(m2, b, s2, tent_cfg);
    REQUIRE(o1.preds == o2.preds);
    REQUIRE(adaptable_checksum(m1) == adaptable_checksum(m2));
    CHECK(o1.lb.total == o2.lb.total);
    CHECK(o1.g_hat_norm == o2.g_hat_norm);
  }
  CHECK(m1.frozen_checksum() == m2.frozen_checksum());
}

TEST_CASE("no-update configurations reduce to source-only") {
  auto pools = window_pools(20.0, 54);
  Backbone m1 = pretrained_model(pools, small_backbone(), 37, 5);
  Backbone m2 = m1;
  Backbone m3 = m1;
  const auto stream = flatten(pools);

  PittaConfig never = default_cfg();
  never.update_interval = 0;  // K = infinity
  PittaConfig zero_eta = default_cfg();
  zero_eta.eta = 0.0;
  PittaConfig src_cfg = default_cfg();

  AdaptState s1, s2, s3;
  const uint64_t a0 = adaptable_checksum(m1);
  for (int i = 0; i < 15; ++i) {
    Batch b = take_batch(stream, static_cast<size_t>(i) * 8, 8);
    const auto o1 = pitta_step(m1, b, s1, never);
    const auto o2 = pitta_step(m2, b, s2, zero_eta);
    const auto o3 = engine_step(m3, b, s3, src_cfg, Method::kSourceOnly);
    REQUIRE(o1.preds == o3.preds);
    REQUIRE(o2.preds == o3.preds);
    CHECK(adaptable_checksum(m1) == a0);
    CHECK(adaptable_checksum(m2) == a0);
    CHECK(adaptable_checksum(m3) == a0);
  }
}

TEST_CASE("update interval K gates the update steps") {
  auto pools = window_pools(20.0, 55);
  Backbone model = pretrained_model(pools, small_backbone(), 41, 5);
  const auto stream = flatten(pools);
  PittaConfig cfg = default_cfg();
  cfg.update_interval = 5;
  AdaptState st;
  int updates = 0;
  for (int i = 0; i < 20; ++i) {
    Batch b = take_batch(stream, static_cast<size_t>(i) * 8, 8);
    const auto out = pitta_step(model, b, st, cfg);
    if (out.updated) ++updates;
    CHECK(out.update_due == (i % 5 == 0));
  }
  CHECK(updates == 4);
}

TEST_CASE("static noiseless 1g stream keeps the proxy in band") {
  ActivitySpec s;
  s.kind = ActivityKind::kStatic;
  s.gravity_dir = {0.0, 0.0, 1.0};
  s.noise_std_g = 0.0;
  int n = 0;
  const auto sig = gen_static(s, 100.0, 140.0, 61, &n);
  auto ws = make_windows(sig, n, 3, 64, 32, 0, 100.0);

  // Pretraining needs two classes; adapt on the static stream only.
  auto pools = window_pools(20.0, 56);
  Backbone model = pretrained_model(pools, small_backbone(), 43, 5);

  PittaConfig cfg = default_cfg();
  AdaptState st;
  int in_band = 0, steps = 0;
  for (int i = 0; i + 4 <= static_cast<int>(ws.size()) && steps < 200; i += 4, ++steps) {
    Batch b;
    b.windows.assign(ws.begin() + i, ws.begin() + i + 4);
    const auto out = pitta_step(model, b, st, cfg);
    if (!out.violation) ++in_band;
  }
  REQUIRE(steps >= 100);
  CHECK(static_cast<double>(in_band) / steps >= 0.95);
}

TEST_CASE("non-finite loss skips the update and rolls back state") {
  auto pools = window_pools(10.0, 57);
  Backbone model = pretrained_model(pools, small_backbone(), 47, 3);
  const auto stream = flatten(pools);
  PittaConfig cfg = default_cfg();
  AdaptState st;
  Batch b = take_batch(stream, 0, 4);
  pitta_step(model, b, st, cfg);

  const AdaptState before = st;
  const uint64_t adaptable_before = adaptable_checksum(model);
  model.fc_out_w.data[0] = std::nan("");  // poisons the logits, hence l_stat
  const auto out = pitta_step(model, take_batch(stream, 8, 4), st, cfg);
  CHECK(out.skipped_nonfinite);
  CHECK_FALSE(out.updated);
  CHECK(st.g_hat_ema == before.g_hat_ema);
  CHECK(st.g_ref == before.g_ref);
  CHECK(st.p_ref == before.p_ref);
  CHECK(st.step == before.step + 1);
  CHECK(adaptable_checksum(model) == adaptable_before);
}

TEST_CASE("spectral reference EMA: alpha_s = 1 freezes the reference") {
  auto pools = window_pools(10.0, 58);
  Backbone model = pretrained_model(pools, small_backbone(), 53, 3);
  const auto stream = flatten(pools);
  PittaConfig cfg = default_cfg();
  cfg.alpha_s = 1.0;
  AdaptState st;
  pitta_step(model, take_batch(stream, 0, 4), st, cfg);
  const auto ref0 = st.p_ref;
  for (int i = 1; i < 5; ++i) pitta_step(model, take_batch(stream, i * 4, 4), st, cfg);
  CHECK(st.p_ref == ref0);
}

TEST_CASE("entropy-weighted spectral gate stays in (0, lambda_spec]") {
  auto pools = window_pools(10.0, 59);
  Backbone model = pretrained_model(pools, small_backbone(), 59, 3);
  const auto stream = flatten(pools);
  PittaConfig cfg = default_cfg();
  cfg.gamma_spec_mode = GammaSpecMode::kEntropyWeighted;
  AdaptState st;
  for (int i = 0; i < 5; ++i) {
    const auto out = pitta_step(model, take_batch(stream, i * 4, 4), st, cfg);
    CHECK(out.lb.lambda_spec_t > 0.0);
    CHECK(out.lb.lambda_spec_t <= cfg.lambda_spec);
  }
}

TEST_CASE("spectral estimation cost scales like T log T") {
  // Ratio of per-call time for 2T vs T stays near 2 (well under 4 = T^2).
  const int B = 8, C = 3;
  Rng rng(71);
  auto run_ms = [&](int T) {
    Tensor x({B, C, T});
    for (auto& v : x.data) v = rng.normal();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 50; ++i) psd(x, 1e-8);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  run_ms(512);  // warm-up
  std::vector<double> ratios;
  for (int rep = 0; rep < 3; ++rep) ratios.push_back(run_ms(1024) / run_ms(512));
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[1] <= 2.4);
}
