#include "pitta/adapt.hpp"

#include <algorithm>
#include <cmath>

#include "pitta/fft.hpp"

namespace pitta {

namespace {

// Pure zero guard for normalizing directions / projecting; intentionally far
// below cfg.epsilon so the projection stays idempotent to machine precision.
constexpr double kZeroGuard = 1e-30;

// Aggregated spectra below this total power are treated as degenerate
// (constant input); the spectrum is then reported as uniform.
constexpr double kDegeneratePower = 1e-20;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void PittaConfig::validate() const {
  auto nn = [](double v, const char* name) {
    if (v < 0.0 || !std::isfinite(v)) throw Error(std::string("PittaConfig: bad ") + name);
  };
  nn(lambda_temp, "lambda_temp");
  nn(lambda_grav, "lambda_grav");
  nn(lambda_spec, "lambda_spec");
  nn(lambda_dir, "lambda_dir");
  nn(lambda_se, "lambda_se");
  auto unit = [](double v, const char* name) {
    if (v < 0.0 || v > 1.0) throw Error(std::string("PittaConfig: ") + name + " outside [0,1]");
  };
  unit(alpha_g, "alpha_g");
  unit(alpha_r, "alpha_r");
  unit(alpha_s, "alpha_s");
  if (tau_g <= 0.0) throw Error("PittaConfig: tau_g must be positive");
  if (epsilon <= 0.0) throw Error("PittaConfig: epsilon must be positive");
  if (eta < 0.0) throw Error("PittaConfig: eta must be nonnegative");
  if (update_interval < 0) throw Error("PittaConfig: update_interval must be >= 0");
  if (reliable_vt_factor <= 0.0) throw Error("PittaConfig: reliable_vt_factor must be positive");
}

double PittaConfig::resolved_tau_h(int num_classes) const {
  return tau_h > 0.0 ? tau_h : 0.5 * std::log(static_cast<double>(num_classes));
}

Vec3 AdaptState::g_hat(double alpha_g) const {
  if (g_hat_obs <= 0) return g_hat_ema;
  if (alpha_g >= 1.0) return g_hat_ema;
  const double corr = 1.0 - std::pow(alpha_g, static_cast<double>(g_hat_obs));
  return scale(g_hat_ema, 1.0 / corr);
}

// --- standalone operations ----------------------------------------------------

double entropy_loss(const std::vector<double>& probs, int batch, int num_classes) {
  if (probs.size() != static_cast<size_t>(batch) * num_classes)
    throw Error("entropy_loss: size mismatch");
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    double h = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double p = probs[static_cast<size_t>(b) * num_classes + k];
      if (p < 0.0) throw Error("entropy_loss: negative probability");
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return total / batch;
}

Vec3 project_band(const Vec3& u) {
  const double n = norm(u);
  if (n < 0.9) return scale(u, 0.9 / (n + kZeroGuard));
  if (n > 1.1) return scale(u, 1.1 / (n + kZeroGuard));
  return u;
}

double gravity_loss(const Vec3& g_hat, const Vec3& g_ref, const PittaConfig& cfg) {
  const Vec3 proj = project_band(g_hat);
  const Vec3 d = sub(g_hat, proj);
  double loss = dot(d, d);
  if (cfg.lambda_dir > 0.0 && norm(g_ref) >= 0.5) {
    const Vec3 unit = scale(g_hat, 1.0 / (norm(g_hat) + cfg.epsilon));
    loss += cfg.lambda_dir * (1.0 - dot(unit, g_ref));
  }
  return loss;
}

double gravity_gate(double v_t, const PittaConfig& cfg) {
  if (v_t < 0.0) throw Error("gravity_gate: negative variance");
  return cfg.lambda_grav * std::exp(-v_t / cfg.tau_g);
}

Vec3 g_ref_update(const Vec3& g_ref, const Vec3& g_hat, const PittaConfig& cfg, bool reliable) {
  if (!reliable) return g_ref;
  const Vec3 unit = scale(g_hat, 1.0 / (norm(g_hat) + cfg.epsilon));
  return add(scale(g_ref, cfg.alpha_r), scale(unit, 1.0 - cfg.alpha_r));
}

double temporal_gate(double c_t, double entropy_t, bool flipped, const PittaConfig& cfg,
                     int num_classes) {
  if (c_t < 0.0 || c_t > 1.0) throw Error("temporal_gate: confidence outside [0,1]");
  if (entropy_t < 0.0) throw Error("temporal_gate: negative entropy");
  if (flipped) return 0.0;
  const double th = cfg.resolved_tau_h(num_classes);
  return sigmoid(cfg.kappa_c * (c_t - cfg.tau_c)) * sigmoid(cfg.kappa_h * (th - entropy_t));
}

double temporal_loss(const std::vector<double>& z, const std::vector<double>& z_prev,
                     const std::vector<double>& z_prev2, double w) {
  if (z.size() != z_prev.size() || z.size() != z_prev2.size())
    throw Error("temporal_loss: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - 2.0 * z_prev[i] + z_prev2[i];
    s += d * d;
  }
  return w * s;
}

std::vector<double> psd(const Tensor& x, double epsilon, bool* degenerate) {
  (void)epsilon;
  if (x.shape.size() != 3) throw Error("psd: expected (B,C,T)");
  const int B = x.shape[0], C = x.shape[1], T = x.shape[2];
  if (T < 4) throw Error("psd: temporal length must be >= 4");
  const int F = T / 2;
  std::vector<double> s(F, 0.0);
  std::vector<double> row(T);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) row[t] = x.at3(b, c, t, C, T);
      const auto p = power_spectrum(row);
      for (int k = 0; k < F; ++k) s[k] += p[k];
    }
  double total = 0.0;
  for (double v : s) total += v;
  if (!(total > kDegeneratePower)) {
    if (degenerate) *degenerate = true;
    std::fill(s.begin(), s.end(), 1.0 / F);
    return s;
  }
  if (degenerate) *degenerate = false;
  for (double& v : s) v /= total;
  return s;
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q, double epsilon) {
  if (p.size() != q.size()) throw Error("js_divergence: length mismatch");
  double kl_pm = 0.0, kl_qm = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    kl_pm += p[i] * (std::log(p[i] + epsilon) - std::log(m + epsilon));
    kl_qm += q[i] * (std::log(q[i] + epsilon) - std::log(m + epsilon));
  }
  return 0.5 * kl_pm + 0.5 * kl_qm;
}

double spectral_entropy(const std::vector<double>& p, double epsilon) {
  double s = 0.0;
  for (double v : p) s -= v * std::log(v + epsilon);
  return s;
}

double safe_src_gamma(double g) {
  if (std::abs(g) < 1e-6) return std::copysign(1e-6, g == 0.0 ? 1.0 : g);
  return g;
}

void adapted_accel_stats(const Tensor& psi, const PsiStats& stats, double norm_eps,
                         const Vec3& src_gamma, const Vec3& src_beta, Vec3* a_bar, double* v_t) {
  const int B = psi.shape[0], C = psi.shape[1], T = psi.shape[2];
  if (C < 3) throw Error("adapted_accel_stats: need >= 3 channels");
  const double m = static_cast<double>(B) * T;
  Vec3 mean{0.0, 0.0, 0.0};
  Vec3 sq{0.0, 0.0, 0.0};
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < 3; ++c) {
      const size_t gi = stats.per_instance ? static_cast<size_t>(b) * C + c
                                           : static_cast<size_t>(c);
      const double sigma = std::sqrt(stats.var.data[gi] + norm_eps);
      const double mu = stats.mean.data[gi];
      const double gs = safe_src_gamma(src_gamma[c]);
      for (int t = 0; t < T; ++t) {
        const double v = (psi.at3(b, c, t, C, T) - src_beta[c]) / gs * sigma + mu;
        mean[c] += v;
        sq[c] += v * v;
      }
    }
  for (int c = 0; c < 3; ++c) mean[c] /= m;
  if (a_bar) *a_bar = mean;
  if (v_t) {
    double vsum = 0.0;
    for (int c = 0; c < 3; ++c) vsum += sq[c] / m - mean[c] * mean[c];
    *v_t = std::max(0.0, vsum / 3.0);
  }
}

GravityUpdate gravity_state_update(const Tensor& psi, const PsiStats& stats, double norm_eps,
                                   const AdaptState& state, const PittaConfig& cfg) {
  GravityUpdate u;
  Vec3 a_bar;
  adapted_accel_stats(psi, stats, norm_eps, state.src_gamma, state.src_beta, &a_bar, &u.v_t);
  u.g_ema_new = add(scale(state.g_hat_ema, cfg.alpha_g), scale(a_bar, 1.0 - cfg.alpha_g));
  AdaptState next = state;
  next.g_hat_ema = u.g_ema_new;
  next.g_hat_obs = state.g_hat_obs + 1;
  u.g_hat = next.g_hat(cfg.alpha_g);
  return u;
}

// --- loss construction ----------------------------------------------------------

LossBuildResult build_losses(ForwardPass& fp, const Backbone& model, const AdaptState& state,
                             const PittaConfig& cfg, bool physics, const GateValues* frozen) {
  Tape& tape = *fp.tape;
  LossBuildResult r;
  const int K = model.cfg.num_classes;
  // Copies: pushing nodes reallocates the tape's node storage.
  const Tensor probs = tape.val(fp.probs);
  const int B = probs.shape[0];

  // Entropy objective.
  const int lp = tape.log_softmax(fp.logits);
  const int plp = tape.mul(fp.probs, lp);
  r.l_stat = tape.mul_scalar(tape.mean_all(tape.row_sum(plp)), -1.0);
  r.lb.l_stat = tape.scalar(r.l_stat);

  // Batch confidence and step prediction (detached).
  double conf = 0.0;
  for (int b = 0; b < B; ++b) {
    double mx = 0.0;
    for (int k = 0; k < K; ++k) mx = std::max(mx, probs.data[static_cast<size_t>(b) * K + k]);
    conf += mx;
  }
  r.confidence = conf / B;

  // Unit-mapped adapted acceleration -> gravity proxy (current-step EMA).
  // Back-map convention: (psi - src_beta)/src_gamma * sigma_batch + mu_batch,
  // which is the raw signal exactly while the affine sits at its source
  // values and measures adaptation-induced distortion in g units afterwards.
  const Tensor psi_val = tape.val(fp.psi);
  const int C = psi_val.shape[1], T = psi_val.shape[2];
  {
    Tensor sc({B, C, T}), sh({B, C, T});
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const size_t gi = fp.psi_stats.per_instance ? static_cast<size_t>(b) * C + c
                                                    : static_cast<size_t>(c);
        const double sigma = std::sqrt(fp.psi_stats.var.data[gi] + model.cfg.norm_epsilon);
        const double mu = fp.psi_stats.mean.data[gi];
        const double gs = c < 3 ? safe_src_gamma(state.src_gamma[c]) : 1.0;
        const double bs = c < 3 ? state.src_beta[c] : 0.0;
        for (int t = 0; t < T; ++t) {
          sc.at3(b, c, t, C, T) = sigma / gs;
          sh.at3(b, c, t, C, T) = mu - bs * sigma / gs;
        }
      }
    const int a_units = tape.add_const(tape.mul_const(fp.psi, std::move(sc)), std::move(sh));
    r.a_bar = tape.channel_mean_bt(a_units, 3);
  }
  adapted_accel_stats(psi_val, fp.psi_stats, model.cfg.norm_epsilon, state.src_gamma,
                      state.src_beta, &r.a_bar_val, &r.v_t);

  const double bias_corr =
      (cfg.alpha_g < 1.0)
          ? 1.0 / (1.0 - std::pow(cfg.alpha_g, static_cast<double>(state.g_hat_obs + 1)))
          : 1.0;
  {
    Vec3 carry = scale(state.g_hat_ema, cfg.alpha_g);
    const int g_raw = tape.add_const(tape.mul_scalar(r.a_bar, 1.0 - cfg.alpha_g),
                                     Tensor({3}, {carry[0], carry[1], carry[2]}));
    r.g_hat_node = tape.mul_scalar(g_raw, bias_corr);
  }
  {
    const Tensor& gv = tape.val(r.g_hat_node);
    r.g_hat_val = {gv.data[0], gv.data[1], gv.data[2]};
  }
  const double g_norm = norm(r.g_hat_val);

  // Gravity loss: feasibility-band distance + directional consistency.
  {
    const int band_case = frozen ? frozen->band_case : (g_norm < 0.9 ? -1 : (g_norm > 1.1 ? 1 : 0));
    const bool dir_active =
        frozen ? frozen->dir_active : (cfg.lambda_dir > 0.0 && norm(state.g_ref) >= 0.5);
    r.gates.band_case = band_case;
    r.gates.dir_active = dir_active;

    const int nrm = tape.sqrt_of(tape.sum_all(tape.square(r.g_hat_node)));
    int l_grav = -1;
    if (band_case != 0) {
      const double bound = band_case < 0 ? 0.9 : 1.1;
      // g * (1 - bound/(||g|| + guard)) is g - P(g) on this branch.
      const int shrink = tape.add_scalar(
          tape.mul_scalar(tape.recip(tape.add_scalar(nrm, kZeroGuard)), -bound), 1.0);
      l_grav = tape.sum_all(tape.square(tape.scale_by(r.g_hat_node, shrink)));
    }
    if (dir_active) {
      const int inv = tape.recip(tape.add_scalar(nrm, cfg.epsilon));
      const int cosv = tape.dot_const(tape.scale_by(r.g_hat_node, inv),
                                      {state.g_ref[0], state.g_ref[1], state.g_ref[2]});
      const int dir_term =
          tape.mul_scalar(tape.add_scalar(tape.mul_scalar(cosv, -1.0), 1.0), cfg.lambda_dir);
      l_grav = l_grav < 0 ? dir_term : tape.add(l_grav, dir_term);
    }
    r.l_grav = l_grav < 0 ? tape.scalar_leaf(0.0) : l_grav;
    r.lb.l_grav = tape.scalar(r.l_grav);
  }

  // Spectral loss: JS to the online reference spectrum + SE consistency.
  {
    const int s = tape.dft_power_agg(fp.psi);
    const int F = static_cast<int>(tape.val(s).numel());
    const int total_power = tape.sum_all(s);
    const bool degen =
        frozen ? frozen->degenerate_spectrum : !(tape.scalar(total_power) > kDegeneratePower);
    r.gates.degenerate_spectrum = degen;
    if (degen) {
      r.p_node = tape.leaf(Tensor({F}, std::vector<double>(F, 1.0 / F)));
    } else {
      r.p_node = tape.scale_by(s, tape.recip(total_power));
    }
    r.p_t = tape.val(r.p_node).data;

    std::vector<double> p_ref = state.p_ref;
    if (p_ref.empty()) p_ref.assign(F, 1.0 / F);
    if (static_cast<int>(p_ref.size()) != F)
      throw Error("build_losses: reference spectrum dimension mismatch");

    const int pref_leaf = tape.leaf(Tensor({F}, p_ref));
    const int m = tape.mul_scalar(tape.add(r.p_node, pref_leaf), 0.5);
    const int log_p = tape.log_eps(r.p_node, cfg.epsilon);
    const int log_m = tape.log_eps(m, cfg.epsilon);
    const int kl_pm = tape.sum_all(tape.mul(r.p_node, tape.sub(log_p, log_m)));
    double const_term = 0.0;
    for (int i = 0; i < F; ++i) const_term += p_ref[i] * std::log(p_ref[i] + cfg.epsilon);
    const int kl_rm =
        tape.add_scalar(tape.mul_scalar(tape.dot_const(log_m, p_ref), -1.0), const_term);
    const int js = tape.add(tape.mul_scalar(kl_pm, 0.5), tape.mul_scalar(kl_rm, 0.5));

    const int se_node =
        tape.mul_scalar(tape.sum_all(tape.mul(r.p_node, log_p)), -1.0);
    r.se_t = tape.scalar(se_node);
    const double se_ref = spectral_entropy(p_ref, cfg.epsilon);
    const int l_se = tape.square(tape.add_scalar(se_node, -se_ref));
    r.l_spec = tape.add(js, tape.mul_scalar(l_se, cfg.lambda_se));
    r.lb.l_spec = tape.scalar(r.l_spec);
  }

  // Temporal continuity on batch-mean embeddings.
  r.z_mean = tape.mean_rows(fp.z);
  r.z_mean_val = tape.val(r.z_mean).data;
  {
    const double entropy_t = r.lb.l_stat;
    int step_pred = 0;
    {
      std::vector<double> mean_probs(K, 0.0);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k)
          mean_probs[k] += probs.data[static_cast<size_t>(b) * K + k];
      for (int k = 1; k < K; ++k)
        if (mean_probs[k] > mean_probs[step_pred]) step_pred = k;
    }
    const bool flipped = state.prev_argmax >= 0 && step_pred != state.prev_argmax;
    const double w_t =
        frozen ? frozen->w_t : temporal_gate(r.confidence, entropy_t, flipped, cfg, K);
    r.gates.w_t = w_t;
    r.lb.w_t_mean = w_t;

    if (state.z_hist.size() >= 2) {
      const auto& z1 = state.z_hist.back();        // z_{t-1}
      const auto& z2 = state.z_hist.front();       // z_{t-2}
      Tensor c({static_cast<int>(z1.size())});
      for (size_t i = 0; i < z1.size(); ++i) c.data[i] = -2.0 * z1[i] + z2[i];
      const int d2 = tape.add_const(r.z_mean, std::move(c));
      r.l_temp = tape.mul_scalar(tape.sum_all(tape.square(d2)), w_t);
    } else {
      r.temporal_warmup = true;
      r.l_temp = tape.scalar_leaf(0.0);
    }
    r.lb.l_temp = tape.scalar(r.l_temp);
  }

  // Gates and total.
  const double lambda_grav_t =
      frozen ? frozen->lambda_grav_t : (physics ? gravity_gate(r.v_t, cfg) : 0.0);
  double gamma_s = 1.0;
  if (cfg.gamma_spec_mode == GammaSpecMode::kEntropyWeighted)
    gamma_s = std::exp(-r.lb.l_stat / std::log(static_cast<double>(K)));
  const double lambda_spec_t =
      frozen ? frozen->lambda_spec_t : (physics ? cfg.lambda_spec * gamma_s : 0.0);
  r.gates.lambda_grav_t = lambda_grav_t;
  r.gates.lambda_spec_t = lambda_spec_t;
  r.lb.lambda_grav_t = lambda_grav_t;
  r.lb.lambda_spec_t = lambda_spec_t;

  const double lambda_temp = physics ? cfg.lambda_temp : 0.0;
  int total = r.l_stat;
  if (lambda_temp != 0.0) total = tape.add(total, tape.mul_scalar(r.l_temp, lambda_temp));
  if (lambda_grav_t != 0.0) total = tape.add(total, tape.mul_scalar(r.l_grav, lambda_grav_t));
  if (lambda_spec_t != 0.0) total = tape.add(total, tape.mul_scalar(r.l_spec, lambda_spec_t));
  r.total = total;
  r.lb.total = tape.scalar(total);
  return r;
}

// --- online step ------------------------------------------------------------------

StepOutcome engine_step(Backbone& model, const Batch& batch, AdaptState& state,
                        const PittaConfig& cfg, Method method, const StepOptions& opts) {
  cfg.validate();
  if (!state.src_captured) {
    // Deployment-start affine of the psi layer: the unit-map convention.
    for (int c = 0; c < 3; ++c) {
      state.src_gamma[c] = model.input_norm.gamma.data[c];
      state.src_beta[c] = model.input_norm.beta.data[c];
    }
    state.src_captured = true;
  }
  const bool adaptive = method != Method::kSourceOnly;
  const int64_t K = cfg.update_interval;
  const bool update_due = adaptive && K >= 1 && (state.step % K == 0);

  StepOutcome out;
  out.update_due = update_due;

  ForwardPass fp = forward(model, batch, StatsMode::kTrain,
                           update_due ? GradScope::kAdaptable : GradScope::kNone,
                           adaptive && model.cfg.adapt_running_stats);

  // Predictions from pre-update parameters.
  const Tensor& logits = fp.tape->val(fp.logits);
  const Tensor& probs = fp.tape->val(fp.probs);
  const int B = logits.shape[0];
  const int Kc = logits.shape[1];
  out.preds.resize(B);
  int correct = 0;
  std::vector<double> mean_probs(Kc, 0.0);
  for (int b = 0; b < B; ++b) {
    const size_t off = static_cast<size_t>(b) * Kc;
    int arg = 0;
    for (int k = 1; k < Kc; ++k)
      if (logits.data[off + k] > logits.data[off + arg]) arg = k;
    out.preds[b] = arg;
    if (arg == batch.windows[b].label) ++correct;
    for (int k = 0; k < Kc; ++k) mean_probs[k] += probs.data[off + k];
  }
  out.online_acc = static_cast<double>(correct) / B;
  out.step_pred = 0;
  for (int k = 1; k < Kc; ++k)
    if (mean_probs[k] > mean_probs[out.step_pred]) out.step_pred = k;
  {
    // Dominant batch label for the step-level correctness flag.
    std::vector<int> counts(Kc, 0);
    for (const auto& w : batch.windows)
      if (w.label >= 0 && w.label < Kc) ++counts[w.label];
    const int dom =
        static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    out.online_correct = (out.step_pred == dom);
  }

  LossBuildResult lr = build_losses(fp, model, state, cfg, method == Method::kPitta);
  out.lb = lr.lb;
  out.entropy = lr.lb.l_stat;
  out.spectral_entropy_t = lr.se_t;
  out.v_t = lr.v_t;
  out.g_hat_norm = norm(lr.g_hat_val);
  out.violation = !(out.g_hat_norm >= 0.9 && out.g_hat_norm <= 1.1);
  out.temporal_warmup = lr.temporal_warmup;
  out.degenerate_spectrum = lr.gates.degenerate_spectrum;

  const bool loss_finite = std::isfinite(lr.lb.total);
  if (!loss_finite) {
    // Update skipped and references rolled back for this step; the stream
    // position still advances.
    out.skipped_nonfinite = true;
    state.step += 1;
    return out;
  }

  // Commit reference state (EMA proxy, direction reference, spectrum
  // reference, embedding history, previous prediction).
  state.g_hat_ema =
      add(scale(state.g_hat_ema, cfg.alpha_g), scale(lr.a_bar_val, 1.0 - cfg.alpha_g));
  state.g_hat_obs += 1;
  const bool reliable = lr.v_t <= cfg.reliable_vt_factor * cfg.tau_g;
  state.g_ref = g_ref_update(state.g_ref, lr.g_hat_val, cfg, reliable);
  {
    const int F = static_cast<int>(lr.p_t.size());
    if (state.p_ref.empty()) state.p_ref.assign(F, 1.0 / F);
    for (int i = 0; i < F; ++i)
      state.p_ref[i] = cfg.alpha_s * state.p_ref[i] + (1.0 - cfg.alpha_s) * lr.p_t[i];
  }
  state.z_hist.push_back(lr.z_mean_val);
  if (state.z_hist.size() > 2) state.z_hist.erase(state.z_hist.begin());
  state.prev_argmax = out.step_pred;

  if (update_due) {
    fp.tape->backward(lr.total);
    std::vector<Tensor> grads;
    grads.reserve(fp.adaptable_leaves.size());
    bool finite = true;
    for (int id : fp.adaptable_leaves) {
      grads.push_back(fp.tape->grad_of(id));
      if (!all_finite(grads.back().data)) finite = false;
    }
    if (!finite) {
      out.skipped_nonfinite = true;
    } else if (opts.defer_update) {
      out.deferred_grads = std::move(grads);
    } else if (cfg.eta != 0.0) {
      out.updated = sgd_step(model, grads, cfg.eta);
      if (!out.updated) out.skipped_nonfinite = true;
    }
  }

  state.step += 1;
  return out;
}

StepOutcome pitta_step(Backbone& model, const Batch& batch, AdaptState& state,
                       const PittaConfig& cfg) {
  return engine_step(model, batch, state, cfg, Method::kPitta);
}

StepOutcome tent_step(Backbone& model, const Batch& batch, AdaptState& state,
                      const PittaConfig& cfg) {
  return engine_step(model, batch, state, cfg, Method::kTent);
}

}  // namespace pitta
