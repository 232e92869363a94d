#pragma once
// The online adaptation engine: entropy objective, gravity consistency with
// feasibility-band projection and variance gate, short-horizon temporal
// continuity with a transition-aware gate, spectral stability (JS divergence
// to an online reference spectrum plus spectral-entropy consistency), the
// combined objective, and the per-step update loop with update interval K.
//
// The entropy-only baseline and the no-update baseline run through the same
// step path with the physics terms disabled, so reduction identities hold
// bitwise.

#include <cstdint>
#include <optional>
#include <vector>

#include "pitta/backbone.hpp"
#include "pitta/common.hpp"

namespace pitta {

enum class Method { kSourceOnly, kTent, kPitta };

enum class GammaSpecMode { kConstantOne, kEntropyWeighted };

struct PittaConfig {
  double lambda_temp = 1.0;
  double lambda_grav = 1.0;
  double lambda_spec = 1.0;
  double lambda_dir = 0.1;
  double lambda_se = 0.1;
  double alpha_g = 0.9;
  double alpha_r = 0.9;
  double alpha_s = 0.9;
  double tau_g = 0.1;  // g^2
  double kappa_c = 10.0;
  double tau_c = 0.6;
  double kappa_h = 10.0;
  double tau_h = -1.0;  // <= 0: resolved to 0.5 * log(num_classes)
  double epsilon = 1e-8;
  double eta = 1e-3;
  int64_t update_interval = 1;  // K; 0 means never update
  GammaSpecMode gamma_spec_mode = GammaSpecMode::kConstantOne;
  // g_ref updates are suspended when v_t > reliable_vt_factor * tau_g.
  double reliable_vt_factor = 2.0;

  void validate() const;
  double resolved_tau_h(int num_classes) const;
};

// Online EMA/reference state. g_hat_ema is the raw EMA accumulator started
// at zero; the proxy used by the loss and diagnostics is the bias-corrected
// value g_hat(), which removes the cold-start shrinkage of the first steps
// (for alpha < 1; alpha = 1 degenerates to the identity update).
//
// src_gamma/src_beta record the psi-layer affine at deployment start (the
// unit-map convention): the back-map (psi - src_beta)/src_gamma * sigma + mu
// expresses the adapted acceleration in input-scale g units, and equals the
// raw signal exactly while the affine still sits at its source values.
struct AdaptState {
  Vec3 g_hat_ema{0.0, 0.0, 0.0};
  int64_t g_hat_obs = 0;
  Vec3 g_ref{0.0, 0.0, 0.0};
  std::vector<double> p_ref;  // reference spectrum; empty until first batch
  std::vector<std::vector<double>> z_hist;  // batch-mean embeddings, newest last, size <= 2
  int prev_argmax = -1;
  int64_t step = 0;
  Vec3 src_gamma{1.0, 1.0, 1.0};
  Vec3 src_beta{0.0, 0.0, 0.0};
  bool src_captured = false;

  Vec3 g_hat(double alpha_g) const;
};

struct LossBreakdown {
  double l_stat = 0.0;
  double l_grav = 0.0;
  double l_temp = 0.0;
  double l_spec = 0.0;
  double lambda_grav_t = 0.0;
  double lambda_spec_t = 0.0;
  double w_t_mean = 0.0;
  double total = 0.0;
};

// --- standalone operations ---------------------------------------------------

// Mean entropy of probability rows (0*log 0 := 0). Throws on negative entries.
double entropy_loss(const std::vector<double>& probs, int batch, int num_classes);

// Euclidean projection onto the magnitude band [0.9, 1.1] g. The divide
// guard here is a pure zero guard (1e-30), far below the smoothing epsilon,
// so projection is idempotent to machine precision.
Vec3 project_band(const Vec3& u);

// ||g - P(g)||^2 + lambda_dir * (1 - <g/(||g||+eps), g_ref>). The direction
// term is suppressed while ||g_ref|| < 0.5 (reference warm-up).
double gravity_loss(const Vec3& g_hat, const Vec3& g_ref, const PittaConfig& cfg);

// lambda_grav * exp(-v_t / tau_g).
double gravity_gate(double v_t, const PittaConfig& cfg);

// Soft EMA direction reference; suspended when reliable is false.
Vec3 g_ref_update(const Vec3& g_ref, const Vec3& g_hat, const PittaConfig& cfg, bool reliable);

// sigma(kappa_c(c - tau_c)) * sigma(kappa_h(tau_h - H)) * (1 - flipped).
double temporal_gate(double c_t, double entropy_t, bool flipped, const PittaConfig& cfg,
                     int num_classes);

// w * ||z - 2 z_prev + z_prev2||^2.
double temporal_loss(const std::vector<double>& z, const std::vector<double>& z_prev,
                     const std::vector<double>& z_prev2, double w);

// Normalized channel-aggregated power spectrum of a (B, C, T) block, DC bin
// excluded, F = T/2 bins. All-zero power yields the uniform distribution and
// sets *degenerate.
std::vector<double> psd(const Tensor& x, double epsilon, bool* degenerate = nullptr);

// Jensen-Shannon divergence with epsilon-smoothed logarithms.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q, double epsilon);

// SE(P) = -sum P(w) log(P(w) + eps).
double spectral_entropy(const std::vector<double>& p, double epsilon);

// a_bar (batch/time mean of the unit-mapped adapted acceleration, g units)
// and v_t (mean per-channel variance, g^2) from psi values, the recorded
// normalization statistics, and the source affine convention.
void adapted_accel_stats(const Tensor& psi, const PsiStats& stats, double norm_eps,
                         const Vec3& src_gamma, const Vec3& src_beta, Vec3* a_bar, double* v_t);

struct GravityUpdate {
  Vec3 g_ema_new;  // raw EMA accumulator after folding in a_bar
  Vec3 g_hat;      // bias-corrected proxy at this step
  double v_t = 0.0;
};
GravityUpdate gravity_state_update(const Tensor& psi, const PsiStats& stats, double norm_eps,
                                   const AdaptState& state, const PittaConfig& cfg);

// --- per-step loss construction (exposed for gradient checking) --------------

// Branch decisions and gate coefficients. During finite-difference probing
// these are frozen at the base point so the perturbed evaluations sample the
// same smooth branch the analytic gradient differentiates.
struct GateValues {
  double lambda_grav_t = 0.0;
  double lambda_spec_t = 0.0;
  double w_t = 0.0;
  int band_case = 0;  // -1 below band, 0 inside, +1 above
  bool dir_active = false;
  bool degenerate_spectrum = false;
};

struct LossBuildResult {
  int l_stat = -1, l_grav = -1, l_temp = -1, l_spec = -1, total = -1;
  int a_bar = -1, g_hat_node = -1, p_node = -1, z_mean = -1;
  LossBreakdown lb;
  GateValues gates;
  // Detached values feeding the candidate state and the trace.
  Vec3 a_bar_val{0.0, 0.0, 0.0};
  Vec3 g_hat_val{0.0, 0.0, 0.0};
  double v_t = 0.0;
  std::vector<double> p_t;
  double se_t = 0.0;
  double confidence = 0.0;  // batch-mean max prob
  std::vector<double> z_mean_val;
  bool temporal_warmup = false;
};

// Builds loss nodes on fp's tape against the PRIOR references in `state`
// (g_ref, p_ref, z_hist); the gravity proxy itself is the current-step EMA
// value. With physics=false only the entropy objective enters the total and
// the physics nodes are still evaluated for diagnostics.
LossBuildResult build_losses(ForwardPass& fp, const Backbone& model, const AdaptState& state,
                             const PittaConfig& cfg, bool physics,
                             const GateValues* frozen = nullptr);

// --- online step ---------------------------------------------------------------

struct StepOptions {
  // Compute the update but hand it back instead of applying it (the
  // time-constrained runner routes deltas through its schedule).
  bool defer_update = false;
};

struct StepOutcome {
  std::vector<int> preds;   // per-window argmax (pre-update parameters)
  int step_pred = -1;       // argmax of batch-mean probabilities
  double online_acc = 0.0;  // fraction of windows predicted correctly
  bool online_correct = false;
  LossBreakdown lb;
  double entropy = 0.0;
  double spectral_entropy_t = 0.0;
  double g_hat_norm = 0.0;
  bool violation = false;
  double v_t = 0.0;
  bool update_due = false;        // step index selected by the interval
  bool updated = false;           // parameters actually changed
  bool skipped_nonfinite = false; // loss or gradient was non-finite
  bool temporal_warmup = false;
  bool degenerate_spectrum = false;
  // Present when defer_update && update_due: gradients for sgd_step.
  std::optional<std::vector<Tensor>> deferred_grads;
};

StepOutcome engine_step(Backbone& model, const Batch& batch, AdaptState& state,
                        const PittaConfig& cfg, Method method, const StepOptions& opts = {});

// Full objective, one SGD step on theta_A per update interval.
StepOutcome pitta_step(Backbone& model, const Batch& batch, AdaptState& state,
                       const PittaConfig& cfg);

// Entropy-only baseline on the same path (physics weights forced to zero).
StepOutcome tent_step(Backbone& model, const Batch& batch, AdaptState& state,
                      const PittaConfig& cfg);

}  // namespace pitta
