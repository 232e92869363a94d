#pragma once
// Failure diagnostics: physical-violation rate, gravity-feasibility ribbon,
// held-out retention curves, silhouette score, and the entropy-violation
// rank correlation used to detect the low-entropy-trap scissor pattern.

#include <string>
#include <vector>

#include "pitta/backbone.hpp"
#include "pitta/window.hpp"

namespace pitta {

enum class ScheduleDecision { kSafe, kDelayed, kDropped, kNoUpdate };

const char* to_string(ScheduleDecision d);

struct TraceRow {
  int64_t step = 0;
  int phase = 0;
  bool online_correct = false;
  double online_acc = 0.0;
  double entropy = 0.0;
  double g_hat_norm = 0.0;
  bool violation = false;
  double spectral_entropy = 0.0;
  double w_t_mean = 0.0;
  double lambda_grav_t = 0.0;
  double lambda_spec_t = 0.0;
  ScheduleDecision decision = ScheduleDecision::kNoUpdate;
  double l_stat = 0.0, l_grav = 0.0, l_temp = 0.0, l_spec = 0.0, total = 0.0;
};

struct RunTrace {
  std::vector<TraceRow> rows;

  // Steps contiguous from 0; violation flag consistent with g_hat_norm.
  void validate() const;
};

// VR = mean of the violation indicator over the trace. Errors on empty.
double violation_rate(const RunTrace& trace);

// Mean silhouette over points; Euclidean distances on raw embeddings; b is
// the minimum over other clusters of the mean distance; 0/0 := 0 and
// singleton clusters score 0. Errors with fewer than two classes.
double silhouette(const std::vector<std::vector<double>>& embeddings,
                  const std::vector<int>& labels);

// Spearman rank correlation (average ranks for ties); the entropy-violation
// scissor shows up as a negative value under collapapsing entropy objectives.
double rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

struct RetentionPoint {
  int64_t step = 0;
  double accuracy = 0.0;
};

// Accuracy on the fixed hold-out set at steps {0, n, 2n, ...}; the hold-out
// set never feeds adaptation. When both sides carry provenance tags, any
// overlap with the stream is an error.
class HeldoutEvaluator {
public:
  HeldoutEvaluator(std::vector<Window> heldout, int64_t every_n, StatsMode mode);

  void check_disjoint(const StreamSchedule& stream) const;
  bool due(int64_t step) const { return step % every_n_ == 0; }
  void eval(Backbone& model, int64_t step);
  const std::vector<RetentionPoint>& curve() const { return curve_; }

private:
  std::vector<Window> heldout_;
  int64_t every_n_;
  StatsMode mode_;
  std::vector<RetentionPoint> curve_;
};

// Per-window penultimate embeddings.
std::vector<std::vector<double>> embed(Backbone& model, const std::vector<Window>& windows,
                                       StatsMode mode, int eval_batch = 64);

// --- CSV exports ({run_id}.{diagnostic}.csv) -----------------------------------

void write_trace_csv(const RunTrace& trace, const std::string& path);
// (step, g_hat_norm, band_lo, band_hi); values copied from the trace.
void write_ribbon_csv(const RunTrace& trace, const std::string& path);
void write_heldout_csv(const std::vector<RetentionPoint>& curve, const std::string& path);
void write_entropy_violation_csv(const RunTrace& trace, const std::string& path);

}  // namespace pitta
