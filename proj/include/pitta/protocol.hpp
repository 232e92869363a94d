#pragma once
// Experiment orchestration: the long-sequence, factorized/compound shift,
// learning-rate grid, update-interval sweep, and time-constrained protocols.
// All methods within one experiment consume byte-identical stream schedules
// per seed, and a rerun with the same config and seed produces byte-identical
// CSV artifacts (time-constrained runs are byte-reproducible in injected
// latency mode; measured mode depends on wall time by design).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pitta/adapt.hpp"
#include "pitta/diagnostics.hpp"
#include "pitta/shift.hpp"
#include "pitta/synth.hpp"

namespace pitta {

enum class Protocol {
  kLongSequence,
  kFactorizedShift,
  kCompoundShift,
  kLrGrid,
  kIntervalSweep,
  kTimeConstrained
};

struct GeneratorConfig {
  double rate_hz = 100.0;
  int window_len = 128;
  int stride = 64;
  double source_duration_s = 200.0;
  double stream_duration_s = 120.0;
  double heldout_duration_s = 40.0;
  // Deployment-side sensor degradation: the adaptation stream is generated
  // with per-class noise_std_g scaled by this factor (zero-mean, so the
  // ground-truth gravity magnitude stays exactly 1 g). Source and hold-out
  // pools are unaffected.
  double stream_noise_scale = 1.0;
  std::vector<ActivitySpec> classes;

  void validate() const;
};

struct CompoundPlan {
  double t1_rotation_deg = 60.0;
  std::string t2_placement = "waist->arm";
  double t3_drift_hz = 120.0;
};

struct ProtocolParams {
  int64_t phase_len = 1000;
  int batch_size = 16;
  int64_t heldout_every = 100;
  bool heldout_train_stats = false;  // default eval-stats
  bool with_replacement = false;
  double stream_rotation_deg = 0.0;  // fixed device-frame rotation on the stream
  std::vector<double> lr_grid{1e-4, 1e-3, 1e-2};
  std::vector<int64_t> k_list{1, 5, 10, 20, 50};
  std::vector<double> budgets_ms{50.0, 20.0};
  bool injected_latency = false;
  double injected_latency_ms = 0.0;
  std::vector<double> rotations_deg{30.0, 60.0, 90.0};
  std::vector<std::string> placements{"waist->arm", "waist->chest"};
  std::vector<double> drift_rates_hz{70.0, 80.0, 120.0, 130.0};
  CompoundPlan compound;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Protocol protocol = Protocol::kLongSequence;
  std::vector<Method> methods{Method::kSourceOnly, Method::kTent, Method::kPitta};
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
  GeneratorConfig gen;
  BackboneConfig backbone;
  PretrainRecipe pretrain;
  PittaConfig pitta;
  ProtocolParams params;

  void validate() const;
};

// JSON config with // comments permitted. Throws Error with a message
// suitable for `validate` output.
ExperimentConfig load_config(const std::string& path);

// --- time-constrained scoring --------------------------------------------------

struct BudgetDecision {
  double t_adapt_ms = 0.0;
  double t_budget_ms = 0.0;
  ScheduleDecision decision = ScheduleDecision::kSafe;
};

// safe if t_adapt <= t_budget; delayed-one-cycle if t_budget < t_adapt <=
// 2*t_budget; dropped beyond that. Errors on nonpositive inputs.
BudgetDecision time_constrained_classify(double t_adapt_ms, double t_budget_ms);

// Applies the three-case rule to a latency sequence. A safe update lands at
// the end of its own step; a delayed update lands at the end of the next
// step; a new delayed update supersedes an unapplied pending one.
struct EffectiveSchedule {
  std::vector<ScheduleDecision> decisions;  // per step
  // apply_at[t]: step at whose end update t landed; the stream length means
  // "after the final step"; -1 means dropped or superseded.
  std::vector<int64_t> apply_at;
  int superseded = 0;
};
EffectiveSchedule effective_schedule(const std::vector<double>& latencies_ms, double budget_ms);

// --- experiment execution -------------------------------------------------------

struct RunOptions {
  std::string out_dir_override;          // --out-dir / PITTA_OUT
  std::optional<uint64_t> seed_override; // run a single seed
  bool quiet = false;
};

// Executes the configured protocol for every seed (worker per seed), writes
// per-run CSVs, report.json, and a MANIFEST of artifact hashes into the
// output directory. Returns the number of failed seeds (0 = full success).
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

}  // namespace pitta
