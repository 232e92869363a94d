#include "pitta/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pitta/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pitta {

void GeneratorConfig::validate() const {
  if (rate_hz <= 0.0) throw Error("generator: rate_hz must be positive");
  if (window_len < 4) throw Error("generator: window_len must be >= 4");
  if (stride < 1) throw Error("generator: stride must be >= 1");
  if (source_duration_s <= 0.0 || stream_duration_s <= 0.0 || heldout_duration_s <= 0.0)
    throw Error("generator: durations must be positive");
  if (classes.size() < 2) throw Error("generator: need at least two classes");
  for (const auto& c : classes) c.validate();
}

void ExperimentConfig::validate() const {
  gen.validate();
  backbone.validate();
  pitta.validate();
  if (seeds.empty()) throw Error("config: seeds must be nonempty");
  if (methods.empty()) throw Error("config: methods must be nonempty");
  if (static_cast<int>(gen.classes.size()) != backbone.num_classes)
    throw Error("config: backbone num_classes must match generator classes");
  if (backbone.channels_in != 3)
    throw Error("config: generator produces 3 channels; backbone channels_in must be 3");
  if (params.batch_size < 1 || params.phase_len < 1)
    throw Error("config: batch_size and phase_len must be >= 1");
  if (params.heldout_every < 1) throw Error("config: heldout_every must be >= 1");
  for (const auto& p : params.placements) placement_preset(p);  // throws on unknown
  if (protocol == Protocol::kTimeConstrained && params.budgets_ms.empty())
    throw Error("config: time-constrained protocol needs budgets_ms");
  if (pretrain.epochs < 0 || pretrain.batch_size < 1 || pretrain.lr < 0.0)
    throw Error("config: bad pretrain recipe");
}

// --- config parsing ---------------------------------------------------------------

namespace {

Vec3 to_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("config: expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ActivitySpec parse_activity(const json& j) {
  ActivitySpec s;
  s.name = j.value("name", "class");
  const std::string kind = j.value("kind", "static");
  if (kind == "static")
    s.kind = ActivityKind::kStatic;
  else if (kind == "periodic")
    s.kind = ActivityKind::kPeriodic;
  else
    throw Error("config: activity kind must be static|periodic");
  if (j.contains("gravity_dir")) s.gravity_dir = to_vec3(j.at("gravity_dir"));
  s.fundamental_hz = j.value("fundamental_hz", 0.0);
  if (j.contains("amplitude_g")) s.amplitude_g = to_vec3(j.at("amplitude_g"));
  s.noise_std_g = j.value("noise_std_g", 0.0);
  if (j.contains("harmonics")) {
    s.harmonics.clear();
    for (const auto& h : j.at("harmonics"))
      s.harmonics.push_back({h.at(0).get<double>(), h.at(1).get<double>()});
  }
  return s;
}

Method parse_method(const std::string& m) {
  if (m == "source-only") return Method::kSourceOnly;
  if (m == "tent") return Method::kTent;
  if (m == "pitta") return Method::kPitta;
  throw Error("config: unknown method '" + m + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kSourceOnly: return "source-only";
    case Method::kTent: return "tent";
    case Method::kPitta: return "pitta";
  }
  return "?";
}

Protocol parse_protocol(const std::string& p) {
  if (p == "long-sequence") return Protocol::kLongSequence;
  if (p == "factorized-shift") return Protocol::kFactorizedShift;
  if (p == "compound-shift") return Protocol::kCompoundShift;
  if (p == "lr-grid") return Protocol::kLrGrid;
  if (p == "interval-sweep") return Protocol::kIntervalSweep;
  if (p == "time-constrained") return Protocol::kTimeConstrained;
  throw Error("config: unknown protocol '" + p + "'");
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kLongSequence: return "long-sequence";
    case Protocol::kFactorizedShift: return "factorized-shift";
    case Protocol::kCompoundShift: return "compound-shift";
    case Protocol::kLrGrid: return "lr-grid";
    case Protocol::kIntervalSweep: return "interval-sweep";
    case Protocol::kTimeConstrained: return "time-constrained";
  }
  return "?";
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw Error(std::string("config: parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  try {
    cfg.name = j.value("name", "experiment");
    cfg.protocol = parse_protocol(j.value("protocol", "long-sequence"));
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m));
    }
    if (j.contains("seeds")) {
      cfg.seeds.clear();
      for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<uint64_t>());
    }
    cfg.out_dir = j.value("out_dir", "out");

    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      cfg.gen.rate_hz = g.value("rate_hz", cfg.gen.rate_hz);
      cfg.gen.window_len = g.value("window_len", cfg.gen.window_len);
      cfg.gen.stride = g.value("stride", cfg.gen.stride);
      cfg.gen.source_duration_s = g.value("source_duration_s", cfg.gen.source_duration_s);
      cfg.gen.stream_duration_s = g.value("stream_duration_s", cfg.gen.stream_duration_s);
      cfg.gen.heldout_duration_s = g.value("heldout_duration_s", cfg.gen.heldout_duration_s);
      cfg.gen.stream_noise_scale = g.value("stream_noise_scale", cfg.gen.stream_noise_scale);
      if (g.contains("classes")) {
        cfg.gen.classes.clear();
        for (const auto& c : g.at("classes")) cfg.gen.classes.push_back(parse_activity(c));
      }
    }

    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      if (b.contains("blocks")) {
        cfg.backbone.blocks.clear();
        for (const auto& blk : b.at("blocks"))
          cfg.backbone.blocks.push_back(
              {blk.at(0).get<int>(), blk.at(1).get<int>(), blk.at(2).get<int>()});
      }
      cfg.backbone.embedding_dim = b.value("embedding_dim", cfg.backbone.embedding_dim);
      cfg.backbone.norm_epsilon = b.value("norm_epsilon", cfg.backbone.norm_epsilon);
      const std::string nm = b.value("norm_mode", "batch");
      if (nm == "batch")
        cfg.backbone.norm_kind = NormKind::kBatch;
      else if (nm == "instance")
        cfg.backbone.norm_kind = NormKind::kInstance;
      else
        throw Error("config: norm_mode must be batch|instance");
      cfg.backbone.running_momentum = b.value("running_momentum", cfg.backbone.running_momentum);
      cfg.backbone.adapt_running_stats =
          b.value("adapt_running_stats", cfg.backbone.adapt_running_stats);
      if (b.contains("pretrain")) {
        const auto& p = b.at("pretrain");
        cfg.pretrain.epochs = p.value("epochs", cfg.pretrain.epochs);
        cfg.pretrain.lr = p.value("lr", cfg.pretrain.lr);
        cfg.pretrain.batch_size = p.value("batch_size", cfg.pretrain.batch_size);
      }
    }
    cfg.backbone.num_classes = static_cast<int>(cfg.gen.classes.size());

    if (j.contains("pitta")) {
      const auto& p = j.at("pitta");
      auto& pc = cfg.pitta;
      pc.lambda_temp = p.value("lambda_temp", pc.lambda_temp);
      pc.lambda_grav = p.value("lambda_grav", pc.lambda_grav);
      pc.lambda_spec = p.value("lambda_spec", pc.lambda_spec);
      pc.lambda_dir = p.value("lambda_dir", pc.lambda_dir);
      pc.lambda_se = p.value("lambda_se", pc.lambda_se);
      pc.alpha_g = p.value("alpha_g", pc.alpha_g);
      pc.alpha_r = p.value("alpha_r", pc.alpha_r);
      pc.alpha_s = p.value("alpha_s", pc.alpha_s);
      pc.tau_g = p.value("tau_g", pc.tau_g);
      pc.kappa_c = p.value("kappa_c", pc.kappa_c);
      pc.tau_c = p.value("tau_c", pc.tau_c);
      pc.kappa_h = p.value("kappa_h", pc.kappa_h);
      pc.tau_h = p.value("tau_h", pc.tau_h);
      pc.epsilon = p.value("epsilon", pc.epsilon);
      pc.eta = p.value("eta", pc.eta);
      pc.update_interval = p.value("update_interval", pc.update_interval);
      const std::string gm = p.value("gamma_spec_mode", "constant-one");
      if (gm == "constant-one")
        pc.gamma_spec_mode = GammaSpecMode::kConstantOne;
      else if (gm == "entropy-weighted")
        pc.gamma_spec_mode = GammaSpecMode::kEntropyWeighted;
      else
        throw Error("config: gamma_spec_mode must be constant-one|entropy-weighted");
      pc.reliable_vt_factor = p.value("reliable_vt_factor", pc.reliable_vt_factor);
    }

    if (j.contains("protocol_params")) {
      const auto& p = j.at("protocol_params");
      auto& pp = cfg.params;
      pp.phase_len = p.value("phase_len", pp.phase_len);
      pp.batch_size = p.value("batch_size", pp.batch_size);
      pp.heldout_every = p.value("heldout_every", pp.heldout_every);
      pp.heldout_train_stats = p.value("heldout_train_stats", pp.heldout_train_stats);
      pp.with_replacement = p.value("with_replacement", pp.with_replacement);
      pp.stream_rotation_deg = p.value("stream_rotation_deg", pp.stream_rotation_deg);
      if (p.contains("lr_grid")) pp.lr_grid = p.at("lr_grid").get<std::vector<double>>();
      if (p.contains("k_list")) pp.k_list = p.at("k_list").get<std::vector<int64_t>>();
      if (p.contains("budgets_ms")) pp.budgets_ms = p.at("budgets_ms").get<std::vector<double>>();
      const std::string lm = p.value("latency_mode", pp.injected_latency ? "injected" : "measured");
      if (lm == "measured")
        pp.injected_latency = false;
      else if (lm == "injected")
        pp.injected_latency = true;
      else
        throw Error("config: latency_mode must be measured|injected");
      pp.injected_latency_ms = p.value("injected_latency_ms", pp.injected_latency_ms);
      if (p.contains("rotations_deg"))
        pp.rotations_deg = p.at("rotations_deg").get<std::vector<double>>();
      if (p.contains("placements"))
        pp.placements = p.at("placements").get<std::vector<std::string>>();
      if (p.contains("drift_rates_hz"))
        pp.drift_rates_hz = p.at("drift_rates_hz").get<std::vector<double>>();
      if (p.contains("compound")) {
        const auto& c = p.at("compound");
        pp.compound.t1_rotation_deg = c.value("t1_rotation_deg", pp.compound.t1_rotation_deg);
        pp.compound.t2_placement = c.value("t2_placement", pp.compound.t2_placement);
        pp.compound.t3_drift_hz = c.value("t3_drift_hz", pp.compound.t3_drift_hz);
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// --- time-constrained scoring -------------------------------------------------------

BudgetDecision time_constrained_classify(double t_adapt_ms, double t_budget_ms) {
  if (t_adapt_ms <= 0.0 || t_budget_ms <= 0.0)
    throw Error("time_constrained_classify: inputs must be positive");
  BudgetDecision d{t_adapt_ms, t_budget_ms, ScheduleDecision::kSafe};
  if (t_adapt_ms <= t_budget_ms)
    d.decision = ScheduleDecision::kSafe;
  else if (t_adapt_ms <= 2.0 * t_budget_ms)
    d.decision = ScheduleDecision::kDelayed;
  else
    d.decision = ScheduleDecision::kDropped;
  return d;
}

EffectiveSchedule effective_schedule(const std::vector<double>& latencies_ms, double budget_ms) {
  EffectiveSchedule es;
  const int64_t n = static_cast<int64_t>(latencies_ms.size());
  es.decisions.resize(n);
  es.apply_at.assign(n, -1);
  int64_t pending = -1;  // origin step of the unapplied delayed update
  for (int64_t t = 0; t < n; ++t) {
    const auto d = time_constrained_classify(latencies_ms[t], budget_ms).decision;
    es.decisions[t] = d;
    if (d == ScheduleDecision::kDelayed) {
      if (pending >= 0) {
        es.apply_at[pending] = -1;  // superseded before it landed
        ++es.superseded;
      }
      pending = t;
      es.apply_at[t] = t + 1;
    } else if (d == ScheduleDecision::kSafe) {
      es.apply_at[t] = t;
    }
    // A pending delayed update lands at the end of step origin+1.
    if (pending >= 0 && es.apply_at[pending] == t) pending = -1;
  }
  return es;
}

// --- experiment execution ---------------------------------------------------------------

namespace {

std::string fmt_double_str(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct SingleRun {
  std::string tag;     // method + protocol variant
  std::string run_id;  // tag + seed
  uint64_t seed = 0;
  Method method = Method::kSourceOnly;
  RunTrace trace;
  std::vector<RetentionPoint> heldout_curve;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> events;
  json extras = json::object();
};

uint64_t origin_base(int kind, int cls) {
  return (static_cast<uint64_t>(kind) << 40) | (static_cast<uint64_t>(cls) << 20) | 1ull;
}

// Per-class window pools from freshly generated signal.
std::map<int, std::vector<Window>> make_pools(const GeneratorConfig& g, double duration_s,
                                              uint64_t seed, int kind_tag) {
  const LabeledStream ls = gen_labeled_stream(g.classes, duration_s, g.rate_hz, seed);
  std::map<int, std::vector<Window>> pools;
  for (size_t i = 0; i < ls.segments.size(); ++i) {
    auto w = make_windows(ls.segments[i], ls.segment_samples[i], 3, g.window_len, g.stride,
                          ls.labels[i], g.rate_hz, origin_base(kind_tag, ls.labels[i]));
    pools[ls.labels[i]] = std::move(w);
  }
  return pools;
}

std::vector<Window> flatten_pools(const std::map<int, std::vector<Window>>& pools) {
  std::vector<Window> out;
  for (const auto& [cls, ws] : pools) out.insert(out.end(), ws.begin(), ws.end());
  return out;
}

struct SeedContext {
  uint64_t seed = 0;
  Backbone model;  // pretrained once per seed, copied per run
  double source_train_acc = 0.0;
  StreamSchedule stream;  // shared by every method/grid point (fairness)
  std::vector<Window> heldout;
};

SeedContext build_seed_context(const ExperimentConfig& cfg, uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;

  auto source_pools = make_pools(cfg.gen, cfg.gen.source_duration_s, mix_seed(seed, 1), 1);
  GeneratorConfig stream_gen = cfg.gen;
  for (auto& c : stream_gen.classes) c.noise_std_g *= cfg.gen.stream_noise_scale;
  auto stream_pools = make_pools(stream_gen, cfg.gen.stream_duration_s, mix_seed(seed, 2), 2);
  auto heldout_pools = make_pools(cfg.gen, cfg.gen.heldout_duration_s, mix_seed(seed, 3), 3);

  ctx.model = Backbone::init(cfg.backbone, mix_seed(seed, 10));
  ctx.source_train_acc =
      init_pretrained(ctx.model, flatten_pools(source_pools), cfg.pretrain, mix_seed(seed, 11));

  ctx.stream = class_sorted_stream(stream_pools, cfg.params.phase_len, cfg.params.batch_size,
                                   cfg.params.with_replacement, mix_seed(seed, 12));
  if (cfg.params.stream_rotation_deg != 0.0) {
    // Fixed device-frame rotation about the x axis; gravity magnitude is
    // preserved, so the stream stays a ground-truth 1 g stream.
    std::vector<CompoundStage> st(1);
    st[0].start_step = 0;
    st[0].rotation = RotationSpec{{1.0, 0.0, 0.0}, cfg.params.stream_rotation_deg};
    ctx.stream = apply_compound(ctx.stream, st, mix_seed(seed, 13));
  }
  ctx.heldout = flatten_pools(heldout_pools);
  return ctx;
}

struct StreamRunSpec {
  std::string tag;
  Method method = Method::kSourceOnly;
  PittaConfig pcfg;
  int stream_idx = -1;  // -1: the seed's base stream; else index into shifted storage
  // Region boundaries for per-stage metrics (compound protocol).
  std::vector<int64_t> stage_starts;
  bool silhouette_checkpoints = false;
  // Time-constrained execution.
  std::optional<double> budget_ms;
  bool injected_latency = false;
  double injected_latency_ms = 0.0;
};

SingleRun run_stream(const ExperimentConfig& cfg, const SeedContext& ctx,
                     const StreamRunSpec& spec, const StreamSchedule& stream) {
  SingleRun run;
  run.tag = spec.tag;
  run.seed = ctx.seed;
  run.method = spec.method;
  run.run_id = spec.tag + "-s" + std::to_string(ctx.seed);

  Backbone model = ctx.model;  // value copy; each run owns its model
  AdaptState state;
  const StatsMode heldout_mode =
      cfg.params.heldout_train_stats ? StatsMode::kTrain : StatsMode::kEval;
  HeldoutEvaluator held(ctx.heldout, cfg.params.heldout_every, heldout_mode);
  held.check_disjoint(stream);

  if (stream.used_cycling) run.events.push_back("stream pools cycled with replacement");
  run.events.push_back(std::string("batch sampling: ") +
                       (cfg.params.with_replacement ? "with replacement" : "without replacement"));
  run.events.push_back(std::string("heldout normalization: ") +
                       (cfg.params.heldout_train_stats ? "train-stats" : "eval-stats"));

  // Pending delayed update (time-constrained mode).
  struct Pending {
    std::vector<Tensor> grads;
    int64_t land = -1;
  };
  std::optional<Pending> pending;
  int64_t updates_applied = 0, superseded = 0, dropped = 0, skipped = 0;
  std::map<std::string, int64_t> decision_hist;
  double latency_sum_ms = 0.0;
  int64_t latency_count = 0;

  std::vector<double> silhouettes;
  size_t next_stage = 0;

  const int64_t n_steps = stream.steps();
  for (int64_t step = 0; step < n_steps; ++step) {
    if (held.due(step)) held.eval(model, step);

    StepOptions opts;
    opts.defer_update = spec.budget_ms.has_value();
    const auto t0 = std::chrono::steady_clock::now();
    StepOutcome out = engine_step(model, stream.batches[step], state, spec.pcfg, spec.method, opts);
    const auto t1 = std::chrono::steady_clock::now();
    const double measured_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    latency_sum_ms += measured_ms;
    ++latency_count;

    ScheduleDecision decision = ScheduleDecision::kNoUpdate;
    if (spec.budget_ms.has_value()) {
      // Land a pending delayed update at the end of this step; classify this
      // step's update first so a new delayed one supersedes the pending one.
      if (out.update_due && out.deferred_grads.has_value()) {
        const double lat =
            spec.injected_latency ? spec.injected_latency_ms : std::max(measured_ms, 1e-6);
        decision = time_constrained_classify(lat, *spec.budget_ms).decision;
        if (decision == ScheduleDecision::kSafe) {
          if (spec.pcfg.eta != 0.0 && sgd_step(model, *out.deferred_grads, spec.pcfg.eta))
            ++updates_applied;
        } else if (decision == ScheduleDecision::kDelayed) {
          if (pending.has_value()) {
            ++superseded;
            run.events.push_back("pending update superseded at step " + std::to_string(step));
          }
          pending = Pending{std::move(*out.deferred_grads), step + 1};
        } else {
          ++dropped;
        }
      }
      if (pending.has_value() && pending->land == step) {
        if (spec.pcfg.eta != 0.0 && sgd_step(model, pending->grads, spec.pcfg.eta))
          ++updates_applied;
        pending.reset();
      }
    } else {
      if (out.updated) {
        decision = ScheduleDecision::kSafe;
        ++updates_applied;
      }
    }
    if (out.skipped_nonfinite) {
      ++skipped;
      run.events.push_back("non-finite loss or gradient at step " + std::to_string(step) +
                           "; update skipped, state rolled back");
    }
    ++decision_hist[to_string(decision)];

    TraceRow row;
    row.step = step;
    row.phase = stream.phase_of(step);
    row.online_correct = out.online_correct;
    row.online_acc = out.online_acc;
    row.entropy = out.entropy;
    row.g_hat_norm = out.g_hat_norm;
    row.violation = out.violation;
    row.spectral_entropy = out.spectral_entropy_t;
    row.w_t_mean = out.lb.w_t_mean;
    row.lambda_grav_t = out.lb.lambda_grav_t;
    row.lambda_spec_t = out.lb.lambda_spec_t;
    row.decision = decision;
    row.l_stat = out.lb.l_stat;
    row.l_grav = out.lb.l_grav;
    row.l_temp = out.lb.l_temp;
    row.l_spec = out.lb.l_spec;
    row.total = out.lb.total;
    run.trace.rows.push_back(row);

    // Stage-end checkpoints (boundaries of the compound regions).
    if (spec.silhouette_checkpoints && next_stage < spec.stage_starts.size() &&
        step + 1 == spec.stage_starts[next_stage]) {
      auto z = embed(model, ctx.heldout, heldout_mode);
      std::vector<int> labels;
      labels.reserve(ctx.heldout.size());
      for (const auto& w : ctx.heldout) labels.push_back(w.label);
      silhouettes.push_back(silhouette(z, labels));
      ++next_stage;
    }
  }
  held.eval(model, n_steps);
  run.heldout_curve = held.curve();

  if (spec.silhouette_checkpoints) {
    auto z = embed(model, ctx.heldout, heldout_mode);
    std::vector<int> labels;
    labels.reserve(ctx.heldout.size());
    for (const auto& w : ctx.heldout) labels.push_back(w.label);
    silhouettes.push_back(silhouette(z, labels));
    run.extras["silhouette_checkpoints"] = silhouettes;
  }

  // Per-phase online accuracy.
  {
    std::vector<double> sums;
    std::vector<int64_t> counts;
    for (const auto& r : run.trace.rows) {
      if (static_cast<size_t>(r.phase) >= sums.size()) {
        sums.resize(r.phase + 1, 0.0);
        counts.resize(r.phase + 1, 0);
      }
      sums[r.phase] += r.online_acc;
      ++counts[r.phase];
    }
    for (size_t i = 0; i < sums.size(); ++i)
      run.metrics.emplace_back("online_acc_phase" + std::to_string(i),
                               counts[i] ? sums[i] / counts[i] : 0.0);
  }
  // Per-stage online accuracy (compound regions).
  if (!spec.stage_starts.empty()) {
    std::vector<int64_t> bounds = spec.stage_starts;
    bounds.push_back(n_steps);
    int64_t lo = 0;
    for (size_t s = 0; s < bounds.size(); ++s) {
      const int64_t hi = bounds[s];
      double acc = 0.0;
      int64_t cnt = 0;
      for (int64_t t = lo; t < hi; ++t) {
        acc += run.trace.rows[t].online_acc;
        ++cnt;
      }
      run.metrics.emplace_back("online_acc_stage_t" + std::to_string(s), cnt ? acc / cnt : 0.0);
      lo = hi;
    }
    // Spectral entropy over the final (fully compounded) region.
    double se = 0.0;
    int64_t cnt = 0;
    for (int64_t t = bounds[bounds.size() - 2]; t < n_steps; ++t) {
      se += run.trace.rows[t].spectral_entropy;
      ++cnt;
    }
    run.metrics.emplace_back("spectral_entropy_t_last", cnt ? se / cnt : 0.0);
  }

  run.metrics.emplace_back("violation_rate", violation_rate(run.trace));
  run.metrics.emplace_back("heldout_initial", run.heldout_curve.front().accuracy);
  run.metrics.emplace_back("heldout_final", run.heldout_curve.back().accuracy);
  {
    // Hold-out retention at phase ends (T1..Tn).
    size_t pi = 1;
    std::vector<int64_t> ends = stream.phase_boundaries;
    ends.push_back(n_steps);
    for (int64_t e : ends) {
      double best = run.heldout_curve.front().accuracy;
      for (const auto& p : run.heldout_curve)
        if (p.step <= e) best = p.accuracy;
      run.metrics.emplace_back("heldout_t" + std::to_string(pi), best);
      ++pi;
    }
  }
  {
    std::vector<double> ent, viol;
    for (const auto& r : run.trace.rows) {
      ent.push_back(r.entropy);
      viol.push_back(r.violation ? 1.0 : 0.0);
    }
    bool any0 = false, any1 = false;
    for (double v : viol) (v > 0.5 ? any1 : any0) = true;
    run.metrics.emplace_back("entropy_violation_rankcorr",
                             (any0 && any1) ? rank_correlation(ent, viol) : 0.0);
  }
  run.metrics.emplace_back("updates_applied", static_cast<double>(updates_applied));
  run.metrics.emplace_back("updates_skipped_nonfinite", static_cast<double>(skipped));
  run.metrics.emplace_back("online_acc_mean", [&] {
    double s = 0.0;
    for (const auto& r : run.trace.rows) s += r.online_acc;
    return run.trace.rows.empty() ? 0.0 : s / run.trace.rows.size();
  }());
  if (spec.budget_ms.has_value()) {
    run.metrics.emplace_back("updates_superseded", static_cast<double>(superseded));
    run.metrics.emplace_back("updates_dropped", static_cast<double>(dropped));
    run.extras["budget_ms"] = *spec.budget_ms;
    run.extras["latency_mode"] = spec.injected_latency ? "injected" : "measured";
    if (spec.injected_latency) run.extras["injected_latency_ms"] = spec.injected_latency_ms;
  }
  run.extras["decision_histogram"] = decision_hist;
  // Wall-time numbers live only in the report, never in CSVs, so CSV bytes
  // stay reproducible.
  run.extras["timing"] = {{"mean_step_ms", latency_count ? latency_sum_ms / latency_count : 0.0}};
  run.extras["source_train_acc"] = ctx.source_train_acc;
  return run;
}

std::vector<StreamRunSpec> plan_runs(const ExperimentConfig& cfg, const SeedContext& ctx,
                                     std::vector<StreamSchedule>& shifted_storage) {
  std::vector<StreamRunSpec> specs;
  auto base = [&](Method m, const std::string& tag) {
    StreamRunSpec s;
    s.method = m;
    s.tag = tag.empty() ? method_name(m) : method_name(m) + "-" + tag;
    s.pcfg = cfg.pitta;
    return s;
  };

  switch (cfg.protocol) {
    case Protocol::kLongSequence: {
      for (Method m : cfg.methods) specs.push_back(base(m, ""));
      break;
    }
    case Protocol::kLrGrid: {
      for (Method m : cfg.methods)
        for (double lr : cfg.params.lr_grid) {
          auto s = base(m, "lr" + fmt_double_str(lr));
          s.pcfg.eta = lr;
          specs.push_back(std::move(s));
        }
      break;
    }
    case Protocol::kIntervalSweep: {
      for (Method m : cfg.methods)
        for (int64_t k : cfg.params.k_list) {
          auto s = base(m, "K" + std::to_string(k));
          s.pcfg.update_interval = k;
          specs.push_back(std::move(s));
        }
      break;
    }
    case Protocol::kTimeConstrained: {
      for (Method m : cfg.methods)
        for (double b : cfg.params.budgets_ms) {
          auto s = base(m, "budget" + fmt_double_str(b) + "ms");
          s.budget_ms = b;
          s.injected_latency = cfg.params.injected_latency;
          s.injected_latency_ms = cfg.params.injected_latency_ms;
          specs.push_back(std::move(s));
        }
      break;
    }
    case Protocol::kFactorizedShift: {
      auto add_shift = [&](const std::string& tag, const CompoundStage& stage) {
        std::vector<CompoundStage> stages{stage};
        shifted_storage.push_back(
            apply_compound(ctx.stream, stages, mix_seed(ctx.seed, 1000 + shifted_storage.size())));
        for (Method m : cfg.methods) {
          auto s = base(m, tag);
          s.stream_idx = static_cast<int>(shifted_storage.size()) - 1;
          specs.push_back(std::move(s));
        }
      };
      for (double deg : cfg.params.rotations_deg) {
        CompoundStage st;
        st.start_step = 0;
        st.rotation = RotationSpec{{1.0, 0.0, 0.0}, deg};
        add_shift("rot" + fmt_double_str(deg), st);
      }
      for (const auto& pl : cfg.params.placements) {
        CompoundStage st;
        st.start_step = 0;
        st.placement = placement_preset(pl);
        std::string tag = pl;
        std::replace(tag.begin(), tag.end(), '>', '_');
        std::replace(tag.begin(), tag.end(), '-', '_');
        add_shift("place-" + tag, st);
      }
      for (double hz : cfg.params.drift_rates_hz) {
        CompoundStage st;
        st.start_step = 0;
        st.drift = DriftSpec{hz, cfg.gen.rate_hz};
        add_shift("drift" + fmt_double_str(hz) + "hz", st);
      }
      break;
    }
    case Protocol::kCompoundShift: {
      const int64_t n = ctx.stream.steps();
      const int64_t s1 = n / 4, s2 = n / 2, s3 = 3 * n / 4;
      std::vector<CompoundStage> stages(3);
      stages[0].start_step = s1;
      stages[0].rotation = RotationSpec{{1.0, 0.0, 0.0}, cfg.params.compound.t1_rotation_deg};
      stages[1].start_step = s2;
      stages[1].placement = placement_preset(cfg.params.compound.t2_placement);
      stages[2].start_step = s3;
      stages[2].drift = DriftSpec{cfg.params.compound.t3_drift_hz, cfg.gen.rate_hz};
      shifted_storage.push_back(apply_compound(ctx.stream, stages, mix_seed(ctx.seed, 999)));
      for (Method m : cfg.methods) {
        auto s = base(m, "compound");
        s.stream_idx = static_cast<int>(shifted_storage.size()) - 1;
        s.stage_starts = {s1, s2, s3};
        s.silhouette_checkpoints = true;
        specs.push_back(std::move(s));
      }
      break;
    }
  }
  return specs;
}

json metrics_to_json(const SingleRun& run) {
  json m = json::object();
  for (const auto& [k, v] : run.metrics) m[k] = v;
  return m;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  std::string out_dir = cfg.out_dir;
  if (const char* env = std::getenv("PITTA_OUT"); env && *env) out_dir = env;
  if (!opts.out_dir_override.empty()) out_dir = opts.out_dir_override;
  fs::create_directories(out_dir);

  std::vector<uint64_t> seeds = cfg.seeds;
  if (opts.seed_override.has_value()) seeds = {*opts.seed_override};

  struct SeedResult {
    uint64_t seed;
    std::vector<SingleRun> runs;
    std::string error;
  };

  auto run_seed = [&](uint64_t seed) -> SeedResult {
    SeedResult res;
    res.seed = seed;
    try {
      SeedContext ctx = build_seed_context(cfg, seed);
      std::vector<StreamSchedule> shifted;
      auto specs = plan_runs(cfg, ctx, shifted);
      for (const auto& spec : specs) {
        const StreamSchedule& stream =
            spec.stream_idx < 0 ? ctx.stream : shifted[spec.stream_idx];
        res.runs.push_back(run_stream(cfg, ctx, spec, stream));
      }
    } catch (const std::exception& e) {
      res.error = e.what();
    }
    return res;
  };

  // Seeds run in parallel workers; each worker owns its models and traces.
  std::vector<std::future<SeedResult>> futures;
  futures.reserve(seeds.size());
  for (uint64_t s : seeds)
    futures.push_back(std::async(std::launch::async, run_seed, s));

  std::vector<SeedResult> results;
  results.reserve(seeds.size());
  for (auto& f : futures) results.push_back(f.get());

  json report;
  report["schema_version"] = 1;
  report["name"] = cfg.name;
  report["protocol"] = protocol_name(cfg.protocol);
  report["rng_algorithm"] = kRngAlgorithm;
  report["seeds"] = seeds;
  report["batch_size"] = cfg.params.batch_size;
  report["phase_len"] = cfg.params.phase_len;
  report["adaptable_fraction"] = [&] {
    Backbone probe = Backbone::init(cfg.backbone, 0);
    return probe.adaptable_fraction();
  }();

  std::vector<std::string> artifacts;
  json runs_json = json::array();
  std::map<std::string, std::map<std::string, std::vector<double>>> agg;
  int failed = 0;

  for (const auto& res : results) {
    if (!res.error.empty()) {
      ++failed;
      runs_json.push_back(
          {{"seed", res.seed}, {"error", res.error}});
      if (!opts.quiet)
        std::cerr << "seed " << res.seed << " failed: " << res.error << "\n";
      continue;
    }
    for (const auto& run : res.runs) {
      const std::string prefix = out_dir + "/" + run.run_id;
      write_trace_csv(run.trace, prefix + ".trace.csv");
      write_ribbon_csv(run.trace, prefix + ".ribbon.csv");
      write_heldout_csv(run.heldout_curve, prefix + ".heldout.csv");
      write_entropy_violation_csv(run.trace, prefix + ".entropy_violation.csv");
      for (const char* suffix :
           {".trace.csv", ".ribbon.csv", ".heldout.csv", ".entropy_violation.csv"})
        artifacts.push_back(run.run_id + suffix);

      json rj;
      rj["run_id"] = run.run_id;
      rj["seed"] = run.seed;
      rj["tag"] = run.tag;
      rj["metrics"] = metrics_to_json(run);
      rj["events"] = run.events;
      rj["extras"] = run.extras;
      runs_json.push_back(rj);

      for (const auto& [k, v] : run.metrics) agg[run.tag][k].push_back(v);
    }
  }
  report["runs"] = runs_json;
  report["partial"] = failed > 0;

  json aggregate = json::object();
  for (const auto& [tag, metrics] : agg) {
    json mj = json::object();
    for (const auto& [k, vals] : metrics) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double stdev = vals.size() > 1 ? std::sqrt(var / (vals.size() - 1)) : 0.0;
      mj[k] = {{"mean", mean}, {"std", stdev}, {"n", vals.size()}};
    }
    aggregate[tag] = mj;
  }
  report["aggregate"] = aggregate;

  {
    std::ofstream os(out_dir + "/report.json", std::ios::trunc);
    os << report.dump(2) << "\n";
  }
  artifacts.push_back("report.json");

  // MANIFEST: content hash per artifact.
  std::sort(artifacts.begin(), artifacts.end());
  {
    std::ofstream os(out_dir + "/MANIFEST", std::ios::trunc);
    for (const auto& a : artifacts) {
      std::ifstream in(out_dir + "/" + a, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
      os << buf << "  " << a << "\n";
    }
  }

  if (!opts.quiet)
    std::cout << "wrote " << artifacts.size() << " artifacts to " << out_dir
              << (failed ? " (partial)" : "") << "\n";
  return failed;
}

}  // namespace pitta
