#pragma once
// Shared fixtures for the engine-level tests: a compact 3-class synthetic
// setup that pretrains quickly and separates well.

#include <map>
#include <vector>

#include "pitta/backbone.hpp"
#include "pitta/synth.hpp"
#include "pitta/window.hpp"

namespace pitta_test {

using namespace pitta;

inline std::vector<ActivitySpec> three_classes() {
  std::vector<ActivitySpec> specs(3);
  specs[0].name = "still";
  specs[0].kind = ActivityKind::kStatic;
  specs[0].gravity_dir = {0.0, 0.0, 1.0};
  specs[0].noise_std_g = 0.05;

  specs[1].name = "walk";
  specs[1].kind = ActivityKind::kPeriodic;
  specs[1].gravity_dir = {0.0, 0.6, 0.8};
  specs[1].fundamental_hz = 2.0;
  specs[1].amplitude_g = {0.5, 0.4, 0.3};
  specs[1].noise_std_g = 0.05;
  specs[1].harmonics = {{1.0, 1.0}, {2.0, 0.5}};

  specs[2].name = "run";
  specs[2].kind = ActivityKind::kPeriodic;
  specs[2].gravity_dir = {0.6, 0.0, 0.8};
  specs[2].fundamental_hz = 3.2;
  specs[2].amplitude_g = {0.9, 0.8, 0.7};
  specs[2].noise_std_g = 0.08;
  specs[2].harmonics = {{1.0, 1.0}, {3.0, 0.3}};
  return specs;
}

// Windowed per-class pools from a fresh labeled stream.
inline std::map<int, std::vector<Window>> window_pools(double duration_s, uint64_t seed,
                                                       int window_len = 64, int stride = 32,
                                                       uint64_t origin_base = 0) {
  const auto specs = three_classes();
  const LabeledStream ls = gen_labeled_stream(specs, duration_s, 100.0, seed);
  std::map<int, std::vector<Window>> pools;
  for (size_t i = 0; i < ls.segments.size(); ++i)
    pools[ls.labels[i]] =
        make_windows(ls.segments[i], ls.segment_samples[i], 3, window_len, stride, ls.labels[i],
                     100.0, origin_base ? origin_base + i * 1000000 : 0);
  return pools;
}

inline std::vector<Window> flatten(const std::map<int, std::vector<Window>>& pools) {
  std::vector<Window> out;
  for (const auto& [cls, ws] : pools) out.insert(out.end(), ws.begin(), ws.end());
  return out;
}

inline BackboneConfig small_backbone(int window_channels = 3) {
  BackboneConfig cfg;
  cfg.channels_in = window_channels;
  cfg.blocks = {{16, 5, 2}, {32, 5, 2}};
  cfg.embedding_dim = 32;
  cfg.num_classes = 3;
  return cfg;
}

// A quick pretrained model over the given pools (shared across tests).
inline Backbone pretrained_model(const std::map<int, std::vector<Window>>& pools,
                                 const BackboneConfig& cfg, uint64_t seed, int epochs = 12,
                                 double* train_acc = nullptr) {
  Backbone model = Backbone::init(cfg, seed);
  PretrainRecipe recipe;
  recipe.epochs = epochs;
  recipe.lr = 0.05;
  recipe.batch_size = 32;
  const double acc = init_pretrained(model, flatten(pools), recipe, seed + 1);
  if (train_acc) *train_acc = acc;
  return model;
}

inline Batch take_batch(const std::vector<Window>& pool, size_t start, int b) {
  Batch batch;
  for (int i = 0; i < b; ++i) batch.windows.push_back(pool[(start + i) % pool.size()]);
  return batch;
}

}  // namespace pitta_test
