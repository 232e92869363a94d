#pragma once
// Small configurable 1-D network with channel-wise normalization. The input
// normalization layer (norm + affine) is the psi tap: taken before the first
// nonlinearity, with channel correspondence to the inertial axes intact.
// Only normalization affine parameters (and, behind a flag, running
// statistics) are adaptable online; everything else is frozen after
// pretraining.
//
// Layout: input norm -> affine (psi tap) -> relu, then per block
// conv1d -> channel norm -> affine -> relu. Head: mean-pool over time ->
// linear -> relu (penultimate embedding z) -> linear (logits).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pitta/tape.hpp"
#include "pitta/window.hpp"

namespace pitta {

struct ConvBlockCfg {
  int out_channels = 16;
  int kernel = 5;
  int stride = 2;
};

struct BackboneConfig {
  int channels_in = 3;
  std::vector<ConvBlockCfg> blocks{{16, 5, 2}, {32, 5, 2}};
  int embedding_dim = 32;
  int num_classes = 3;
  double norm_epsilon = 1e-5;
  NormKind norm_kind = NormKind::kBatch;
  double running_momentum = 0.1;
  bool adapt_running_stats = false;  // optional running-statistics adaptation

  void validate() const;
};

// Normalization statistics convention at test time: kTrain uses
// current-batch statistics (source-free convention), kEval uses the stored
// running statistics.
enum class StatsMode { kTrain, kEval };

enum class GradScope { kNone, kAdaptable, kAll };

struct NormLayer {
  Tensor gamma, beta;        // adaptable
  Tensor run_mean, run_var;  // running statistics (eval mode)
};

struct ConvBlock {
  Tensor w, b;  // frozen after pretraining
  NormLayer norm;
  int kernel = 0, stride = 1, pad = 0;
};

// Statistics recorded at the psi tap, used to express the adapted
// representation back in input-scale gravity units.
struct PsiStats {
  Tensor mean, var;  // (C) for batch/eval stats, (B,C) for instance stats
  NormKind kind = NormKind::kBatch;
  bool per_instance = false;
};

struct ForwardPass {
  std::unique_ptr<Tape> tape;
  int x = -1, psi = -1, z = -1, logits = -1, probs = -1;
  int B = 0;
  PsiStats psi_stats;
  std::vector<int> adaptable_leaves;  // gamma/beta leaf ids, partition order
  std::vector<int> all_param_leaves;  // every parameter leaf, partition order
};

class Backbone {
public:
  BackboneConfig cfg;
  NormLayer input_norm;
  std::vector<ConvBlock> blocks;
  Tensor fc_embed_w, fc_embed_b;
  Tensor fc_out_w, fc_out_b;

  static Backbone init(const BackboneConfig& cfg, uint64_t seed);

  // Parameter partition. Order is stable and shared by gradients, SGD, and
  // serialization.
  std::vector<Tensor*> adaptable_tensors();
  std::vector<const Tensor*> adaptable_tensors() const;
  std::vector<Tensor*> frozen_tensors();
  std::vector<const Tensor*> frozen_tensors() const;
  std::vector<Tensor*> all_param_tensors();

  size_t adaptable_count() const;
  size_t frozen_count() const;
  double adaptable_fraction() const;
  uint64_t frozen_checksum() const;

  // Versioned binary container, magic "PITM"; round-trips bitwise.
  void save(const std::string& path) const;
  static Backbone load(const std::string& path);
};

// Builds the forward tape for a batch. update_running refreshes running
// statistics from batch statistics (pretraining, or test-time when
// adapt_running_stats is enabled).
ForwardPass forward(Backbone& model, const Batch& batch, StatsMode mode,
                    GradScope scope = GradScope::kNone, bool update_running = false);

// Gradients of a caller-built scalar loss w.r.t. the adaptable partition.
// The builder receives the pass and must return a scalar node id. Throws if
// the loss value is non-finite.
std::vector<Tensor> grad_adaptable(Backbone& model, const Batch& batch, StatsMode mode,
                                   const std::function<int(ForwardPass&)>& loss_builder);

// theta_A <- theta_A - eta * g. Returns false (and leaves the model
// untouched) if any gradient entry is non-finite.
bool sgd_step(Backbone& model, const std::vector<Tensor>& grads, double eta);

// Offline source training: cross-entropy SGD over all parameters, then the
// conv/linear weights are frozen by convention. Deterministic for a fixed
// seed. Returns final train-set accuracy.
struct PretrainRecipe {
  int epochs = 30;
  double lr = 0.05;
  int batch_size = 32;
};
double init_pretrained(Backbone& model, const std::vector<Window>& source_data,
                       const PretrainRecipe& recipe, uint64_t seed);

// Plain accuracy on a window set (argmax of logits).
double accuracy(Backbone& model, const std::vector<Window>& windows, StatsMode mode,
                int eval_batch = 64);

// Batch -> (B, C, T) tensor.
Tensor batch_to_tensor(const Batch& batch);

}  // namespace pitta
