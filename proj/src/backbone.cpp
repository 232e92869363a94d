#include "pitta/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "pitta/rng.hpp"

namespace pitta {

void BackboneConfig::validate() const {
  if (channels_in < 1) throw Error("BackboneConfig: channels_in must be >= 1");
  if (blocks.empty()) throw Error("BackboneConfig: need at least one conv block");
  for (const auto& b : blocks)
    if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1)
      throw Error("BackboneConfig: bad block dimensions");
  if (embedding_dim < 1 || num_classes < 2)
    throw Error("BackboneConfig: embedding_dim >= 1 and num_classes >= 2 required");
  if (norm_epsilon <= 0.0) throw Error("BackboneConfig: norm_epsilon must be positive");
  if (running_momentum <= 0.0 || running_momentum > 1.0)
    throw Error("BackboneConfig: running_momentum must be in (0, 1]");
}

namespace {

NormLayer make_norm(int channels) {
  NormLayer n;
  n.gamma = Tensor({channels});
  std::fill(n.gamma.data.begin(), n.gamma.data.end(), 1.0);
  n.beta = Tensor({channels});
  n.run_mean = Tensor({channels});
  n.run_var = Tensor({channels});
  std::fill(n.run_var.data.begin(), n.run_var.data.end(), 1.0);
  return n;
}

void fill_normal(Tensor& t, Rng& rng, double std) {
  for (auto& v : t.data) v = rng.normal(0.0, std);
}

}  // namespace

Backbone Backbone::init(const BackboneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Backbone m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, 0xbbull));

  m.input_norm = make_norm(cfg.channels_in);
  int ch = cfg.channels_in;
  for (const auto& bc : cfg.blocks) {
    ConvBlock blk;
    blk.kernel = bc.kernel;
    blk.stride = bc.stride;
    blk.pad = (bc.kernel - 1) / 2;
    blk.w = Tensor({bc.out_channels, ch, bc.kernel});
    fill_normal(blk.w, rng, std::sqrt(2.0 / (static_cast<double>(ch) * bc.kernel)));
    blk.b = Tensor({bc.out_channels});
    blk.norm = make_norm(bc.out_channels);
    m.blocks.push_back(std::move(blk));
    ch = bc.out_channels;
  }
  m.fc_embed_w = Tensor({cfg.embedding_dim, ch});
  fill_normal(m.fc_embed_w, rng, std::sqrt(2.0 / ch));
  m.fc_embed_b = Tensor({cfg.embedding_dim});
  m.fc_out_w = Tensor({cfg.num_classes, cfg.embedding_dim});
  fill_normal(m.fc_out_w, rng, std::sqrt(2.0 / cfg.embedding_dim));
  m.fc_out_b = Tensor({cfg.num_classes});
  return m;
}

std::vector<Tensor*> Backbone::adaptable_tensors() {
  std::vector<Tensor*> out{&input_norm.gamma, &input_norm.beta};
  for (auto& b : blocks) {
    out.push_back(&b.norm.gamma);
    out.push_back(&b.norm.beta);
  }
  return out;
}

std::vector<const Tensor*> Backbone::adaptable_tensors() const {
  auto* self = const_cast<Backbone*>(this);
  auto v = self->adaptable_tensors();
  return {v.begin(), v.end()};
}

std::vector<Tensor*> Backbone::frozen_tensors() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    out.push_back(&b.w);
    out.push_back(&b.b);
  }
  out.push_back(&fc_embed_w);
  out.push_back(&fc_embed_b);
  out.push_back(&fc_out_w);
  out.push_back(&fc_out_b);
  return out;
}

std::vector<const Tensor*> Backbone::frozen_tensors() const {
  auto* self = const_cast<Backbone*>(this);
  auto v = self->frozen_tensors();
  return {v.begin(), v.end()};
}

std::vector<Tensor*> Backbone::all_param_tensors() {
  auto out = adaptable_tensors();
  auto f = frozen_tensors();
  out.insert(out.end(), f.begin(), f.end());
  return out;
}

size_t Backbone::adaptable_count() const {
  size_t n = 0;
  for (const Tensor* t : adaptable_tensors()) n += t->numel();
  return n;
}

size_t Backbone::frozen_count() const {
  size_t n = 0;
  for (const Tensor* t : frozen_tensors()) n += t->numel();
  return n;
}

double Backbone::adaptable_fraction() const {
  const double a = static_cast<double>(adaptable_count());
  return a / (a + static_cast<double>(frozen_count()));
}

uint64_t Backbone::frozen_checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor* t : frozen_tensors()) h = fnv1a64(t->data, h);
  return h;
}

Tensor batch_to_tensor(const Batch& batch) {
  batch.validate();
  const int B = batch.size();
  const int C = batch.windows.front().channels;
  const int T = batch.windows.front().time_len;
  Tensor x({B, C, T});
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) x.at3(b, c, t, C, T) = batch.windows[b].at(t, c);
  return x;
}

namespace {

// Normalize + affine for one layer; returns the affine output node and
// optionally records the statistics used.
int norm_affine(Tape& tape, int x, NormLayer& layer, const BackboneConfig& cfg, StatsMode mode,
                bool update_running, bool grad_params, PsiStats* record,
                std::vector<int>* leaves) {
  int xn;
  Tensor mu, var;
  if (mode == StatsMode::kTrain) {
    xn = tape.channel_norm(x, cfg.norm_epsilon, cfg.norm_kind, &mu, &var);
    if (update_running && cfg.norm_kind == NormKind::kBatch) {
      const double m = cfg.running_momentum;
      for (size_t i = 0; i < layer.run_mean.numel(); ++i) {
        layer.run_mean.data[i] = (1.0 - m) * layer.run_mean.data[i] + m * mu.data[i];
        layer.run_var.data[i] = (1.0 - m) * layer.run_var.data[i] + m * var.data[i];
      }
    }
  } else {
    xn = tape.channel_norm_running(x, cfg.norm_epsilon, layer.run_mean, layer.run_var);
    mu = layer.run_mean;
    var = layer.run_var;
  }
  if (record) {
    record->mean = mu;
    record->var = var;
    record->kind = (mode == StatsMode::kTrain) ? cfg.norm_kind : NormKind::kBatch;
    record->per_instance = (mode == StatsMode::kTrain && cfg.norm_kind == NormKind::kInstance);
  }
  const int gid = tape.leaf(layer.gamma, grad_params);
  const int bid = tape.leaf(layer.beta, grad_params);
  if (leaves) {
    leaves->push_back(gid);
    leaves->push_back(bid);
  }
  return tape.channel_affine(xn, gid, bid);
}

}  // namespace

ForwardPass forward(Backbone& model, const Batch& batch, StatsMode mode, GradScope scope,
                    bool update_running) {
  const Tensor x = batch_to_tensor(batch);
  if (x.shape[1] != model.cfg.channels_in)
    throw Error("forward: batch channel count does not match config");

  ForwardPass fp;
  fp.tape = std::make_unique<Tape>();
  Tape& tape = *fp.tape;
  fp.B = x.shape[0];

  const bool grad_norm = scope != GradScope::kNone;
  const bool grad_all = scope == GradScope::kAll;

  fp.x = tape.leaf(x);
  std::vector<int> adapt_leaves;

  fp.psi = norm_affine(tape, fp.x, model.input_norm, model.cfg, mode, update_running, grad_norm,
                       &fp.psi_stats, &adapt_leaves);

  // The tap is pre-activation; the activation right after it makes the input
  // affine a real lever on the downstream features (a later normalization
  // would otherwise cancel a constant channel shift exactly).
  int h = tape.relu(fp.psi);
  std::vector<int> frozen_leaves;
  for (auto& blk : model.blocks) {
    const int wid = tape.leaf(blk.w, grad_all);
    const int bid = tape.leaf(blk.b, grad_all);
    frozen_leaves.push_back(wid);
    frozen_leaves.push_back(bid);
    h = tape.conv1d(h, wid, bid, blk.stride, blk.pad);
    h = norm_affine(tape, h, blk.norm, model.cfg, mode, update_running, grad_norm, nullptr,
                    &adapt_leaves);
    h = tape.relu(h);
  }

  const int pooled = tape.mean_pool_time(h);
  const int ew = tape.leaf(model.fc_embed_w, grad_all);
  const int eb = tape.leaf(model.fc_embed_b, grad_all);
  const int ow = tape.leaf(model.fc_out_w, grad_all);
  const int ob = tape.leaf(model.fc_out_b, grad_all);
  frozen_leaves.insert(frozen_leaves.end(), {ew, eb, ow, ob});

  const int e = tape.linear(pooled, ew, eb);
  fp.z = tape.relu(e);
  fp.logits = tape.linear(fp.z, ow, ob);
  fp.probs = tape.softmax(fp.logits);

  fp.adaptable_leaves = adapt_leaves;
  fp.all_param_leaves = adapt_leaves;
  fp.all_param_leaves.insert(fp.all_param_leaves.end(), frozen_leaves.begin(),
                             frozen_leaves.end());
  return fp;
}

std::vector<Tensor> grad_adaptable(Backbone& model, const Batch& batch, StatsMode mode,
                                   const std::function<int(ForwardPass&)>& loss_builder) {
  ForwardPass fp = forward(model, batch, mode, GradScope::kAdaptable);
  const int loss = loss_builder(fp);
  const double lv = fp.tape->scalar(loss);
  if (!std::isfinite(lv)) throw Error("grad_adaptable: non-finite loss");
  fp.tape->backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(fp.adaptable_leaves.size());
  for (int id : fp.adaptable_leaves) grads.push_back(fp.tape->grad_of(id));
  return grads;
}

bool sgd_step(Backbone& model, const std::vector<Tensor>& grads, double eta) {
  if (eta < 0.0) throw Error("sgd_step: negative learning rate");
  auto params = model.adaptable_tensors();
  if (grads.size() != params.size()) throw Error("sgd_step: gradient count mismatch");
  for (const Tensor& gt : grads)
    if (!all_finite(gt.data)) return false;
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->numel() != grads[i].numel()) throw Error("sgd_step: gradient shape mismatch");
    for (size_t j = 0; j < grads[i].numel(); ++j) params[i]->data[j] -= eta * grads[i].data[j];
  }
  return true;
}

double init_pretrained(Backbone& model, const std::vector<Window>& source_data,
                       const PretrainRecipe& recipe, uint64_t seed) {
  if (source_data.empty()) throw Error("init_pretrained: empty source data");
  {
    int first = source_data.front().label;
    bool multi = false;
    for (const auto& w : source_data)
      if (w.label != first) {
        multi = true;
        break;
      }
    if (!multi) throw Error("init_pretrained: single-class source data");
  }

  Rng shuffle_rng(mix_seed(seed, 0x7e41ull));
  std::vector<size_t> order(source_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    // Fisher-Yates with the run generator; source training is offline, so
    // shuffling here does not violate the streaming protocol.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    for (size_t start = 0; start + recipe.batch_size <= order.size();
         start += recipe.batch_size) {
      Batch b;
      std::vector<int> labels;
      for (int i = 0; i < recipe.batch_size; ++i) {
        b.windows.push_back(source_data[order[start + i]]);
        labels.push_back(b.windows.back().label);
      }
      ForwardPass fp = forward(model, b, StatsMode::kTrain, GradScope::kAll, true);
      Tape& tape = *fp.tape;
      const int lp = tape.log_softmax(fp.logits);
      const int loss = tape.gather_nll(lp, labels);
      if (!std::isfinite(tape.scalar(loss))) continue;
      tape.backward(loss);
      auto params = model.all_param_tensors();
      for (size_t i = 0; i < params.size(); ++i) {
        const Tensor gt = tape.grad_of(fp.all_param_leaves[i]);
        if (!all_finite(gt.data)) continue;
        for (size_t j = 0; j < gt.numel(); ++j) params[i]->data[j] -= recipe.lr * gt.data[j];
      }
    }
  }
  return accuracy(model, source_data, StatsMode::kEval);
}

double accuracy(Backbone& model, const std::vector<Window>& windows, StatsMode mode,
                int eval_batch) {
  if (windows.empty()) throw Error("accuracy: empty window set");
  size_t correct = 0;
  for (size_t start = 0; start < windows.size(); start += eval_batch) {
    Batch b;
    const size_t end = std::min(windows.size(), start + eval_batch);
    b.windows.assign(windows.begin() + start, windows.begin() + end);
    ForwardPass fp = forward(model, b, mode, GradScope::kNone);
    const Tensor& logits = fp.tape->val(fp.logits);
    const int K = logits.shape[1];
    for (int i = 0; i < b.size(); ++i) {
      const size_t off = static_cast<size_t>(i) * K;
      int arg = 0;
      for (int k = 1; k < K; ++k)
        if (logits.data[off + k] > logits.data[off + arg]) arg = k;
      if (arg == b.windows[i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(windows.size());
}

// --- serialization ----------------------------------------------------------

namespace {

void put_f64(std::ofstream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw Error("model load: truncated file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_tensor(std::ofstream& os, const Tensor& t) {
  for (double v : t.data) put_f64(os, v);
}

void get_tensor(std::ifstream& is, Tensor& t) {
  for (auto& v : t.data) v = get_f64(is);
}

}  // namespace

void Backbone::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw Error("Backbone::save: cannot open " + path);
  os.write("PITM", 4);
  const unsigned char version = 1;
  os.write(reinterpret_cast<const char*>(&version), 1);
  put_f64(os, cfg.channels_in);
  put_f64(os, static_cast<double>(cfg.blocks.size()));
  for (const auto& b : cfg.blocks) {
    put_f64(os, b.out_channels);
    put_f64(os, b.kernel);
    put_f64(os, b.stride);
  }
  put_f64(os, cfg.embedding_dim);
  put_f64(os, cfg.num_classes);
  put_f64(os, cfg.norm_epsilon);
  put_f64(os, cfg.norm_kind == NormKind::kBatch ? 0.0 : 1.0);
  put_f64(os, cfg.running_momentum);
  put_f64(os, cfg.adapt_running_stats ? 1.0 : 0.0);

  auto put_norm = [&](const NormLayer& n) {
    put_tensor(os, n.gamma);
    put_tensor(os, n.beta);
    put_tensor(os, n.run_mean);
    put_tensor(os, n.run_var);
  };
  put_norm(input_norm);
  for (const auto& b : blocks) {
    put_tensor(os, b.w);
    put_tensor(os, b.b);
    put_norm(b.norm);
  }
  put_tensor(os, fc_embed_w);
  put_tensor(os, fc_embed_b);
  put_tensor(os, fc_out_w);
  put_tensor(os, fc_out_b);
}

Backbone Backbone::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("Backbone::load: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::strncmp(magic, "PITM", 4) != 0) throw Error("Backbone::load: bad magic");
  unsigned char version = 0;
  is.read(reinterpret_cast<char*>(&version), 1);
  if (version != 1) throw Error("Backbone::load: unsupported version");

  BackboneConfig cfg;
  cfg.channels_in = static_cast<int>(get_f64(is));
  const int nb = static_cast<int>(get_f64(is));
  cfg.blocks.clear();
  for (int i = 0; i < nb; ++i) {
    ConvBlockCfg b;
    b.out_channels = static_cast<int>(get_f64(is));
    b.kernel = static_cast<int>(get_f64(is));
    b.stride = static_cast<int>(get_f64(is));
    cfg.blocks.push_back(b);
  }
  cfg.embedding_dim = static_cast<int>(get_f64(is));
  cfg.num_classes = static_cast<int>(get_f64(is));
  cfg.norm_epsilon = get_f64(is);
  cfg.norm_kind = get_f64(is) == 0.0 ? NormKind::kBatch : NormKind::kInstance;
  cfg.running_momentum = get_f64(is);
  cfg.adapt_running_stats = get_f64(is) != 0.0;

  Backbone m = Backbone::init(cfg, 0);
  auto get_norm = [&](NormLayer& n) {
    get_tensor(is, n.gamma);
    get_tensor(is, n.beta);
    get_tensor(is, n.run_mean);
    get_tensor(is, n.run_var);
  };
  get_norm(m.input_norm);
  for (auto& b : m.blocks) {
    get_tensor(is, b.w);
    get_tensor(is, b.b);
    get_norm(b.norm);
  }
  get_tensor(is, m.fc_embed_w);
  get_tensor(is, m.fc_embed_b);
  get_tensor(is, m.fc_out_w);
  get_tensor(is, m.fc_out_b);
  return m;
}

}  // namespace pitta
