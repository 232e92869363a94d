#pragma once
// Reverse-mode autodiff over a fixed, enumerated op set: conv1d, channel
// normalization, channel affine, relu, mean pooling, linear, softmax pair,
// DFT power aggregation, and the elementwise/reduction algebra the adaptation
// losses are built from. Forward values are computed eagerly; backward()
// replays the tape in reverse. One tape per step, discarded after use.

#include <functional>
#include <vector>

#include "pitta/tensor.hpp"

namespace pitta {

enum class NormKind {
  kBatch,    // statistics per channel over (batch, time)
  kInstance  // statistics per (window, channel) over time
};

class Tape {
public:
  // --- leaves -------------------------------------------------------------
  int leaf(Tensor v, bool requires_grad = false);
  int scalar_leaf(double v) { return leaf(Tensor::scalar(v)); }

  // --- network ops ----------------------------------------------------------
  // x: (B,Cin,T), w: (Cout,Cin,K), b: (Cout) -> (B,Cout,To)
  int conv1d(int x, int w, int b, int stride, int pad);
  // Normalize with statistics computed on the fly. Reports the statistics it
  // used through mean_out/var_out (per channel for kBatch, per window-channel
  // row for kInstance).
  int channel_norm(int x, double eps, NormKind kind, Tensor* mean_out = nullptr,
                   Tensor* var_out = nullptr);
  // Normalize with fixed statistics (stored running stats); mean/var are (C).
  int channel_norm_running(int x, double eps, const Tensor& mean, const Tensor& var);
  // y[b,c,t] = gamma[c] * x[b,c,t] + beta[c]
  int channel_affine(int x, int gamma, int beta);
  // Same contraction with constant per-channel coefficients.
  int channel_affine_const(int x, const std::vector<double>& scale,
                           const std::vector<double>& shift);
  int relu(int x);
  int mean_pool_time(int x);                      // (B,C,T) -> (B,C)
  int linear(int x, int w, int b);                // (B,D),(O,D),(O) -> (B,O)
  int softmax(int x);                             // row-wise, (B,K)
  int log_softmax(int x);                         // row-wise, (B,K)
  // Channel-aggregated DFT power, DC excluded: (B,C,T) -> (F), F = T/2.
  int dft_power_agg(int x);

  // --- elementwise / algebra ------------------------------------------------
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int add_const(int a, Tensor c);
  int mul_const(int a, Tensor c);
  int add_scalar(int a, double c);
  int mul_scalar(int a, double c);
  int scale_by(int x, int s);  // tensor * scalar node
  int recip(int x);
  int log_eps(int x, double eps);
  int square(int x);
  int sqrt_of(int x);

  // --- reductions -------------------------------------------------------------
  int sum_all(int x);
  int mean_all(int x);
  int row_sum(int x);                              // (B,K) -> (B)
  int mean_rows(int x);                            // (B,D) -> (D)
  int channel_mean_bt(int x, int c_count);         // (B,C,T) -> (c_count)
  int dot_const(int x, const std::vector<double>& c);
  int dot_nodes(int a, int b);
  // -mean_b logp[b, label_b]; cross-entropy head for pretraining.
  int gather_nll(int logp, const std::vector<int>& labels);

  // --- access ------------------------------------------------------------------
  const Tensor& val(int id) const { return nodes_[id].value; }
  double scalar(int id) const { return nodes_[id].value.data[0]; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Gradient of the last backward() target w.r.t. node id (zeros if untouched).
  Tensor grad_of(int id) const;

  void backward(int loss_id);

  size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_live = false;
    std::function<void()> back;  // nullptr for leaves
  };

  std::vector<Node> nodes_;

  int push(Tensor value, bool needs_grad, std::function<void()> back);
  Tensor& g(int id);  // lazily allocate gradient storage
  bool live(int id) const { return nodes_[id].grad_live; }
  // Accumulate into the gradient of `id` if it participates in the pass.
  void acc(int id, size_t flat_index, double v) {
    if (nodes_[id].needs_grad) g(id).data[flat_index] += v;
  }
};

}  // namespace pitta
