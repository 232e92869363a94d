#include "pitta/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pitta/fft.hpp"

namespace pitta {

int Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::g(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad.shape = n.value.shape;
    n.grad.data.assign(n.value.data.size(), 0.0);
    n.grad_live = true;
  }
  return n.grad;
}

Tensor Tape::grad_of(int id) const {
  const Node& n = nodes_[id];
  if (n.grad_live) return n.grad;
  Tensor z;
  z.shape = n.value.shape;
  z.data.assign(n.value.data.size(), 0.0);
  return z;
}

void Tape::backward(int loss_id) {
  if (nodes_[loss_id].value.numel() != 1) throw Error("backward: loss must be scalar");
  for (auto& n : nodes_) n.grad_live = false;
  g(loss_id).data[0] = 1.0;
  for (int i = loss_id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.grad_live && n.back) n.back();
  }
}

int Tape::leaf(Tensor v, bool requires_grad) { return push(std::move(v), requires_grad, nullptr); }

int Tape::conv1d(int x, int w, int b, int stride, int pad) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (xv.shape.size() != 3 || wv.shape.size() != 3) throw Error("conv1d: rank mismatch");
  const int B = xv.shape[0], Ci = xv.shape[1], T = xv.shape[2];
  const int Co = wv.shape[0], K = wv.shape[2];
  if (wv.shape[1] != Ci || bv.shape != std::vector<int>{Co})
    throw Error("conv1d: weight/bias shape mismatch");
  const int To = (T + 2 * pad - K) / stride + 1;
  if (To < 1) throw Error("conv1d: output length < 1");

  Tensor out({B, Co, To});
  for (int bi = 0; bi < B; ++bi)
    for (int o = 0; o < Co; ++o)
      for (int to = 0; to < To; ++to) {
        double s = bv[o];
        for (int ci = 0; ci < Ci; ++ci)
          for (int k = 0; k < K; ++k) {
            const int ti = to * stride + k - pad;
            if (ti >= 0 && ti < T)
              s += xv.at3(bi, ci, ti, Ci, T) * wv.at3(o, ci, k, Ci, K);
          }
        out.at3(bi, o, to, Co, To) = s;
      }

  const bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, w, b, out_id, B, Ci, T, Co, K, To, stride, pad]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      const Tensor& wv2 = nodes_[w].value;
      const bool nx = nodes_[x].needs_grad, nw = nodes_[w].needs_grad, nb = nodes_[b].needs_grad;
      for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < Co; ++o)
          for (int to = 0; to < To; ++to) {
            const double gv = go.at3(bi, o, to, Co, To);
            if (gv == 0.0) continue;
            if (nb) g(b).data[o] += gv;
            for (int ci = 0; ci < Ci; ++ci)
              for (int k = 0; k < K; ++k) {
                const int ti = to * stride + k - pad;
                if (ti < 0 || ti >= T) continue;
                if (nx) g(x).at3(bi, ci, ti, Ci, T) += gv * wv2.at3(o, ci, k, Ci, K);
                if (nw) g(w).at3(o, ci, k, Ci, K) += gv * xv2.at3(bi, ci, ti, Ci, T);
              }
          }
    };
  }
  return out_id;
}

int Tape::channel_norm(int x, double eps, NormKind kind, Tensor* mean_out, Tensor* var_out) {
  const Tensor& xv = nodes_[x].value;
  if (xv.shape.size() != 3) throw Error("channel_norm: rank mismatch");
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];

  // Groups: kBatch -> one group per channel (size B*T); kInstance -> one per
  // (window, channel) row (size T).
  const int groups = (kind == NormKind::kBatch) ? C : B * C;
  const double m = (kind == NormKind::kBatch) ? static_cast<double>(B) * T : T;
  std::vector<double> mu(groups, 0.0), var(groups, 0.0), inv(groups, 0.0);

  auto group_of = [&](int bi, int c) { return kind == NormKind::kBatch ? c : bi * C + c; };

  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) mu[group_of(bi, c)] += xv.at3(bi, c, t, C, T);
  for (auto& v : mu) v /= m;
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) {
        const double d = xv.at3(bi, c, t, C, T) - mu[group_of(bi, c)];
        var[group_of(bi, c)] += d * d;
      }
  for (int gi = 0; gi < groups; ++gi) {
    var[gi] /= m;
    inv[gi] = 1.0 / std::sqrt(var[gi] + eps);
  }

  Tensor out({B, C, T});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) {
        const int gi = group_of(bi, c);
        out.at3(bi, c, t, C, T) = (xv.at3(bi, c, t, C, T) - mu[gi]) * inv[gi];
      }

  if (mean_out) *mean_out = (kind == NormKind::kBatch) ? Tensor({C}, mu) : Tensor({B, C}, mu);
  if (var_out) *var_out = (kind == NormKind::kBatch) ? Tensor({C}, var) : Tensor({B, C}, var);

  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T, kind, inv, m]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& yv = nodes_[out_id].value;
      const int groups = (kind == NormKind::kBatch) ? C : B * C;
      auto group_of2 = [&](int bi, int c) { return kind == NormKind::kBatch ? c : bi * C + c; };
      std::vector<double> s1(groups, 0.0), s2(groups, 0.0);
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t) {
            const int gi = group_of2(bi, c);
            const double gv = go.at3(bi, c, t, C, T);
            s1[gi] += gv;
            s2[gi] += gv * yv.at3(bi, c, t, C, T);
          }
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t) {
            const int gi = group_of2(bi, c);
            const double gv = go.at3(bi, c, t, C, T);
            const double yvv = yv.at3(bi, c, t, C, T);
            g(x).at3(bi, c, t, C, T) += inv[gi] * (gv - s1[gi] / m - yvv * s2[gi] / m);
          }
    };
  }
  return out_id;
}

int Tape::channel_norm_running(int x, double eps, const Tensor& mean, const Tensor& var) {
  const Tensor& xv = nodes_[x].value;
  if (xv.shape.size() != 3) throw Error("channel_norm_running: rank mismatch");
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  if (mean.numel() != static_cast<size_t>(C) || var.numel() != static_cast<size_t>(C))
    throw Error("channel_norm_running: stats shape mismatch");
  std::vector<double> inv(C);
  for (int c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out({B, C, T});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t)
        out.at3(bi, c, t, C, T) = (xv.at3(bi, c, t, C, T) - mean[c]) * inv[c];

  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T, inv]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t)
            g(x).at3(bi, c, t, C, T) += go.at3(bi, c, t, C, T) * inv[c];
    };
  }
  return out_id;
}

int Tape::channel_affine(int x, int gamma, int beta) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& gv = nodes_[gamma].value;
  const Tensor& bv = nodes_[beta].value;
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  if (gv.numel() != static_cast<size_t>(C) || bv.numel() != static_cast<size_t>(C))
    throw Error("channel_affine: parameter shape mismatch");

  Tensor out({B, C, T});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t)
        out.at3(bi, c, t, C, T) = gv[c] * xv.at3(bi, c, t, C, T) + bv[c];

  const bool ng =
      nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, gamma, beta, out_id, B, C, T]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      const Tensor& gv2 = nodes_[gamma].value;
      const bool nx = nodes_[x].needs_grad;
      const bool ngm = nodes_[gamma].needs_grad;
      const bool nbt = nodes_[beta].needs_grad;
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t) {
            const double gvv = go.at3(bi, c, t, C, T);
            if (nx) g(x).at3(bi, c, t, C, T) += gvv * gv2[c];
            if (ngm) g(gamma).data[c] += gvv * xv2.at3(bi, c, t, C, T);
            if (nbt) g(beta).data[c] += gvv;
          }
    };
  }
  return out_id;
}

int Tape::channel_affine_const(int x, const std::vector<double>& scale,
                               const std::vector<double>& shift) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  if (scale.size() != static_cast<size_t>(C) || shift.size() != static_cast<size_t>(C))
    throw Error("channel_affine_const: coefficient size mismatch");

  Tensor out({B, C, T});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t)
        out.at3(bi, c, t, C, T) = scale[c] * xv.at3(bi, c, t, C, T) + shift[c];

  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T, scale]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t)
            g(x).at3(bi, c, t, C, T) += go.at3(bi, c, t, C, T) * scale[c];
    };
  }
  return out_id;
}

int Tape::relu(int x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out = xv;
  for (auto& v : out.data) v = std::max(0.0, v);
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      for (size_t i = 0; i < xv2.numel(); ++i)
        if (xv2.data[i] > 0.0) g(x).data[i] += go.data[i];
    };
  }
  return out_id;
}

int Tape::mean_pool_time(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  Tensor out({B, C});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int t = 0; t < T; ++t) s += xv.at3(bi, c, t, C, T);
      out.data[static_cast<size_t>(bi) * C + c] = s / T;
    }
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
          const double gv = go.data[static_cast<size_t>(bi) * C + c] / T;
          for (int t = 0; t < T; ++t) g(x).at3(bi, c, t, C, T) += gv;
        }
    };
  }
  return out_id;
}

int Tape::linear(int x, int w, int b) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  const int B = xv.shape[0], D = xv.shape[1];
  const int O = wv.shape[0];
  if (wv.shape[1] != D || bv.numel() != static_cast<size_t>(O))
    throw Error("linear: shape mismatch");

  Tensor out({B, O});
  for (int bi = 0; bi < B; ++bi)
    for (int o = 0; o < O; ++o) {
      double s = bv[o];
      for (int d = 0; d < D; ++d)
        s += xv.data[static_cast<size_t>(bi) * D + d] * wv.data[static_cast<size_t>(o) * D + d];
      out.data[static_cast<size_t>(bi) * O + o] = s;
    }

  const bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, w, b, out_id, B, D, O]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      const Tensor& wv2 = nodes_[w].value;
      const bool nx = nodes_[x].needs_grad, nw = nodes_[w].needs_grad, nb = nodes_[b].needs_grad;
      for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < O; ++o) {
          const double gv = go.data[static_cast<size_t>(bi) * O + o];
          if (gv == 0.0) continue;
          if (nb) g(b).data[o] += gv;
          for (int d = 0; d < D; ++d) {
            if (nx)
              g(x).data[static_cast<size_t>(bi) * D + d] +=
                  gv * wv2.data[static_cast<size_t>(o) * D + d];
            if (nw)
              g(w).data[static_cast<size_t>(o) * D + d] +=
                  gv * xv2.data[static_cast<size_t>(bi) * D + d];
          }
        }
    };
  }
  return out_id;
}

namespace {
void softmax_row(const double* x, double* y, int k) {
  double mx = x[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    y[i] = std::exp(x[i] - mx);
    s += y[i];
  }
  for (int i = 0; i < k; ++i) y[i] /= s;
}
}  // namespace

int Tape::softmax(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], K = xv.shape[1];
  Tensor out({B, K});
  for (int bi = 0; bi < B; ++bi)
    softmax_row(&xv.data[static_cast<size_t>(bi) * K], &out.data[static_cast<size_t>(bi) * K], K);
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, K]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& yv = nodes_[out_id].value;
      for (int bi = 0; bi < B; ++bi) {
        const size_t off = static_cast<size_t>(bi) * K;
        double s = 0.0;
        for (int i = 0; i < K; ++i) s += go.data[off + i] * yv.data[off + i];
        for (int i = 0; i < K; ++i)
          g(x).data[off + i] += yv.data[off + i] * (go.data[off + i] - s);
      }
    };
  }
  return out_id;
}

int Tape::log_softmax(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], K = xv.shape[1];
  Tensor out({B, K});
  for (int bi = 0; bi < B; ++bi) {
    const size_t off = static_cast<size_t>(bi) * K;
    double mx = xv.data[off];
    for (int i = 1; i < K; ++i) mx = std::max(mx, xv.data[off + i]);
    double s = 0.0;
    for (int i = 0; i < K; ++i) s += std::exp(xv.data[off + i] - mx);
    const double lse = mx + std::log(s);
    for (int i = 0; i < K; ++i) out.data[off + i] = xv.data[off + i] - lse;
  }
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, K]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& yv = nodes_[out_id].value;
      for (int bi = 0; bi < B; ++bi) {
        const size_t off = static_cast<size_t>(bi) * K;
        double s = 0.0;
        for (int i = 0; i < K; ++i) s += go.data[off + i];
        for (int i = 0; i < K; ++i)
          g(x).data[off + i] += go.data[off + i] - std::exp(yv.data[off + i]) * s;
      }
    };
  }
  return out_id;
}

int Tape::dft_power_agg(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  if (T < 4) throw Error("dft_power_agg: temporal length must be >= 4");
  const int F = T / 2;

  auto spectra = std::make_shared<std::vector<std::vector<cplx>>>();
  spectra->reserve(static_cast<size_t>(B) * C);
  Tensor out({F});
  std::vector<cplx> buf(T);
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) buf[t] = {xv.at3(bi, c, t, C, T), 0.0};
      fft(buf);
      for (int k = 1; k <= F; ++k) out.data[k - 1] += std::norm(buf[k]);
      spectra->push_back(buf);
    }

  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T, F, spectra]() {
      const Tensor& go = nodes_[out_id].grad;
      std::vector<cplx> y(T);
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
          const auto& X = (*spectra)[static_cast<size_t>(bi) * C + c];
          std::fill(y.begin(), y.end(), cplx{0.0, 0.0});
          for (int k = 1; k <= F; ++k) y[k] = go.data[k - 1] * X[k];
          ifft(y);
          for (int t = 0; t < T; ++t)
            g(x).at3(bi, c, t, C, T) += 2.0 * T * y[t].real();
        }
    };
  }
  return out_id;
}

int Tape::add(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw Error("add: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, b, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) {
        acc(a, i, go.data[i]);
        acc(b, i, go.data[i]);
      }
    };
  }
  return out_id;
}

int Tape::sub(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw Error("sub: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, b, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) {
        acc(a, i, go.data[i]);
        acc(b, i, -go.data[i]);
      }
    };
  }
  return out_id;
}

int Tape::mul(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw Error("mul: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, b, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& av2 = nodes_[a].value;
      const Tensor& bv2 = nodes_[b].value;
      for (size_t i = 0; i < go.numel(); ++i) {
        acc(a, i, go.data[i] * bv2.data[i]);
        acc(b, i, go.data[i] * av2.data[i]);
      }
    };
  }
  return out_id;
}

int Tape::add_const(int a, Tensor c) {
  const Tensor& av = nodes_[a].value;
  if (!av.same_shape(c)) throw Error("add_const: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] += c.data[i];
  const bool ng = nodes_[a].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) g(a).data[i] += go.data[i];
    };
  }
  return out_id;
}

int Tape::mul_const(int a, Tensor c) {
  const Tensor& av = nodes_[a].value;
  if (!av.same_shape(c)) throw Error("mul_const: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= c.data[i];
  const bool ng = nodes_[a].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    auto cc = std::make_shared<Tensor>(std::move(c));
    nodes_[out_id].back = [this, a, out_id, cc]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) g(a).data[i] += go.data[i] * cc->data[i];
    };
  }
  return out_id;
}

int Tape::add_scalar(int a, double c) {
  Tensor out = nodes_[a].value;
  for (auto& v : out.data) v += c;
  const bool ng = nodes_[a].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) g(a).data[i] += go.data[i];
    };
  }
  return out_id;
}

int Tape::mul_scalar(int a, double c) {
  Tensor out = nodes_[a].value;
  for (auto& v : out.data) v *= c;
  const bool ng = nodes_[a].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, out_id, c]() {
      const Tensor& go = nodes_[out_id].grad;
      for (size_t i = 0; i < go.numel(); ++i) g(a).data[i] += go.data[i] * c;
    };
  }
  return out_id;
}

int Tape::scale_by(int x, int s) {
  const Tensor& sv = nodes_[s].value;
  if (sv.numel() != 1) throw Error("scale_by: scale must be scalar");
  Tensor out = nodes_[x].value;
  const double sc = sv.data[0];
  for (auto& v : out.data) v *= sc;
  const bool ng = nodes_[x].needs_grad || nodes_[s].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, s, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      const double sc2 = nodes_[s].value.data[0];
      const bool nx = nodes_[x].needs_grad, ns = nodes_[s].needs_grad;
      double accum = 0.0;
      for (size_t i = 0; i < go.numel(); ++i) {
        if (nx) g(x).data[i] += go.data[i] * sc2;
        if (ns) accum += go.data[i] * xv2.data[i];
      }
      if (ns) g(s).data[0] += accum;
    };
  }
  return out_id;
}

int Tape::recip(int x) {
  Tensor out = nodes_[x].value;
  for (auto& v : out.data) v = 1.0 / v;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& yv = nodes_[out_id].value;
      for (size_t i = 0; i < go.numel(); ++i)
        g(x).data[i] -= go.data[i] * yv.data[i] * yv.data[i];
    };
  }
  return out_id;
}

int Tape::log_eps(int x, double eps) {
  Tensor out = nodes_[x].value;
  for (auto& v : out.data) v = std::log(v + eps);
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, eps]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      for (size_t i = 0; i < go.numel(); ++i)
        g(x).data[i] += go.data[i] / (xv2.data[i] + eps);
    };
  }
  return out_id;
}

int Tape::square(int x) {
  Tensor out = nodes_[x].value;
  for (auto& v : out.data) v *= v;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& xv2 = nodes_[x].value;
      for (size_t i = 0; i < go.numel(); ++i)
        g(x).data[i] += 2.0 * go.data[i] * xv2.data[i];
    };
  }
  return out_id;
}

int Tape::sqrt_of(int x) {
  Tensor out = nodes_[x].value;
  for (auto& v : out.data) v = std::sqrt(v);
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id]() {
      const Tensor& go = nodes_[out_id].grad;
      const Tensor& yv = nodes_[out_id].value;
      for (size_t i = 0; i < go.numel(); ++i)
        if (yv.data[i] != 0.0) g(x).data[i] += go.data[i] * 0.5 / yv.data[i];
    };
  }
  return out_id;
}

int Tape::sum_all(int x) {
  double s = 0.0;
  for (double v : nodes_[x].value.data) s += v;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(Tensor::scalar(s), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id]() {
      const double gv = nodes_[out_id].grad.data[0];
      for (size_t i = 0; i < nodes_[x].value.numel(); ++i) g(x).data[i] += gv;
    };
  }
  return out_id;
}

int Tape::mean_all(int x) {
  const size_t n = nodes_[x].value.numel();
  double s = 0.0;
  for (double v : nodes_[x].value.data) s += v;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(Tensor::scalar(s / static_cast<double>(n)), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, n]() {
      const double gv = nodes_[out_id].grad.data[0] / static_cast<double>(n);
      for (size_t i = 0; i < n; ++i) g(x).data[i] += gv;
    };
  }
  return out_id;
}

int Tape::row_sum(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], K = xv.shape[1];
  Tensor out({B});
  for (int bi = 0; bi < B; ++bi) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += xv.data[static_cast<size_t>(bi) * K + k];
    out.data[bi] = s;
  }
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, K]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int k = 0; k < K; ++k)
          g(x).data[static_cast<size_t>(bi) * K + k] += go.data[bi];
    };
  }
  return out_id;
}

int Tape::mean_rows(int x) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], D = xv.shape[1];
  Tensor out({D});
  for (int bi = 0; bi < B; ++bi)
    for (int d = 0; d < D; ++d) out.data[d] += xv.data[static_cast<size_t>(bi) * D + d];
  for (auto& v : out.data) v /= B;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, D]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int d = 0; d < D; ++d)
          g(x).data[static_cast<size_t>(bi) * D + d] += go.data[d] / B;
    };
  }
  return out_id;
}

int Tape::channel_mean_bt(int x, int c_count) {
  const Tensor& xv = nodes_[x].value;
  const int B = xv.shape[0], C = xv.shape[1], T = xv.shape[2];
  if (c_count > C) throw Error("channel_mean_bt: channel count exceeds input");
  const double m = static_cast<double>(B) * T;
  Tensor out({c_count});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < c_count; ++c)
      for (int t = 0; t < T; ++t) out.data[c] += xv.at3(bi, c, t, C, T);
  for (auto& v : out.data) v /= m;
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, x, out_id, B, C, T, c_count, m]() {
      const Tensor& go = nodes_[out_id].grad;
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < c_count; ++c) {
          const double gv = go.data[c] / m;
          for (int t = 0; t < T; ++t) g(x).at3(bi, c, t, C, T) += gv;
        }
    };
  }
  return out_id;
}

int Tape::dot_const(int x, const std::vector<double>& c) {
  const Tensor& xv = nodes_[x].value;
  if (xv.numel() != c.size()) throw Error("dot_const: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < c.size(); ++i) s += xv.data[i] * c[i];
  const bool ng = nodes_[x].needs_grad;
  const int out_id = push(Tensor::scalar(s), ng, nullptr);
  if (ng) {
    auto cc = std::make_shared<std::vector<double>>(c);
    nodes_[out_id].back = [this, x, out_id, cc]() {
      const double gv = nodes_[out_id].grad.data[0];
      for (size_t i = 0; i < cc->size(); ++i) g(x).data[i] += gv * (*cc)[i];
    };
  }
  return out_id;
}

int Tape::dot_nodes(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.numel() != bv.numel()) throw Error("dot_nodes: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < av.numel(); ++i) s += av.data[i] * bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const int out_id = push(Tensor::scalar(s), ng, nullptr);
  if (ng) {
    nodes_[out_id].back = [this, a, b, out_id]() {
      const double gv = nodes_[out_id].grad.data[0];
      const Tensor& av2 = nodes_[a].value;
      const Tensor& bv2 = nodes_[b].value;
      for (size_t i = 0; i < av2.numel(); ++i) {
        acc(a, i, gv * bv2.data[i]);
        acc(b, i, gv * av2.data[i]);
      }
    };
  }
  return out_id;
}

int Tape::gather_nll(int logp, const std::vector<int>& labels) {
  const Tensor& lv = nodes_[logp].value;
  const int B = lv.shape[0], K = lv.shape[1];
  if (labels.size() != static_cast<size_t>(B)) throw Error("gather_nll: label count mismatch");
  double s = 0.0;
  for (int bi = 0; bi < B; ++bi) {
    if (labels[bi] < 0 || labels[bi] >= K) throw Error("gather_nll: label out of range");
    s -= lv.data[static_cast<size_t>(bi) * K + labels[bi]];
  }
  const bool ng = nodes_[logp].needs_grad;
  const int out_id = push(Tensor::scalar(s / B), ng, nullptr);
  if (ng) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    nodes_[out_id].back = [this, logp, out_id, lab, B, K]() {
      const double gv = nodes_[out_id].grad.data[0] / B;
      for (int bi = 0; bi < B; ++bi)
        g(logp).data[static_cast<size_t>(bi) * K + (*lab)[bi]] -= gv;
    };
  }
  return out_id;
}

}  // namespace pitta
