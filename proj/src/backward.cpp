// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training graph: full-sequence forward with a tape, then the hand-written
// reverse pass. Shares the kernels of the inference path in model.cpp.

#include <algorithm>
#include <cmath>
#include <limits>

#include "lowrank/error.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/model.hpp"
#include "model_internal.hpp"

namespace lowrank {
namespace {

struct LayerTape {
  DenseMatrix x_in, a, q, k, v, att, x_mid, b, g, u, m;
  std::vector<double> r1, r2;
  std::vector<DenseMatrix> probs;  // per head, T x T (lower triangle used)
};

void linear_forward(const DenseMatrix& x, const DenseMatrix& w, DenseMatrix& y) {
  y = DenseMatrix(x.rows(), w.rows());
  linalg::gemm_nt(x.data(), x.rows(), x.cols(), w.data(), w.rows(), w.cols(), w.cols(), y.data(),
                  y.cols(), false);
}

// dW += dy^T x ; dx (+)= dy W
void linear_backward(const DenseMatrix& dy, const DenseMatrix& x, const DenseMatrix& w,
                     DenseMatrix& dw, DenseMatrix& dx, bool accumulate_dx) {
  linalg::gemm_tn(dy.data(), dy.cols(), dy.cols(), x.data(), x.cols(), x.cols(), dy.rows(), dw.data(),
                  dw.cols(), true);
  if (!accumulate_dx) dx = DenseMatrix(dy.rows(), w.cols());
  linalg::gemm_nn(dy.data(), dy.rows(), dy.cols(), w.data(), w.cols(), w.cols(), w.rows(), dx.data(),
                  dx.cols(), true);
}

// Adds the input gradient of rmsnorm to dx and accumulates dgain.
void rmsnorm_backward(const DenseMatrix& dy, const DenseMatrix& x, const std::vector<double>& inv_rms,
                      const DenseMatrix& gain, DenseMatrix& dgain, DenseMatrix& dx) {
  const std::size_t d = x.cols();
  std::vector<double> dxhat(d);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const double r = inv_rms[t];
    const double* xr = x.data() + t * d;
    const double* dyr = dy.data() + t * d;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = xr[i] * r;
      dgain.data()[i] += dyr[i] * xhat;
      dxhat[i] = dyr[i] * gain.data()[i];
      dot += dxhat[i] * xhat;
    }
    dot /= static_cast<double>(d);
    double* dxr = dx.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) dxr[i] += r * (dxhat[i] - xr[i] * r * dot);
  }
}

DenseMatrix head_slice(const DenseMatrix& x, std::size_t h, std::size_t hd) {
  DenseMatrix out(x.rows(), hd);
  for (std::size_t t = 0; t < x.rows(); ++t) std::copy_n(x.data() + t * x.cols() + h * hd, hd, out.data() + t * hd);
  return out;
}

void add_head_slice(DenseMatrix& x, const DenseMatrix& part, std::size_t h, std::size_t hd) {
  for (std::size_t t = 0; t < x.rows(); ++t) {
    double* dst = x.data() + t * x.cols() + h * hd;
    const double* src = part.data() + t * hd;
    for (std::size_t i = 0; i < hd; ++i) dst[i] += src[i];
  }
}

// Returns the summed NLL of one sequence. When `grads` is set, accumulates
// d(inv_count * summed NLL)/d(param) into it.
double run_sequence(const TinyLM& model, std::span<const Token> seq, ParameterSet* grads,
                    double inv_count) {
  const ModelConfig& cfg = model.config();
  const ParameterSet& p = model.params();
  const std::size_t T = seq.size() - 1;
  const std::size_t d = cfg.d_model;
  const std::size_t hd = cfg.head_dim();
  const std::size_t H = cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  if (T > cfg.max_seq_len) {
    throw ValidationError("training sequence of " + std::to_string(T) + " inputs exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  }
  for (Token t : seq) {
    if (t >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(t) + " out of range");
  }

  DenseMatrix x(T, d);
  for (std::size_t t = 0; t < T; ++t) std::copy_n(p.embedding.data() + seq[t] * d, d, x.data() + t * d);

  std::vector<LayerTape> tape(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = p.layers[l];
    LayerTape& tp = tape[l];
    tp.x_in = x;
    detail::rmsnorm_rows(x, lp.attn_norm, cfg.norm_eps, tp.a, &tp.r1);
    linear_forward(tp.a, lp.proj[0], tp.q);
    linear_forward(tp.a, lp.proj[1], tp.k);
    linear_forward(tp.a, lp.proj[2], tp.v);
    detail::apply_rope(tp.q, 0, H, model.rope_cos(), model.rope_sin(), false);
    detail::apply_rope(tp.k, 0, H, model.rope_cos(), model.rope_sin(), false);

    tp.att = DenseMatrix(T, d);
    tp.probs.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
      DenseMatrix& P = tp.probs[h];
      P = DenseMatrix(T, T);
      for (std::size_t i = 0; i < T; ++i) {
        const double* qi = tp.q.data() + i * d + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = tp.k.data() + j * d + h * hd;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          P(i, j) = s * scale;
          mx = std::max(mx, P(i, j));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          P(i, j) = std::exp(P(i, j) - mx);
          sum += P(i, j);
        }
        double* o = tp.att.data() + i * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          P(i, j) /= sum;
          const double* vj = tp.v.data() + j * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) o[c] += P(i, j) * vj[c];
        }
      }
    }
    DenseMatrix tmp;
    linear_forward(tp.att, lp.proj[3], tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];
    tp.x_mid = x;
    detail::rmsnorm_rows(x, lp.ffn_norm, cfg.norm_eps, tp.b, &tp.r2);
    linear_forward(tp.b, lp.proj[4], tp.g);
    linear_forward(tp.b, lp.proj[5], tp.u);
    tp.m = DenseMatrix(T, cfg.d_ff);
    for (std::size_t i = 0; i < tp.m.size(); ++i) tp.m.data()[i] = detail::silu(tp.g.data()[i]) * tp.u.data()[i];
    linear_forward(tp.m, lp.proj[6], tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];
  }

  DenseMatrix hf;
  std::vector<double> rf;
  detail::rmsnorm_rows(x, p.final_norm, cfg.norm_eps, hf, &rf);
  DenseMatrix logits;
  linear_forward(hf, p.lm_head, logits);

  const std::size_t V = cfg.vocab_size;
  double nll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double* row = logits.data() + t * V;
    const double mx = *std::max_element(row, row + V);
    double sum = 0.0;
    for (std::size_t c = 0; c < V; ++c) sum += std::exp(row[c] - mx);
    const double lse = mx + std::log(sum);
    nll += lse - row[seq[t + 1]];
    if (grads) {
      // Reuse the logits row as dlogits.
      for (std::size_t c = 0; c < V; ++c) row[c] = std::exp(row[c] - lse) * inv_count;
      row[seq[t + 1]] -= inv_count;
    }
  }
  if (!grads) return nll;

  ParameterSet& gr = *grads;
  DenseMatrix dhf;
  linear_backward(logits, hf, p.lm_head, gr.lm_head, dhf, false);
  DenseMatrix dx(T, d);
  rmsnorm_backward(dhf, x, rf, p.final_norm, gr.final_norm, dx);

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerParams& lp = p.layers[l];
    LayerParams& gl = gr.layers[l];
    const LayerTape& tp = tape[l];

    DenseMatrix dm;
    linear_backward(dx, tp.m, lp.proj[6], gl.proj[6], dm, false);
    DenseMatrix dg(T, cfg.d_ff), du(T, cfg.d_ff);
    for (std::size_t i = 0; i < dm.size(); ++i) {
      const double gv = tp.g.data()[i];
      const double sig = 1.0 / (1.0 + std::exp(-gv));
      du.data()[i] = dm.data()[i] * gv * sig;
      dg.data()[i] = dm.data()[i] * tp.u.data()[i] * sig * (1.0 + gv * (1.0 - sig));
    }
    DenseMatrix db;
    linear_backward(dg, tp.b, lp.proj[4], gl.proj[4], db, false);
    linear_backward(du, tp.b, lp.proj[5], gl.proj[5], db, true);
    rmsnorm_backward(db, tp.x_mid, tp.r2, lp.ffn_norm, gl.ffn_norm, dx);

    DenseMatrix datt;
    linear_backward(dx, tp.att, lp.proj[3], gl.proj[3], datt, false);
    DenseMatrix dq(T, d), dk(T, d), dv(T, d);
    for (std::size_t h = 0; h < H; ++h) {
      const DenseMatrix& P = tp.probs[h];
      const DenseMatrix qh = head_slice(tp.q, h, hd);
      const DenseMatrix kh = head_slice(tp.k, h, hd);
      const DenseMatrix vh = head_slice(tp.v, h, hd);
      const DenseMatrix dah = head_slice(datt, h, hd);
      DenseMatrix dS(T, T);
      DenseMatrix dvh(T, hd);
      for (std::size_t i = 0; i < T; ++i) {
        const double* dai = dah.data() + i * hd;
        double rowdot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* vj = vh.data() + j * hd;
          double dp = 0.0;
          for (std::size_t c = 0; c < hd; ++c) dp += dai[c] * vj[c];
          dS(i, j) = dp;
          rowdot += dp * P(i, j);
          double* dvj = dvh.data() + j * hd;
          const double pij = P(i, j);
          for (std::size_t c = 0; c < hd; ++c) dvj[c] += pij * dai[c];
        }
        for (std::size_t j = 0; j <= i; ++j) dS(i, j) = P(i, j) * (dS(i, j) - rowdot) * scale;
      }
      const DenseMatrix dqh = linalg::matmul(dS, kh);
      const DenseMatrix dkh = linalg::matmul_tn(dS, qh);
      add_head_slice(dq, dqh, h, hd);
      add_head_slice(dk, dkh, h, hd);
      add_head_slice(dv, dvh, h, hd);
    }
    detail::apply_rope(dq, 0, H, model.rope_cos(), model.rope_sin(), true);
    detail::apply_rope(dk, 0, H, model.rope_cos(), model.rope_sin(), true);
    DenseMatrix da;
    linear_backward(dq, tp.a, lp.proj[0], gl.proj[0], da, false);
    linear_backward(dk, tp.a, lp.proj[1], gl.proj[1], da, true);
    linear_backward(dv, tp.a, lp.proj[2], gl.proj[2], da, true);
    rmsnorm_backward(da, tp.x_in, tp.r1, lp.attn_norm, gl.attn_norm, dx);
  }

  for (std::size_t t = 0; t < T; ++t) {
    double* row = gr.embedding.data() + seq[t] * d;
    const double* src = dx.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) row[i] += src[i];
  }
  return nll;
}

std::size_t count_targets(std::span<const std::vector<Token>> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  std::size_t n = 0;
  for (const auto& seq : batch) {
    if (seq.size() < 2) throw ValidationError("every sequence needs at least 2 tokens");
    n += seq.size() - 1;
  }
  return n;
}

}  // namespace

double evaluate_loss(const TinyLM& model, std::span<const std::vector<Token>> batch) {
  const std::size_t n = count_targets(batch);
  double total = 0.0;
  for (const auto& seq : batch) total += run_sequence(model, seq, nullptr, 0.0);
  return total / static_cast<double>(n);
}

double backward(TinyLM& model, std::span<const std::vector<Token>> batch) {
  const std::size_t n = count_targets(batch);
  ParameterSet grads = ParameterSet::zeros(model.config());
  const double inv = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (const auto& seq : batch) total += run_sequence(model, seq, &grads, inv);
  model.mutable_grads() = std::move(grads);
  return total / static_cast<double>(n);
}

}  // namespace lowrank
