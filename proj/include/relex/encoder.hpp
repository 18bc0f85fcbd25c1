#pragma once

// Piecewise convolutional sentence encoder.
//
// A sentence becomes a grid of (word, position-to-head, position-to-tail)
// ids. Each row embeds to d_w = d1 + 2*d2 values; a width-d_win convolution
// with d_s kernels produces one column per token (windows run past the end
// over zero rows); max-pooling runs separately over the three token segments
// delimited by the sorted entity positions, giving 3*d_s values; tanh and
// inverted dropout finish the sentence embedding of size d_f = 3*d_s.

#include <algorithm>
#include <cmath>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/numeric.hpp"

namespace relex {

struct EncoderParams {
  int d1 = 50;    // word embedding width
  int d2 = 5;     // position embedding width
  int dwin = 3;   // convolution window (tokens)
  int ds = 230;   // number of kernels

  Matrix V;       // vocab x d1, PAD row all-zero
  Matrix P_head;  // (2*clip+2) x d2, PAD row all-zero
  Matrix P_tail;  // same shape as P_head
  Matrix K;       // ds x (dwin * dw), kernel k is row k, window rows concatenated
  std::vector<double> b;  // ds

  int dw() const { return d1 + 2 * d2; }
  int df() const { return 3 * ds; }
};

struct EncoderGrads {
  Matrix V, P_head, P_tail, K;
  std::vector<double> b;

  void init_like(const EncoderParams& p) {
    V = Matrix(p.V.rows, p.V.cols);
    P_head = Matrix(p.P_head.rows, p.P_head.cols);
    P_tail = Matrix(p.P_tail.rows, p.P_tail.cols);
    K = Matrix(p.K.rows, p.K.cols);
    b.assign(p.b.size(), 0.0);
  }

  void zero() {
    V.zero();
    P_head.zero();
    P_tail.zero();
    K.zero();
    std::fill(b.begin(), b.end(), 0.0);
  }
};

// q: one embedded row per grid row given, [V[word] | P_head[ph] | P_tail[pt]].
inline Matrix embed_tokens(const TokenGrid& grid, int rows, const EncoderParams& p) {
  Matrix q(rows, p.dw());
  for (int i = 0; i < rows; ++i) {
    int w = grid.word[i], ph = grid.pos_head[i], pt = grid.pos_tail[i];
    if (w < 0 || w >= p.V.rows || ph < 0 || ph >= p.P_head.rows || pt < 0 ||
        pt >= p.P_tail.rows) {
      throw Error("embed_tokens: id out of range at row " + std::to_string(i));
    }
    double* out = q.row(i);
    std::copy(p.V.row(w), p.V.row(w) + p.d1, out);
    std::copy(p.P_head.row(ph), p.P_head.row(ph) + p.d2, out + p.d1);
    std::copy(p.P_tail.row(pt), p.P_tail.row(pt) + p.d2, out + p.d1 + p.d2);
  }
  return q;
}

// m[k][i] = b[k] + sum_w <K[k] window-slice w, q[i+w]>, i in [0, n); rows at
// or past n count as zero, so the output keeps one column per token.
inline Matrix convolve(const Matrix& q, const EncoderParams& p) {
  const int n = q.rows, dw = p.dw();
  if (q.cols != dw) throw Error("convolve: q is " + shape_str(q) + ", want cols " + std::to_string(dw));
  Matrix m(p.ds, n);
  const int full = std::max(0, n - p.dwin + 1);  // columns whose window stays in range
  for (int k = 0; k < p.ds; ++k) {
    const double* kr = p.K.row(k);
    double* mr = m.row(k);
    for (int i = 0; i < full; ++i) mr[i] = p.b[k] + dot(kr, q.row(i), p.dwin * dw);
    for (int i = full; i < n; ++i) {
      double acc = p.b[k];
      for (int w = 0; w < p.dwin && i + w < n; ++w) acc += dot(kr + w * dw, q.row(i + w), dw);
      mr[i] = acc;
    }
  }
  return m;
}

struct PoolResult {
  std::vector<double> z;       // 3*ds, kernel-major: [k*3 + segment]
  std::vector<int> argmax;     // column index per entry, -1 for an empty segment
};

// Max within the column ranges [0..p1], [p1+1..p2], [p2+1..n-1] per kernel;
// an empty segment pools to 0. Ties resolve to the lowest column index.
inline PoolResult piecewise_maxpool(const Matrix& m, int p1, int p2) {
  const int n = m.cols;
  if (!(0 <= p1 && p1 <= p2 && p2 < n)) {
    throw Error("piecewise_maxpool: need 0 <= p1 <= p2 < n, got p1=" + std::to_string(p1) +
                " p2=" + std::to_string(p2) + " n=" + std::to_string(n));
  }
  const int lo[3] = {0, p1 + 1, p2 + 1};
  const int hi[3] = {p1, p2, n - 1};
  PoolResult out;
  out.z.assign(static_cast<size_t>(m.rows) * 3, 0.0);
  out.argmax.assign(static_cast<size_t>(m.rows) * 3, -1);
  for (int k = 0; k < m.rows; ++k) {
    const double* mr = m.row(k);
    for (int seg = 0; seg < 3; ++seg) {
      if (lo[seg] > hi[seg]) continue;  // empty segment stays (0, -1)
      int best = lo[seg];
      for (int i = lo[seg] + 1; i <= hi[seg]; ++i) {
        if (mr[i] > mr[best]) best = i;
      }
      out.z[k * 3 + seg] = mr[best];
      out.argmax[k * 3 + seg] = best;
    }
  }
  return out;
}

// Everything the backward pass needs from one forward pass.
struct SentenceState {
  int n = 0;
  std::vector<int> word, pos_head, pos_tail;  // n entries each
  Matrix q;                 // n x dw
  std::vector<int> argmax;  // 3*ds pooled column indices
  std::vector<double> y;    // tanh of pooled values, d_f
  std::vector<double> h;    // dropout mask, empty in eval mode
  double inv_keep = 1.0;
  bool train_mode = false;
  std::vector<double> s;    // final sentence embedding, d_f
};

// tanh then inverted dropout (train mode only): s = tanh(z) .* h / p_keep.
inline void finish(SentenceState& st, const std::vector<double>& z, Rng* rng, double p_keep,
                   bool train_mode) {
  const int df = static_cast<int>(z.size());
  st.y.resize(df);
  for (int i = 0; i < df; ++i) st.y[i] = std::tanh(z[i]);
  st.train_mode = train_mode;
  if (train_mode) {
    if (rng == nullptr) throw Error("finish: train mode needs an rng");
    st.h = bernoulli_mask(*rng, df, p_keep);
    st.inv_keep = 1.0 / p_keep;
    st.s.resize(df);
    for (int i = 0; i < df; ++i) st.s[i] = st.y[i] * st.h[i] * st.inv_keep;
  } else {
    st.h.clear();
    st.inv_keep = 1.0;
    st.s = st.y;
  }
}

inline SentenceState encoder_forward(const TokenGrid& grid, const EncoderParams& p, double p_keep,
                                     bool train_mode, Rng* rng) {
  if (grid.n < 1) throw Error("encoder_forward: empty sentence");
  SentenceState st;
  st.n = grid.n;
  st.word.assign(grid.word.begin(), grid.word.begin() + grid.n);
  st.pos_head.assign(grid.pos_head.begin(), grid.pos_head.begin() + grid.n);
  st.pos_tail.assign(grid.pos_tail.begin(), grid.pos_tail.begin() + grid.n);
  st.q = embed_tokens(grid, grid.n, p);
  Matrix m = convolve(st.q, p);
  int p1 = std::min(grid.head_pos, grid.tail_pos);
  int p2 = std::max(grid.head_pos, grid.tail_pos);
  PoolResult pool = piecewise_maxpool(m, p1, p2);
  st.argmax = std::move(pool.argmax);
  finish(st, pool.z, rng, p_keep, train_mode);
  return st;
}

// Accumulates d(loss)/d(params) for one sentence given d(loss)/d(s).
// Routing: dropout scaling -> tanh -> the argmax column of each pooled entry
// -> kernel rows, bias, and the embedded rows under that window -> embedding
// tables. Empty segments (argmax -1) carry nothing.
inline void encoder_backward(const std::vector<double>& grad_s, const SentenceState& st,
                             const EncoderParams& p, EncoderGrads& g) {
  const int df = p.df(), dw = p.dw();
  if (static_cast<int>(grad_s.size()) != df) {
    throw Error("encoder_backward: grad size " + std::to_string(grad_s.size()) + ", want " +
                std::to_string(df));
  }
  Matrix gq(st.n, dw);
  for (int k = 0; k < p.ds; ++k) {
    for (int seg = 0; seg < 3; ++seg) {
      const int idx = k * 3 + seg;
      const int col = st.argmax[idx];
      if (col < 0) continue;
      double gz = grad_s[idx];
      if (st.train_mode) gz *= st.h[idx] * st.inv_keep;
      gz *= tanh_grad(st.y[idx]);
      if (gz == 0.0) continue;
      g.b[k] += gz;
      const double* kr = p.K.row(k);
      double* gkr = g.K.row(k);
      for (int w = 0; w < p.dwin && col + w < st.n; ++w) {
        axpy(gz, st.q.row(col + w), gkr + w * dw, dw);
        axpy(gz, kr + w * dw, gq.row(col + w), dw);
      }
    }
  }
  for (int i = 0; i < st.n; ++i) {
    const double* gr = gq.row(i);
    axpy(1.0, gr, g.V.row(st.word[i]), p.d1);
    axpy(1.0, gr + p.d1, g.P_head.row(st.pos_head[i]), p.d2);
    axpy(1.0, gr + p.d1 + p.d2, g.P_tail.row(st.pos_tail[i]), p.d2);
  }
}

}  // namespace relex
