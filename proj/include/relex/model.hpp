#pragma once

// Full model state: the sentence encoder parameters plus the class embedding
// matrix W (one row per relation). Also the per-bag forward/backward pipeline
// shared by the trainer and the gradient checker, and a flat-vector view of
// all parameters for finite-difference probing.

#include <string>
#include <utility>
#include <vector>

#include "relex/encoder.hpp"
#include "relex/losses.hpp"

namespace relex {

struct ModelShapes {
  int vocab = 0;     // word embedding rows (PAD and UNK included)
  int pos_rows = 0;  // position table rows (PAD row included)
  int d1 = 50;
  int d2 = 5;
  int dwin = 3;
  int ds = 230;
  int classes = 0;

  int dw() const { return d1 + 2 * d2; }
  int df() const { return 3 * ds; }
};

struct ModelParams {
  EncoderParams enc;
  Matrix W;  // classes x df
};

struct ModelGrads {
  EncoderGrads enc;
  Matrix W;

  void init_like(const ModelParams& p) {
    enc.init_like(p.enc);
    W = Matrix(p.W.rows, p.W.cols);
  }

  void zero() {
    enc.zero();
    W.zero();
  }
};

namespace detail {

// Uniform Xavier bound for a rows x cols parameter matrix.
inline double xavier_bound(int rows, int cols) { return std::sqrt(6.0 / (rows + cols)); }

inline void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

}  // namespace detail

// V comes from the pretrained loader. P/K/W draw uniform Xavier values in a
// fixed order (P_head, P_tail, K, W); the convolution bias starts at zero and
// the PAD rows of the position tables stay zero so padding embeds to nothing.
inline ModelParams init_params(const ModelShapes& sh, Matrix pretrained_v, Rng& rng) {
  if (pretrained_v.rows != sh.vocab || pretrained_v.cols != sh.d1) {
    throw Error("init_params: pretrained V is " + shape_str(pretrained_v) + ", want " +
                std::to_string(sh.vocab) + "x" + std::to_string(sh.d1));
  }
  ModelParams p;
  p.enc.d1 = sh.d1;
  p.enc.d2 = sh.d2;
  p.enc.dwin = sh.dwin;
  p.enc.ds = sh.ds;
  p.enc.V = std::move(pretrained_v);
  p.enc.P_head = Matrix(sh.pos_rows, sh.d2);
  p.enc.P_tail = Matrix(sh.pos_rows, sh.d2);
  p.enc.K = Matrix(sh.ds, sh.dwin * sh.dw());
  p.enc.b.assign(sh.ds, 0.0);
  p.W = Matrix(sh.classes, sh.df());

  const double pb = detail::xavier_bound(sh.pos_rows, sh.d2);
  detail::fill_uniform(p.enc.P_head, pb, rng);
  detail::fill_uniform(p.enc.P_tail, pb, rng);
  for (int c = 0; c < sh.d2; ++c) {
    p.enc.P_head.at(sh.pos_rows - 1, c) = 0.0;  // PAD row
    p.enc.P_tail.at(sh.pos_rows - 1, c) = 0.0;
  }
  detail::fill_uniform(p.enc.K, detail::xavier_bound(sh.ds, sh.dwin * sh.dw()), rng);
  detail::fill_uniform(p.W, detail::xavier_bound(sh.classes, sh.df()), rng);
  return p;
}

// Flat parameter order: V, P_head, P_tail, K, b, W. Checkpoints store arrays
// in the same order.
struct ParamGroup {
  const char* name;
  size_t offset;
  size_t size;
};

inline std::vector<ParamGroup> param_groups(const ModelParams& p) {
  std::vector<ParamGroup> g;
  size_t off = 0;
  auto add = [&](const char* name, size_t n) {
    g.push_back({name, off, n});
    off += n;
  };
  add("V", p.enc.V.data.size());
  add("P_head", p.enc.P_head.data.size());
  add("P_tail", p.enc.P_tail.data.size());
  add("K", p.enc.K.data.size());
  add("b", p.enc.b.size());
  add("W", p.W.data.size());
  return g;
}

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  auto append = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  append(p.enc.V.data);
  append(p.enc.P_head.data);
  append(p.enc.P_tail.data);
  append(p.enc.K.data);
  append(p.enc.b);
  append(p.W.data);
  return flat;
}

inline std::vector<double> flatten(const ModelGrads& g) {
  std::vector<double> flat;
  auto append = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  append(g.enc.V.data);
  append(g.enc.P_head.data);
  append(g.enc.P_tail.data);
  append(g.enc.K.data);
  append(g.enc.b);
  append(g.W.data);
  return flat;
}

inline void unflatten(const std::vector<double>& flat, ModelParams& p) {
  size_t off = 0;
  auto take = [&](std::vector<double>& v) {
    std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
    off += v.size();
  };
  take(p.enc.V.data);
  take(p.enc.P_head.data);
  take(p.enc.P_tail.data);
  take(p.enc.K.data);
  take(p.enc.b);
  take(p.W.data);
  if (off != flat.size()) throw Error("unflatten: size mismatch");
}

struct BagResult {
  double loss = 0.0;
  double pos = 0.0;
  double neg = 0.0;
};

// Forward and backward for one bag: encode every sentence, aggregate and
// score under the configured loss, then push gradients back through the
// encoder. Gradients accumulate into `grads`.
inline BagResult bag_forward_backward(const std::vector<TokenGrid>& grids, const ModelParams& p,
                                      const std::vector<int>& labels, const LossConfig& cfg,
                                      int nr_id, double p_keep, bool train_mode, Rng* rng,
                                      ModelGrads* grads) {
  std::vector<SentenceState> states;
  states.reserve(grids.size());
  std::vector<std::vector<double>> S;
  S.reserve(grids.size());
  for (const TokenGrid& g : grids) {
    states.push_back(encoder_forward(g, p.enc, p_keep, train_mode, rng));
    S.push_back(states.back().s);
  }
  BagLoss bl = bag_loss(S, labels, p.W, cfg, nr_id);
  if (grads != nullptr) {
    for (size_t i = 0; i < grids.size(); ++i) {
      encoder_backward(bl.grad_S[i], states[i], p.enc, grads->enc);
    }
    for (size_t i = 0; i < grads->W.data.size(); ++i) grads->W.data[i] += bl.grad_W.data[i];
  }
  return BagResult{bl.loss, bl.pos, bl.neg};
}

}  // namespace relex
