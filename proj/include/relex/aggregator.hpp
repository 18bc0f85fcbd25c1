#pragma once

// Bag aggregation: a bag's sentences { s_1 .. s_n } combine into one
// representation r. AVE takes the plain mean. ATT conditions on a relation c:
// weights alpha = softmax(a * <W[c], s_j>) with a fixed at 0.5, then
// r = sum_j alpha_j s_j. Prediction with attention recomputes r per candidate
// relation.

#include <vector>

#include "relex/numeric.hpp"

namespace relex {

constexpr double kAttentionScale = 0.5;  // the fixed "a" in the attention logits

struct BagRepr {
  std::vector<double> r;
  std::vector<double> alpha;  // per sentence; uniform for AVE
  int cond_class = -1;        // conditioning relation for ATT, -1 for AVE
};

inline BagRepr aggregate_ave(const std::vector<std::vector<double>>& S) {
  if (S.empty()) throw Error("aggregate_ave: empty bag");
  const size_t df = S[0].size();
  BagRepr out;
  out.r.assign(df, 0.0);
  out.alpha.assign(S.size(), 1.0 / static_cast<double>(S.size()));
  for (const auto& s : S) {
    if (s.size() != df) throw Error("aggregate_ave: inconsistent sentence dims");
    axpy(out.alpha[0], s.data(), out.r.data(), static_cast<int>(df));
  }
  return out;
}

inline BagRepr aggregate_att(const std::vector<std::vector<double>>& S, int c, const Matrix& W) {
  if (S.empty()) throw Error("aggregate_att: empty bag");
  if (c < 0 || c >= W.rows) throw Error("aggregate_att: class " + std::to_string(c) + " out of range");
  const size_t df = S[0].size();
  if (W.cols != static_cast<int>(df)) {
    throw Error("aggregate_att: W is " + shape_str(W) + ", sentences have " + std::to_string(df));
  }
  BagRepr out;
  out.cond_class = c;
  out.alpha.resize(S.size());
  for (size_t j = 0; j < S.size(); ++j) {
    if (S[j].size() != df) throw Error("aggregate_att: inconsistent sentence dims");
    out.alpha[j] = kAttentionScale * dot(W.row(c), S[j].data(), static_cast<int>(df));
  }
  softmax_inplace(out.alpha);
  out.r.assign(df, 0.0);
  for (size_t j = 0; j < S.size(); ++j) {
    axpy(out.alpha[j], S[j].data(), out.r.data(), static_cast<int>(df));
  }
  return out;
}

// Accumulates d(loss)/d(s_j) into grad_S and, for ATT, the attention-path
// d(loss)/d(W[c]) into grad_W, given grad_r = d(loss)/d(r).
//
// ATT path: with gA_j = <grad_r, s_j>, the softmax pullback is
// ge_j = alpha_j * (gA_j - sum_m alpha_m gA_m); then
//   d/ds_j   = alpha_j * grad_r + ge_j * a * W[c]
//   d/dW[c] += a * sum_j ge_j * s_j
inline void aggregator_backward(const std::vector<double>& grad_r, const BagRepr& repr,
                                const std::vector<std::vector<double>>& S, const Matrix& W,
                                std::vector<std::vector<double>>& grad_S, Matrix& grad_W) {
  const int df = static_cast<int>(grad_r.size());
  if (S.size() != repr.alpha.size() || grad_S.size() != S.size()) {
    throw Error("aggregator_backward: bag size mismatch");
  }
  if (repr.cond_class < 0) {
    const double inv = 1.0 / static_cast<double>(S.size());
    for (size_t j = 0; j < S.size(); ++j) axpy(inv, grad_r.data(), grad_S[j].data(), df);
    return;
  }
  const int c = repr.cond_class;
  std::vector<double> gA(S.size());
  double mix = 0.0;
  for (size_t j = 0; j < S.size(); ++j) {
    gA[j] = dot(grad_r.data(), S[j].data(), df);
    mix += repr.alpha[j] * gA[j];
  }
  for (size_t j = 0; j < S.size(); ++j) {
    const double ge = repr.alpha[j] * (gA[j] - mix);
    axpy(repr.alpha[j], grad_r.data(), grad_S[j].data(), df);
    axpy(ge * kAttentionScale, W.row(c), grad_S[j].data(), df);
    axpy(ge * kAttentionScale, S[j].data(), grad_W.row(c), df);
  }
}

}  // namespace relex
