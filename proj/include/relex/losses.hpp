#pragma once

// Ranking-based multi-label losses over bag representations.
//
// A bag scores F(r, c) = <W[c], r> against every relation c. Each loss is a
// sum of smoothed hinge terms softplus(rho * max(0, .)): positive terms push
// F(r, c+) above sigma_pos for every labeled relation, negative terms push
// the best competitor under -sigma_neg. Three variants:
//
//  AVE      one representation r (mean); one negative (best non-label class),
//           its term scaled by |labels|.
//  ATT      per labeled relation c+, attention representation r^{c+}; an
//           independent (positive, negative) pair per c+.
//  COST_ATT per labeled relation c*, four groups on r^{c*}: (i) the positive
//           hinge weighted g(c*) (lambda when c* is NR, else 1), (ii) the
//           best-competitor negative hinge, (iii) gamma-weighted positive
//           hinges for the other labeled relations (class ties), (iv) a
//           gamma-weighted NR negative hinge when c* is not NR.
//
// The regularizer Theta(W) keeps non-NR class embeddings balanced:
// epsilon * ||W_ave||_2 + eta * (1/T) * sum_{c != NR} ||W[c]||_2 with
// W_ave = (1/T) sum_{c != NR} W[c] and T = C - 1. The NR row gets no
// regularization gradient, and the gradient of ||.||_2 at zero is taken as 0.

#include <algorithm>
#include <string>
#include <vector>

#include "relex/aggregator.hpp"
#include "relex/numeric.hpp"

namespace relex {

enum class Variant { kAve, kAtt, kCostAtt };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kAve: return "ave";
    case Variant::kAtt: return "att";
    case Variant::kCostAtt: return "cost_att";
  }
  return "?";
}

struct LossConfig {
  Variant variant = Variant::kCostAtt;
  double rho = 2.0;
  double sigma_pos = 2.5;
  double sigma_neg = 0.5;
  double lambda = 0.0;   // weight of the NR positive term (COST_ATT)
  double gamma = 1.0;    // weight of the class-tie terms (COST_ATT)
  double epsilon = 1e-6; // Theta(W): weight on ||W_ave||
  double eta = 1e-3;     // Theta(W): weight on the mean row norm
  bool regularize = true;
};

inline double score(const std::vector<double>& r, int c, const Matrix& W) {
  if (c < 0 || c >= W.rows) throw Error("score: class " + std::to_string(c) + " out of range");
  if (W.cols != static_cast<int>(r.size())) {
    throw Error("score: W is " + shape_str(W) + ", r has " + std::to_string(r.size()));
  }
  return dot(W.row(c), r.data(), W.cols);
}

// One smoothed hinge term and its derivative in the scored value f.
// Positive side: softplus(rho * max(0, sigma_pos - f)); negative side:
// softplus(rho * max(0, sigma_neg + f)). At a hinge argument of exactly 0 the
// subgradient is taken as 0.
struct HingeTerm {
  double value = 0.0;
  double dvalue_df = 0.0;
};

inline HingeTerm positive_term(double f, const LossConfig& cfg) {
  HingeTerm t;
  const double arg = cfg.sigma_pos - f;
  const double hinge = std::max(0.0, arg);
  t.value = softplus(cfg.rho * hinge);
  if (arg > 0.0) t.dvalue_df = -cfg.rho * logistic(cfg.rho * hinge);
  return t;
}

inline HingeTerm negative_term(double f, const LossConfig& cfg) {
  HingeTerm t;
  const double arg = cfg.sigma_neg + f;
  const double hinge = std::max(0.0, arg);
  t.value = softplus(cfg.rho * hinge);
  if (arg > 0.0) t.dvalue_df = cfg.rho * logistic(cfg.rho * hinge);
  return t;
}

inline double pair_loss(double f_pos, double f_neg, const LossConfig& cfg) {
  return positive_term(f_pos, cfg).value + negative_term(f_neg, cfg).value;
}

// Highest-scoring relation outside the label set; ties resolve to the lowest
// id. Labels must not cover every class.
inline int select_negative(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<char> in_labels(scores.size(), 0);
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(scores.size())) {
      throw Error("select_negative: label " + std::to_string(l) + " out of range");
    }
    in_labels[l] = 1;
  }
  int best = -1;
  for (int c = 0; c < static_cast<int>(scores.size()); ++c) {
    if (in_labels[c]) continue;
    if (best < 0 || scores[c] > scores[best]) best = c;
  }
  if (best < 0) throw Error("select_negative: labels cover every class");
  return best;
}

struct BagLoss {
  double loss = 0.0;
  double pos = 0.0;  // sum of positive-side terms
  double neg = 0.0;  // sum of negative-side terms
  Matrix grad_W;
  std::vector<std::vector<double>> grad_S;
};

namespace detail {

inline BagLoss make_bag_loss(const std::vector<std::vector<double>>& S, const Matrix& W) {
  BagLoss out;
  out.grad_W = Matrix(W.rows, W.cols);
  out.grad_S.assign(S.size(), std::vector<double>(S.empty() ? 0 : S[0].size(), 0.0));
  return out;
}

inline void check_bag(const std::vector<std::vector<double>>& S, const std::vector<int>& labels,
                      const Matrix& W) {
  if (S.empty()) throw Error("bag loss: empty bag");
  if (labels.empty()) throw Error("bag loss: empty label set");
  for (int l : labels) {
    if (l < 0 || l >= W.rows) throw Error("bag loss: label " + std::to_string(l) + " out of range");
  }
}

}  // namespace detail

inline BagLoss loss_ave(const std::vector<std::vector<double>>& S, const std::vector<int>& labels,
                        const Matrix& W, const LossConfig& cfg) {
  detail::check_bag(S, labels, W);
  BagLoss out = detail::make_bag_loss(S, W);
  const BagRepr repr = aggregate_ave(S);
  const std::vector<double> scores = matvec(W, repr.r);
  std::vector<double> grad_r(repr.r.size(), 0.0);

  for (int c : labels) {
    const HingeTerm t = positive_term(scores[c], cfg);
    out.pos += t.value;
    axpy(t.dvalue_df, repr.r.data(), out.grad_W.row(c), W.cols);
    axpy(t.dvalue_df, W.row(c), grad_r.data(), W.cols);
  }
  const int c_neg = select_negative(scores, labels);
  const HingeTerm t = negative_term(scores[c_neg], cfg);
  const double mult = static_cast<double>(labels.size());
  out.neg = mult * t.value;
  axpy(mult * t.dvalue_df, repr.r.data(), out.grad_W.row(c_neg), W.cols);
  axpy(mult * t.dvalue_df, W.row(c_neg), grad_r.data(), W.cols);

  out.loss = out.pos + out.neg;
  aggregator_backward(grad_r, repr, S, W, out.grad_S, out.grad_W);
  return out;
}

inline BagLoss loss_att(const std::vector<std::vector<double>>& S, const std::vector<int>& labels,
                        const Matrix& W, const LossConfig& cfg) {
  detail::check_bag(S, labels, W);
  BagLoss out = detail::make_bag_loss(S, W);
  for (int c_pos : labels) {
    const BagRepr repr = aggregate_att(S, c_pos, W);
    const std::vector<double> scores = matvec(W, repr.r);
    std::vector<double> grad_r(repr.r.size(), 0.0);

    const HingeTerm tp = positive_term(scores[c_pos], cfg);
    out.pos += tp.value;
    axpy(tp.dvalue_df, repr.r.data(), out.grad_W.row(c_pos), W.cols);
    axpy(tp.dvalue_df, W.row(c_pos), grad_r.data(), W.cols);

    const int c_neg = select_negative(scores, labels);
    const HingeTerm tn = negative_term(scores[c_neg], cfg);
    out.neg += tn.value;
    axpy(tn.dvalue_df, repr.r.data(), out.grad_W.row(c_neg), W.cols);
    axpy(tn.dvalue_df, W.row(c_neg), grad_r.data(), W.cols);

    aggregator_backward(grad_r, repr, S, W, out.grad_S, out.grad_W);
  }
  out.loss = out.pos + out.neg;
  return out;
}

inline BagLoss loss_cost_att(const std::vector<std::vector<double>>& S,
                             const std::vector<int>& labels, const Matrix& W,
                             const LossConfig& cfg, int nr_id) {
  detail::check_bag(S, labels, W);
  BagLoss out = detail::make_bag_loss(S, W);
  for (int c_star : labels) {
    const BagRepr repr = aggregate_att(S, c_star, W);
    const std::vector<double> scores = matvec(W, repr.r);
    std::vector<double> grad_r(repr.r.size(), 0.0);

    auto add_term = [&](const HingeTerm& t, double weight, int c_scored, double* pos_or_neg) {
      *pos_or_neg += weight * t.value;
      const double coef = weight * t.dvalue_df;
      if (coef != 0.0) {
        axpy(coef, repr.r.data(), out.grad_W.row(c_scored), W.cols);
        axpy(coef, W.row(c_scored), grad_r.data(), W.cols);
      }
    };

    // (i) own positive hinge, down-weighted to lambda when c* is NR
    const double g = (c_star == nr_id) ? cfg.lambda : 1.0;
    add_term(positive_term(scores[c_star], cfg), g, c_star, &out.pos);

    // (ii) best competitor outside the label set
    const int c_neg = select_negative(scores, labels);
    add_term(negative_term(scores[c_neg], cfg), 1.0, c_neg, &out.neg);

    // (iii) class ties: the other labeled relations should also score well
    for (int c_pos : labels) {
      if (c_pos == c_star) continue;
      add_term(positive_term(scores[c_pos], cfg), cfg.gamma, c_pos, &out.pos);
    }

    // (iv) NR as an extra negative for genuinely positive conditioning
    if (c_star != nr_id) {
      add_term(negative_term(scores[nr_id], cfg), cfg.gamma, nr_id, &out.neg);
    }

    aggregator_backward(grad_r, repr, S, W, out.grad_S, out.grad_W);
  }
  out.loss = out.pos + out.neg;
  return out;
}

inline BagLoss bag_loss(const std::vector<std::vector<double>>& S, const std::vector<int>& labels,
                        const Matrix& W, const LossConfig& cfg, int nr_id) {
  switch (cfg.variant) {
    case Variant::kAve: return loss_ave(S, labels, W, cfg);
    case Variant::kAtt: return loss_att(S, labels, W, cfg);
    case Variant::kCostAtt: return loss_cost_att(S, labels, W, cfg, nr_id);
  }
  throw Error("bag_loss: bad variant");
}

struct RegResult {
  double value = 0.0;
  Matrix grad;
};

inline RegResult regularizer(const Matrix& W, int nr_id, const LossConfig& cfg) {
  const int C = W.rows, df = W.cols;
  const int T = C - 1;
  if (T < 1) throw Error("regularizer: need at least one non-NR class");
  RegResult out;
  out.grad = Matrix(C, df);

  std::vector<double> w_ave(df, 0.0);
  for (int c = 0; c < C; ++c) {
    if (c == nr_id) continue;
    axpy(1.0 / T, W.row(c), w_ave.data(), df);
  }
  double ave_norm = std::sqrt(dot(w_ave.data(), w_ave.data(), df));
  out.value = cfg.epsilon * ave_norm;
  for (int c = 0; c < C; ++c) {
    if (c == nr_id) continue;
    double row_norm = std::sqrt(dot(W.row(c), W.row(c), df));
    out.value += cfg.eta / T * row_norm;
    if (ave_norm > 0.0) {
      axpy(cfg.epsilon / (T * ave_norm), w_ave.data(), out.grad.row(c), df);
    }
    if (row_norm > 0.0) {
      axpy(cfg.eta / (T * row_norm), W.row(c), out.grad.row(c), df);
    }
  }
  return out;
}

}  // namespace relex
