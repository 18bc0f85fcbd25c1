#pragma once

// Mini-batch SGD over bags, the finite-difference gradient checker, and
// checkpoint serialization.
//
// One step: sum bag gradients over the batch, add Theta(W)'s gradient once
// per batch when regularization is on, then theta -= lr * grad / batch_size
// (the true size for a short final batch). All math is double precision;
// checkpoints store 32-bit floats.

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "relex/binio.hpp"
#include "relex/model.hpp"

namespace relex {

struct TrainConfig {
  int batch = 160;
  double lr = 0.03;
  int epochs = -1;  // required; the CLI refuses to default this
  std::uint64_t seed = 1;
  double p_keep = 0.5;
  bool shuffle = true;
  int d2 = 5;
  int ds = 230;
  int dwin = 3;
  LossConfig loss;
};

struct EpochReport {
  double mean_loss = 0.0;  // per bag, regularizer included
  double pos_term = 0.0;   // per-bag mean of positive-side terms
  double neg_term = 0.0;   // per-bag mean of negative-side terms
  double reg_term = 0.0;   // per-bag mean of Theta(W)
};

// Owns the featurized training bags and runs epochs against caller-owned
// model parameters.
class Trainer {
 public:
  Trainer(const Dataset& data, ModelParams& params, const TrainConfig& cfg)
      : params_(params), cfg_(cfg), nr_id_(data.schema.nr_id), rng_(cfg.seed) {
    PositionFeaturizer pf{data.pos_clip};
    bag_grids_.reserve(data.train.bags.size());
    bag_labels_.reserve(data.train.bags.size());
    bag_names_.reserve(data.train.bags.size());
    for (const Bag& bag : data.train.bags) {
      std::vector<TokenGrid> grids;
      grids.reserve(bag.mention_ids.size());
      for (int mid : bag.mention_ids) {
        grids.push_back(featurize(data.train.mentions[mid], pf, data.max_len));
      }
      bag_grids_.push_back(std::move(grids));
      bag_labels_.push_back(bag.labels);
      bag_names_.push_back(bag.head + "|" + bag.tail);
    }
    order_.resize(bag_grids_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    grads_.init_like(params_);
  }

  EpochReport train_epoch() {
    if (cfg_.shuffle) rng_.shuffle(order_);
    const size_t n = order_.size();
    EpochReport rep;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg_.batch)) {
      const size_t end = std::min(n, start + static_cast<size_t>(cfg_.batch));
      grads_.zero();
      for (size_t i = start; i < end; ++i) {
        const size_t b = order_[i];
        BagResult res = bag_forward_backward(bag_grids_[b], params_, bag_labels_[b], cfg_.loss,
                                             nr_id_, cfg_.p_keep, true, &rng_, &grads_);
        if (!std::isfinite(res.loss)) {
          throw NumericError("non-finite loss at bag " + bag_names_[b]);
        }
        rep.mean_loss += res.loss;
        rep.pos_term += res.pos;
        rep.neg_term += res.neg;
      }
      if (cfg_.loss.regularize) {
        RegResult reg = regularizer(params_.W, nr_id_, cfg_.loss);
        for (size_t i = 0; i < grads_.W.data.size(); ++i) {
          grads_.W.data[i] += reg.grad.data[i];
        }
        rep.mean_loss += reg.value;
        rep.reg_term += reg.value;
      }
      apply_update(static_cast<double>(end - start));
    }
    rep.mean_loss /= static_cast<double>(n);
    rep.pos_term /= static_cast<double>(n);
    rep.neg_term /= static_cast<double>(n);
    rep.reg_term /= static_cast<double>(n);
    return rep;
  }

  size_t bag_count() const { return bag_grids_.size(); }

 private:
  void apply_update(double batch_size) {
    const double scale = -cfg_.lr / batch_size;
    auto upd = [&](std::vector<double>& p, const std::vector<double>& g) {
      axpy(scale, g.data(), p.data(), static_cast<int>(p.size()));
    };
    upd(params_.enc.V.data, grads_.enc.V.data);
    upd(params_.enc.P_head.data, grads_.enc.P_head.data);
    upd(params_.enc.P_tail.data, grads_.enc.P_tail.data);
    upd(params_.enc.K.data, grads_.enc.K.data);
    upd(params_.enc.b, grads_.enc.b);
    upd(params_.W.data, grads_.W.data);
  }

  ModelParams& params_;
  TrainConfig cfg_;
  int nr_id_;
  Rng rng_;
  std::vector<std::vector<TokenGrid>> bag_grids_;
  std::vector<std::vector<int>> bag_labels_;
  std::vector<std::string> bag_names_;
  std::vector<size_t> order_;
  ModelGrads grads_;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  Variant variant = Variant::kAve;
  bool regularize = false;
  int trials = 0;
  double max_rel_err = 0.0;
  std::string worst_group;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = false;
};

namespace detail {

struct GradCheckInstance {
  ModelParams params;
  std::vector<TokenGrid> grids;
  std::vector<int> labels;
  int nr_id = 0;
};

// Random small bag plus random small parameters. Dropout is off (the checked
// function must be deterministic), so the instance exercises every other path.
inline GradCheckInstance random_instance(Rng& rng, Variant variant) {
  GradCheckInstance inst;
  const int clip = 3;
  ModelShapes sh;
  sh.vocab = 12;
  sh.pos_rows = 2 * clip + 2;
  sh.d1 = 4;
  sh.d2 = 2;
  sh.dwin = 3;
  sh.ds = 3;
  sh.classes = 3 + static_cast<int>(rng.below(4));  // 3..6

  inst.params.enc.d1 = sh.d1;
  inst.params.enc.d2 = sh.d2;
  inst.params.enc.dwin = sh.dwin;
  inst.params.enc.ds = sh.ds;
  auto rand_matrix = [&](int r, int c, double bound) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.uniform(-bound, bound);
    return m;
  };
  inst.params.enc.V = rand_matrix(sh.vocab, sh.d1, 0.5);
  inst.params.enc.P_head = rand_matrix(sh.pos_rows, sh.d2, 0.5);
  inst.params.enc.P_tail = rand_matrix(sh.pos_rows, sh.d2, 0.5);
  inst.params.enc.K = rand_matrix(sh.ds, sh.dwin * sh.dw(), 0.5);
  inst.params.enc.b.resize(sh.ds);
  for (double& v : inst.params.enc.b) v = rng.uniform(-0.2, 0.2);
  inst.params.W = rand_matrix(sh.classes, sh.df(), 0.5);

  PositionFeaturizer pf{clip};
  const int max_len = 8;
  const int n_sent = 1 + static_cast<int>(rng.below(3));
  for (int si = 0; si < n_sent; ++si) {
    const int n = 2 + static_cast<int>(rng.below(6));  // 2..7
    EncodedMention m;
    for (int i = 0; i < n; ++i) m.token_ids.push_back(static_cast<int>(rng.below(sh.vocab)));
    m.head_pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    do {
      m.tail_pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    } while (m.tail_pos == m.head_pos);
    inst.grids.push_back(featurize(m, pf, max_len));
  }

  inst.nr_id = 0;
  // NR-only bags matter for the cost-sensitive variant; positives for all.
  if (variant == Variant::kCostAtt && rng.below(3) == 0) {
    inst.labels = {inst.nr_id};
  } else {
    const int n_pos = 1 + static_cast<int>(rng.below(2));
    while (static_cast<int>(inst.labels.size()) < n_pos) {
      int c = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sh.classes - 1)));
      if (std::find(inst.labels.begin(), inst.labels.end(), c) == inst.labels.end()) {
        inst.labels.push_back(c);
      }
    }
    std::sort(inst.labels.begin(), inst.labels.end());
    // keep at least one non-label class for negative selection
    if (static_cast<int>(inst.labels.size()) >= sh.classes) inst.labels.pop_back();
  }
  return inst;
}

// Finite differences need the loss smooth in an h-neighborhood, so instances
// whose forward pass sits near a non-differentiable point are rejected:
// hinge arguments near 0, near-ties in negative selection, near-ties in the
// pooled maxima. Mirrors the term structure of the three losses.
inline bool instance_is_smooth(const GradCheckInstance& inst, const LossConfig& cfg) {
  constexpr double kHingeMargin = 2e-2;
  constexpr double kSelectMargin = 5e-3;
  constexpr double kPoolMargin = 5e-3;

  std::vector<std::vector<double>> S;
  for (const TokenGrid& g : inst.grids) {
    Matrix q = embed_tokens(g, g.n, inst.params.enc);
    Matrix m = convolve(q, inst.params.enc);
    const int p1 = std::min(g.head_pos, g.tail_pos);
    const int p2 = std::max(g.head_pos, g.tail_pos);
    const int lo[3] = {0, p1 + 1, p2 + 1};
    const int hi[3] = {p1, p2, g.n - 1};
    for (int k = 0; k < m.rows; ++k) {
      for (int seg = 0; seg < 3; ++seg) {
        if (hi[seg] - lo[seg] < 1) continue;
        double best = -1e300, second = -1e300;
        for (int i = lo[seg]; i <= hi[seg]; ++i) {
          double v = m.at(k, i);
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        if (best - second < kPoolMargin) return false;
      }
    }
    SentenceState st;
    PoolResult pool = piecewise_maxpool(m, p1, p2);
    finish(st, pool.z, nullptr, 1.0, false);
    S.push_back(st.s);
  }

  auto hinge_ok = [&](double arg) { return std::fabs(arg) > kHingeMargin; };
  auto selection_ok = [&](const std::vector<double>& scores) {
    std::vector<char> in_labels(scores.size(), 0);
    for (int l : inst.labels) in_labels[l] = 1;
    double best = -1e300, second = -1e300;
    for (size_t c = 0; c < scores.size(); ++c) {
      if (in_labels[c]) continue;
      if (scores[c] > best) {
        second = best;
        best = scores[c];
      } else if (scores[c] > second) {
        second = scores[c];
      }
    }
    return second < -1e299 || best - second > kSelectMargin;
  };

  auto check_terms = [&](const std::vector<double>& scores, int cond) {
    if (!selection_ok(scores)) return false;
    const int c_neg = select_negative(scores, inst.labels);
    if (!hinge_ok(cfg.sigma_neg + scores[c_neg])) return false;
    switch (cfg.variant) {
      case Variant::kAve:
      case Variant::kAtt:
        return hinge_ok(cfg.sigma_pos - scores[cond]);
      case Variant::kCostAtt: {
        for (int c : inst.labels) {
          if (!hinge_ok(cfg.sigma_pos - scores[c])) return false;
        }
        if (cond != inst.nr_id && !hinge_ok(cfg.sigma_neg + scores[inst.nr_id])) return false;
        return true;
      }
    }
    return false;
  };

  if (cfg.variant == Variant::kAve) {
    const BagRepr repr = aggregate_ave(S);
    const std::vector<double> scores = matvec(inst.params.W, repr.r);
    for (int c : inst.labels) {
      if (!hinge_ok(cfg.sigma_pos - scores[c])) return false;
    }
    return check_terms(scores, inst.labels[0]);
  }
  for (int cond : inst.labels) {
    const BagRepr repr = aggregate_att(S, cond, inst.params.W);
    const std::vector<double> scores = matvec(inst.params.W, repr.r);
    if (!check_terms(scores, cond)) return false;
  }
  return true;
}

}  // namespace detail

// Compares hand-written backward passes against central finite differences on
// random small instances, once per (variant, regularize) combination.
// Dropout is forced off. Relative error uses an absolute floor of 1e-8.
inline GradCheckReport grad_check(int trials, std::uint64_t seed, double h = 1e-4,
                                  double tol = 1e-4) {
  GradCheckReport report;
  Rng rng(seed);
  const Variant variants[3] = {Variant::kAve, Variant::kAtt, Variant::kCostAtt};
  for (Variant variant : variants) {
    for (int reg = 0; reg < 2; ++reg) {
      LossConfig cfg;
      cfg.variant = variant;
      cfg.regularize = reg == 1;
      cfg.lambda = 0.5;  // keep every term and its gradient alive
      cfg.gamma = 0.7;
      GradCheckEntry entry;
      entry.variant = variant;
      entry.regularize = cfg.regularize;
      entry.trials = trials;
      for (int t = 0; t < trials; ++t) {
        detail::GradCheckInstance inst;
        int attempts = 0;
        do {
          inst = detail::random_instance(rng, variant);
          if (++attempts > 200) throw NumericError("grad_check: no smooth instance found");
        } while (!detail::instance_is_smooth(inst, cfg));

        ModelGrads grads;
        grads.init_like(inst.params);
        bag_forward_backward(inst.grids, inst.params, inst.labels, cfg, inst.nr_id, 1.0, false,
                             nullptr, &grads);
        if (cfg.regularize) {
          RegResult rr = regularizer(inst.params.W, inst.nr_id, cfg);
          for (size_t i = 0; i < grads.W.data.size(); ++i) grads.W.data[i] += rr.grad.data[i];
        }
        const std::vector<double> analytic = flatten(grads);

        ModelParams probe = inst.params;
        auto f = [&](const std::vector<double>& theta) {
          unflatten(theta, probe);
          double loss = bag_forward_backward(inst.grids, probe, inst.labels, cfg, inst.nr_id, 1.0,
                                             false, nullptr, nullptr)
                            .loss;
          if (cfg.regularize) loss += regularizer(probe.W, inst.nr_id, cfg).value;
          return loss;
        };
        const std::vector<double> numeric = finite_diff_grad(f, flatten(inst.params), h);

        const std::vector<ParamGroup> groups = param_groups(inst.params);
        for (const ParamGroup& g : groups) {
          for (size_t i = g.offset; i < g.offset + g.size; ++i) {
            double err = rel_error(analytic[i], numeric[i]);
            if (err > entry.max_rel_err) {
              entry.max_rel_err = err;
              entry.worst_group = g.name;
            }
          }
        }
      }
      entry.pass = entry.max_rel_err < tol;
      report.entries.push_back(entry);
    }
  }
  report.all_pass = true;
  for (const auto& e : report.entries) report.all_pass = report.all_pass && e.pass;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header + "\n\0" + little-endian float32 arrays in the
// order V, P_head, P_tail, K, b, W.

struct Checkpoint {
  ModelParams params;
  std::uint64_t vocab_hash = 0;
  std::uint64_t schema_hash = 0;
  nlohmann::json config;
};

constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ModelParams& p,
                            std::uint64_t vocab_hash, std::uint64_t schema_hash,
                            const nlohmann::json& config) {
  nlohmann::json header;
  header["format"] = "relex-checkpoint";
  header["version"] = kCheckpointVersion;
  header["vocab_hash"] = hash_hex(vocab_hash);
  header["schema_hash"] = hash_hex(schema_hash);
  header["config"] = config;
  header["dims"] = {{"d1", p.enc.d1}, {"d2", p.enc.d2},   {"dwin", p.enc.dwin},
                    {"ds", p.enc.ds}, {"vocab", p.enc.V.rows}, {"pos_rows", p.enc.P_head.rows},
                    {"classes", p.W.rows}};
  auto arrays = nlohmann::json::array();
  std::string payload;
  auto add = [&](const char* name, int rows, int cols, const std::vector<double>& data) {
    arrays.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
    binio::append_f32(payload, data.data(), data.size());
  };
  add("V", p.enc.V.rows, p.enc.V.cols, p.enc.V.data);
  add("P_head", p.enc.P_head.rows, p.enc.P_head.cols, p.enc.P_head.data);
  add("P_tail", p.enc.P_tail.rows, p.enc.P_tail.cols, p.enc.P_tail.data);
  add("K", p.enc.K.rows, p.enc.K.cols, p.enc.K.data);
  add("b", 1, static_cast<int>(p.enc.b.size()), p.enc.b);
  add("W", p.W.rows, p.W.cols, p.W.data);
  header["arrays"] = arrays;
  binio::write_file(path, header, payload);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  binio::FileContent fc = binio::read_file(path);
  const nlohmann::json& h = fc.header;
  try {
    if (h.at("format") != "relex-checkpoint" ||
        h.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint version mismatch in " + path);
    }
    Checkpoint ck;
    ck.vocab_hash = std::stoull(h.at("vocab_hash").get<std::string>(), nullptr, 16);
    ck.schema_hash = std::stoull(h.at("schema_hash").get<std::string>(), nullptr, 16);
    ck.config = h.at("config");
    const auto& dims = h.at("dims");
    ck.params.enc.d1 = dims.at("d1").get<int>();
    ck.params.enc.d2 = dims.at("d2").get<int>();
    ck.params.enc.dwin = dims.at("dwin").get<int>();
    ck.params.enc.ds = dims.at("ds").get<int>();

    size_t expected = 0;
    for (const auto& a : h.at("arrays")) {
      expected += a.at("rows").get<size_t>() * a.at("cols").get<size_t>() * 4;
    }
    if (fc.payload.size() < expected) {
      throw CheckpointTruncatedError("truncated checkpoint payload in " + path + ": have " +
                                     std::to_string(fc.payload.size()) + " bytes, want " +
                                     std::to_string(expected));
    }
    size_t offset = 0;
    auto read_into = [&](const nlohmann::json& a, Matrix& m) {
      m = Matrix(a.at("rows").get<int>(), a.at("cols").get<int>());
      binio::read_f32(fc.payload, offset, m.data.data(), m.data.size());
      offset += m.data.size() * 4;
    };
    for (const auto& a : h.at("arrays")) {
      const std::string name = a.at("name").get<std::string>();
      if (name == "V") {
        read_into(a, ck.params.enc.V);
      } else if (name == "P_head") {
        read_into(a, ck.params.enc.P_head);
      } else if (name == "P_tail") {
        read_into(a, ck.params.enc.P_tail);
      } else if (name == "K") {
        read_into(a, ck.params.enc.K);
      } else if (name == "b") {
        size_t n = a.at("cols").get<size_t>();
        ck.params.enc.b.resize(n);
        binio::read_f32(fc.payload, offset, ck.params.enc.b.data(), n);
        offset += n * 4;
      } else if (name == "W") {
        read_into(a, ck.params.W);
      } else {
        throw DataError("unknown checkpoint array " + name + " in " + path);
      }
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in " + path + ": " + e.what());
  }
}

// A checkpoint only scores datasets it was trained against.
inline void verify_checkpoint_compat(const Checkpoint& ck, const Dataset& data) {
  if (ck.schema_hash != data.schema.hash()) {
    throw CheckpointHashError("checkpoint schema hash does not match the dataset");
  }
  if (ck.vocab_hash != data.vocab.hash()) {
    throw CheckpointHashError("checkpoint vocabulary hash does not match the dataset");
  }
}

// ---------------------------------------------------------------------------
// Epoch log: one CSV row per epoch. The wall_seconds column always holds a
// fixed 0.000 so logs are byte-identical for identical runs; measured wall
// time is reported on '#'-prefixed stdout lines instead.

class EpochLogger {
 public:
  EpochLogger(const std::string& path, bool with_val) : out_(path, std::ios::trunc), with_val_(with_val) {
    if (!out_) throw DataError("cannot open epoch log for writing: " + path);
    out_ << "epoch,mean_loss,pos_term,neg_term,reg_term,wall_seconds";
    if (with_val_) out_ << ",val_F";
    out_ << "\n";
  }

  void log(int epoch, const EpochReport& rep, double val_f = -1.0) {
    out_ << epoch << ',' << format_g(rep.mean_loss) << ',' << format_g(rep.pos_term) << ','
         << format_g(rep.neg_term) << ',' << format_g(rep.reg_term) << ",0.000";
    if (with_val_) out_ << ',' << format_g(val_f);
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  bool with_val_;
};

}  // namespace relex
