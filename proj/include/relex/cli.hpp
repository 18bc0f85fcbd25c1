#pragma once

// Command implementations behind the command-line tool: prepare (ingest and
// cache a dataset), train, eval, grad-check. Settings come from a flat
// key=value config file; explicit command-line flags win over file values.
// All output is deterministic for a fixed seed and inputs; wall-clock timing
// only ever appears on '#'-prefixed log lines.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/evaluator.hpp"
#include "relex/trainer.hpp"

namespace relex {

struct RunConfig {
  std::string schema;
  std::string train_mentions;
  std::string test_mentions;
  std::string val_mentions;
  std::string embeddings;
  std::string cache;
  std::string checkpoint;
  std::string out = "out";

  int max_len = 120;
  int pos_clip = 30;
  int min_count = 100;
  int trials = 20;

  TrainConfig train;

  bool lambda_set = false;
  bool gamma_set = false;
  bool variant_set = false;
};

namespace cli_detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: " + v);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: " + v);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    // stoull accepts a leading minus and wraps; refuse it explicitly
    if (!v.empty() && (v[0] == '-' || v[0] == '+')) throw std::invalid_argument(v);
    std::uint64_t i = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an unsigned integer: " + v);
  }
}

inline bool parse_onoff(const std::string& key, const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError(key + ": expected on or off, got " + v);
}

}  // namespace cli_detail

inline Variant parse_variant(const std::string& v) {
  if (v == "ave") return Variant::kAve;
  if (v == "att") return Variant::kAtt;
  if (v == "cost_att") return Variant::kCostAtt;
  throw ConfigError("variant: expected ave, att or cost_att, got " + v);
}

// One key=value assignment from the config file or a flag.
inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
  using namespace cli_detail;
  if (key == "schema") rc.schema = value;
  else if (key == "train_mentions") rc.train_mentions = value;
  else if (key == "test_mentions") rc.test_mentions = value;
  else if (key == "val_mentions") rc.val_mentions = value;
  else if (key == "embeddings") rc.embeddings = value;
  else if (key == "cache") rc.cache = value;
  else if (key == "checkpoint") rc.checkpoint = value;
  else if (key == "out") rc.out = value;
  else if (key == "max_len") rc.max_len = static_cast<int>(parse_int(key, value));
  else if (key == "pos_clip") rc.pos_clip = static_cast<int>(parse_int(key, value));
  else if (key == "min_count") rc.min_count = static_cast<int>(parse_int(key, value));
  else if (key == "trials") rc.trials = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") rc.train.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "batch") rc.train.batch = static_cast<int>(parse_int(key, value));
  else if (key == "seed") rc.train.seed = parse_u64(key, value);
  else if (key == "lr") rc.train.lr = parse_double(key, value);
  else if (key == "p_keep") rc.train.p_keep = parse_double(key, value);
  else if (key == "shuffle") rc.train.shuffle = parse_onoff(key, value);
  else if (key == "d2") rc.train.d2 = static_cast<int>(parse_int(key, value));
  else if (key == "ds") rc.train.ds = static_cast<int>(parse_int(key, value));
  else if (key == "dwin") rc.train.dwin = static_cast<int>(parse_int(key, value));
  else if (key == "variant") { rc.train.loss.variant = parse_variant(value); rc.variant_set = true; }
  else if (key == "lambda") { rc.train.loss.lambda = parse_double(key, value); rc.lambda_set = true; }
  else if (key == "gamma") { rc.train.loss.gamma = parse_double(key, value); rc.gamma_set = true; }
  else if (key == "rho") rc.train.loss.rho = parse_double(key, value);
  else if (key == "sigma_pos") rc.train.loss.sigma_pos = parse_double(key, value);
  else if (key == "sigma_neg") rc.train.loss.sigma_neg = parse_double(key, value);
  else if (key == "epsilon") rc.train.loss.epsilon = parse_double(key, value);
  else if (key == "eta") rc.train.loss.eta = parse_double(key, value);
  else if (key == "regularize") rc.train.loss.regularize = parse_onoff(key, value);
  else throw ConfigError("unknown config key: " + key);
}

inline void load_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = cli_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = cli_detail::trim(t.substr(0, eq));
    std::string value = cli_detail::trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    try {
      apply_setting(rc, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

namespace cli_detail {

inline void require_path(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required setting: " + key);
  if (!std::filesystem::exists(value)) throw ConfigError(key + ": path does not exist: " + value);
}

inline void check_optional_path(const std::string& value, const std::string& key) {
  if (!value.empty() && !std::filesystem::exists(value)) {
    throw ConfigError(key + ": path does not exist: " + value);
  }
}

}  // namespace cli_detail

// Cross-field validation shared by every command.
inline void validate_config(const RunConfig& rc) {
  if (rc.train.loss.variant != Variant::kCostAtt) {
    if (rc.lambda_set) throw ConfigError("lambda only applies to variant cost_att");
    if (rc.gamma_set) throw ConfigError("gamma only applies to variant cost_att");
  }
  if (!(rc.train.p_keep > 0.0 && rc.train.p_keep <= 1.0)) {
    throw ConfigError("p_keep must be in (0,1]");
  }
  if (rc.train.lr <= 0.0) throw ConfigError("lr must be positive");
  if (rc.train.batch < 1) throw ConfigError("batch must be at least 1");
  if (rc.max_len < 1 || rc.pos_clip < 1) throw ConfigError("max_len and pos_clip must be positive");
  if (rc.train.d2 < 1 || rc.train.ds < 1 || rc.train.dwin < 1) {
    throw ConfigError("d2, ds and dwin must be positive");
  }
  if (rc.min_count < 0) throw ConfigError("min_count must be non-negative");
  if (rc.trials < 1) throw ConfigError("trials must be positive");
}

inline std::string default_cache(const RunConfig& rc) {
  return rc.cache.empty() ? rc.out + "/dataset.bin" : rc.cache;
}

inline nlohmann::json config_snapshot(const RunConfig& rc) {
  nlohmann::json j;
  j["variant"] = variant_name(rc.train.loss.variant);
  j["lambda"] = rc.train.loss.lambda;
  j["gamma"] = rc.train.loss.gamma;
  j["rho"] = rc.train.loss.rho;
  j["sigma_pos"] = rc.train.loss.sigma_pos;
  j["sigma_neg"] = rc.train.loss.sigma_neg;
  j["epsilon"] = rc.train.loss.epsilon;
  j["eta"] = rc.train.loss.eta;
  j["regularize"] = rc.train.loss.regularize;
  j["batch"] = rc.train.batch;
  j["lr"] = rc.train.lr;
  j["epochs"] = rc.train.epochs;
  j["seed"] = rc.train.seed;
  j["p_keep"] = rc.train.p_keep;
  j["d2"] = rc.train.d2;
  j["ds"] = rc.train.ds;
  j["dwin"] = rc.train.dwin;
  j["max_len"] = rc.max_len;
  j["pos_clip"] = rc.pos_clip;
  j["min_count"] = rc.min_count;
  return j;
}

struct PrepareOutcome {
  SplitStats train, test, val;
  int relations = 0;
  int vocab_words = 0;
  std::string cache_path;
};

inline PrepareOutcome cmd_prepare(const RunConfig& rc, std::ostream& log) {
  validate_config(rc);
  cli_detail::require_path(rc.schema, "schema");
  cli_detail::require_path(rc.train_mentions, "train_mentions");
  cli_detail::check_optional_path(rc.test_mentions, "test_mentions");
  cli_detail::check_optional_path(rc.val_mentions, "val_mentions");

  Dataset d;
  d.schema = RelationSchema::load(rc.schema);
  d.max_len = rc.max_len;
  d.pos_clip = rc.pos_clip;

  std::vector<Mention> train_raw = load_mentions(rc.train_mentions, d.schema, rc.max_len);
  d.vocab = Vocabulary::build(train_raw, rc.min_count);

  auto fill_split = [&](const std::vector<Mention>& raw, DatasetSplit& split) {
    split.bags = build_bags(raw, d.schema);
    split.nr_pct = nr_proportion(raw, d.schema.nr_id);
    split.mentions.reserve(raw.size());
    for (const Mention& m : raw) split.mentions.push_back(encode_mention(m, d.vocab));
  };
  fill_split(train_raw, d.train);
  if (!rc.test_mentions.empty()) {
    fill_split(load_mentions(rc.test_mentions, d.schema, rc.max_len), d.test);
  }
  if (!rc.val_mentions.empty()) {
    fill_split(load_mentions(rc.val_mentions, d.schema, rc.max_len), d.val);
  }

  std::filesystem::create_directories(rc.out);
  PrepareOutcome out;
  out.cache_path = default_cache(rc);
  d.save(out.cache_path);
  out.relations = d.schema.size();
  out.vocab_words = d.vocab.size();
  out.train = split_stats(d.train, d.schema.nr_id);
  out.test = split_stats(d.test, d.schema.nr_id);
  out.val = split_stats(d.val, d.schema.nr_id);

  char buf[160];
  log << "split    mentions     bags    facts     NR%\n";
  auto row = [&](const char* name, const SplitStats& s) {
    if (s.mentions == 0) return;
    std::snprintf(buf, sizeof(buf), "%-5s %11lld %8lld %8lld %7.2f\n", name, s.mentions, s.bags,
                  s.facts, s.nr_pct);
    log << buf;
  };
  row("train", out.train);
  row("test", out.test);
  row("val", out.val);
  log << "relations " << out.relations << "\n";
  log << "vocabulary " << out.vocab_words << " words (PAD and UNK included)\n";
  log << "cache " << out.cache_path << "\n";
  return out;
}

struct TrainOutcome {
  std::vector<EpochReport> epochs;
  std::vector<double> val_f;
  std::string final_checkpoint;
};

inline TrainOutcome cmd_train(const RunConfig& rc, std::ostream& log) {
  validate_config(rc);
  if (rc.train.epochs < 0) throw ConfigError("epochs is required for train");
  cli_detail::require_path(default_cache(rc), "cache");
  cli_detail::require_path(rc.embeddings, "embeddings");

  Dataset data = Dataset::load(default_cache(rc));
  if (data.train.bags.empty()) throw DataError("dataset cache has no training bags");

  // One master stream per run seed; embeddings, init and the training loop
  // get independent derived seeds so draw counts never interact.
  Rng master(rc.train.seed);
  const std::uint64_t emb_seed = master.next_u64();
  const std::uint64_t init_seed = master.next_u64();
  const std::uint64_t train_seed = master.next_u64();

  Rng emb_rng(emb_seed);
  Matrix V = load_embeddings(rc.embeddings, data.vocab, emb_rng);

  ModelShapes sh;
  sh.vocab = V.rows;
  sh.pos_rows = 2 * data.pos_clip + 2;
  sh.d1 = V.cols;
  sh.d2 = rc.train.d2;
  sh.dwin = rc.train.dwin;
  sh.ds = rc.train.ds;
  sh.classes = data.schema.size();
  Rng init_rng(init_seed);
  ModelParams params = init_params(sh, std::move(V), init_rng);

  TrainConfig tcfg = rc.train;
  tcfg.seed = train_seed;
  Trainer trainer(data, params, tcfg);

  const bool with_val = !data.val.bags.empty();
  std::filesystem::create_directories(rc.out);
  EpochLogger epoch_log(rc.out + "/epochs.csv", with_val);
  const nlohmann::json snapshot = config_snapshot(rc);
  const std::uint64_t vocab_hash = data.vocab.hash();
  const std::uint64_t schema_hash = data.schema.hash();
  const PositionFeaturizer pf{data.pos_clip};

  log << "# training " << trainer.bag_count() << " bags, variant "
      << variant_name(rc.train.loss.variant) << ", " << rc.train.epochs << " epochs\n";

  TrainOutcome out;
  for (int epoch = 1; epoch <= rc.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport rep = trainer.train_epoch();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    double val_f = -1.0;
    if (with_val) {
      ScoredSplit scored = score_bags(data.val, params, rc.train.loss, data.schema.nr_id, pf,
                                      data.max_len);
      GoldSet gold = gold_facts(data.val.bags, data.schema.nr_id);
      if (gold.empty()) {
        std::cerr << "# warning: validation split has no positive facts; val_F is 0\n";
        val_f = 0.0;
      } else {
        val_f = max_f_measure(pr_curve(scored.records, gold));
      }
      out.val_f.push_back(val_f);
    }
    epoch_log.log(epoch, rep, val_f);
    out.epochs.push_back(rep);

    log << "epoch " << epoch << " loss " << format_g(rep.mean_loss) << " pos "
        << format_g(rep.pos_term) << " neg " << format_g(rep.neg_term) << " reg "
        << format_g(rep.reg_term);
    if (with_val) log << " val_F " << format_g(val_f);
    log << "\n";
    {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "# epoch %d wall %.3fs\n", epoch, wall);
      log << buf;
    }

    char name[64];
    std::snprintf(name, sizeof(name), "/epoch_%04d.ckpt", epoch);
    save_checkpoint(rc.out + name, params, vocab_hash, schema_hash, snapshot);
  }

  out.final_checkpoint = rc.out + "/model.ckpt";
  save_checkpoint(out.final_checkpoint, params, vocab_hash, schema_hash, snapshot);
  log << "checkpoint " << out.final_checkpoint << "\n";
  return out;
}

struct EvalOutcome {
  size_t records = 0;
  long long gold = 0;
  double p_at_n[5] = {0, 0, 0, 0, 0};
  double mean_pn = 0.0;
  double max_f = 0.0;
};

inline EvalOutcome cmd_eval(RunConfig rc, std::ostream& log) {
  validate_config(rc);
  cli_detail::require_path(default_cache(rc), "cache");
  const std::string ckpt_path = rc.checkpoint.empty() ? rc.out + "/model.ckpt" : rc.checkpoint;
  cli_detail::require_path(ckpt_path, "checkpoint");

  Dataset data = Dataset::load(default_cache(rc));
  if (data.test.bags.empty()) throw DataError("dataset cache has no test split");
  Checkpoint ck = load_checkpoint(ckpt_path);
  verify_checkpoint_compat(ck, data);

  // The checkpoint remembers its training variant; an explicit --variant wins.
  if (!rc.variant_set && ck.config.contains("variant")) {
    rc.train.loss.variant = parse_variant(ck.config["variant"].get<std::string>());
  }

  const PositionFeaturizer pf{data.pos_clip};
  ScoredSplit scored = score_bags(data.test, ck.params, rc.train.loss, data.schema.nr_id, pf,
                                  data.max_len);
  GoldSet gold = gold_facts(data.test.bags, data.schema.nr_id);
  PRCurve curve = pr_curve(scored.records, gold);

  std::filesystem::create_directories(rc.out);
  write_pr_csv(rc.out + "/pr.csv", curve);
  write_pn_txt(rc.out + "/pn.txt", scored.records, gold);

  EvalOutcome out;
  out.records = scored.records.size();
  out.gold = curve.gold_count;
  out.max_f = max_f_measure(curve);
  const int ns[5] = {100, 200, 300, 400, 500};
  std::string pn_line;
  char buf[16];
  for (int i = 0; i < 5; ++i) {
    out.p_at_n[i] = precision_at(scored.records, gold, ns[i]);
    out.mean_pn += out.p_at_n[i] / 5.0;
    std::snprintf(buf, sizeof(buf), "%.1f ", out.p_at_n[i] * 100.0);
    pn_line += buf;
  }
  std::snprintf(buf, sizeof(buf), "%.1f", out.mean_pn * 100.0);
  pn_line += buf;

  log << "records " << out.records << " gold " << out.gold << "\n";
  log << "P@100 P@200 P@300 P@400 P@500 mean\n" << pn_line << "\n";
  log << "max_F " << format_g(out.max_f) << "\n";
  log << "wrote " << rc.out << "/pr.csv and " << rc.out << "/pn.txt\n";
  return out;
}

inline bool cmd_gradcheck(const RunConfig& rc, std::ostream& log) {
  validate_config(rc);
  GradCheckReport report = grad_check(rc.trials, rc.train.seed);
  for (const GradCheckEntry& e : report.entries) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-8s regularize=%-3s trials=%d max_rel_err=%.3e worst=%-6s %s\n",
                  variant_name(e.variant).c_str(), e.regularize ? "on" : "off", e.trials,
                  e.max_rel_err, e.worst_group.empty() ? "-" : e.worst_group.c_str(),
                  e.pass ? "PASS" : "FAIL");
    log << buf;
  }
  log << (report.all_pass ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return report.all_pass;
}

}  // namespace relex
