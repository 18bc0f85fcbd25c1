#pragma once

// Held-out evaluation: every test bag is scored against every non-NR
// relation, predictions rank globally by score, and precision/recall count
// distinct gold (entity pair, relation) facts. Ties rank deterministically by
// entity pair then relation id.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "relex/model.hpp"

namespace relex {

struct EvalRecord {
  std::string head;
  std::string tail;
  int relation = -1;
  double score = 0.0;
};

using GoldSet = std::set<std::tuple<std::string, std::string, int>>;

inline GoldSet gold_facts(const std::vector<Bag>& bags, int nr_id) {
  GoldSet gold;
  for (const Bag& b : bags) {
    for (int label : b.labels) {
      if (label != nr_id) gold.emplace(b.head, b.tail, label);
    }
  }
  return gold;
}

inline bool record_order(const EvalRecord& a, const EvalRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.head != b.head) return a.head < b.head;
  if (a.tail != b.tail) return a.tail < b.tail;
  return a.relation < b.relation;
}

inline std::vector<EvalRecord> rank_records(std::vector<EvalRecord> records) {
  std::sort(records.begin(), records.end(), record_order);
  return records;
}

struct ScoredSplit {
  std::vector<EvalRecord> records;
  int skipped = 0;  // bags without mentions
};

// Scores one split in eval mode (no dropout). AVE scores all relations from
// the single mean representation; the attention variants re-aggregate per
// candidate relation.
inline ScoredSplit score_bags(const DatasetSplit& split, const ModelParams& params,
                              const LossConfig& cfg, int nr_id, const PositionFeaturizer& pf,
                              int max_len) {
  ScoredSplit out;
  for (const Bag& bag : split.bags) {
    if (bag.mention_ids.empty()) {
      ++out.skipped;
      continue;
    }
    std::vector<std::vector<double>> S;
    S.reserve(bag.mention_ids.size());
    for (int mid : bag.mention_ids) {
      TokenGrid g = featurize(split.mentions[mid], pf, max_len);
      S.push_back(encoder_forward(g, params.enc, 1.0, false, nullptr).s);
    }
    if (cfg.variant == Variant::kAve) {
      const BagRepr repr = aggregate_ave(S);
      const std::vector<double> scores = matvec(params.W, repr.r);
      for (int c = 0; c < params.W.rows; ++c) {
        if (c == nr_id) continue;
        out.records.push_back({bag.head, bag.tail, c, scores[c]});
      }
    } else {
      for (int c = 0; c < params.W.rows; ++c) {
        if (c == nr_id) continue;
        const BagRepr repr = aggregate_att(S, c, params.W);
        out.records.push_back({bag.head, bag.tail, c, score(repr.r, c, params.W)});
      }
    }
  }
  if (out.skipped > 0) {
    std::cerr << "# warning: skipped " << out.skipped << " empty bags during scoring\n";
  }
  return out;
}

struct PRRow {
  double precision = 0.0;  // fraction in [0, 1]
  double recall = 0.0;     // fraction in [0, 1]
  double score = 0.0;
};

struct PRCurve {
  std::vector<PRRow> rows;  // one per rank, rank k = rows[k-1]
  long long gold_count = 0;
};

inline PRCurve pr_curve(const std::vector<EvalRecord>& records, const GoldSet& gold) {
  if (gold.empty()) throw DataError("pr_curve: empty gold set");
  const std::vector<EvalRecord> ranked = rank_records(records);
  PRCurve curve;
  curve.gold_count = static_cast<long long>(gold.size());
  long long hits = 0;
  curve.rows.reserve(ranked.size());
  for (size_t k = 0; k < ranked.size(); ++k) {
    const EvalRecord& r = ranked[k];
    if (gold.count(std::make_tuple(r.head, r.tail, r.relation))) ++hits;
    PRRow row;
    row.precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    row.recall = static_cast<double>(hits) / static_cast<double>(curve.gold_count);
    row.score = r.score;
    curve.rows.push_back(row);
  }
  return curve;
}

// P@N as a fraction in [0, 1]; P@N * N is the integer hit count.
inline double precision_at(const std::vector<EvalRecord>& records, const GoldSet& gold, int n) {
  if (n <= 0 || n > static_cast<int>(records.size())) {
    throw DataError("precision_at: N=" + std::to_string(n) + " exceeds " +
                    std::to_string(records.size()) + " records");
  }
  const std::vector<EvalRecord> ranked = rank_records(records);
  long long hits = 0;
  for (int k = 0; k < n; ++k) {
    const EvalRecord& r = ranked[k];
    if (gold.count(std::make_tuple(r.head, r.tail, r.relation))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// Harmonic mean of precision and recall; 0 (with a warning) when both are 0.
inline double f_measure(double precision, double recall) {
  if (precision == 0.0 && recall == 0.0) {
    std::cerr << "# warning: F-measure of (0, 0) reported as 0\n";
    return 0.0;
  }
  return 2.0 * precision * recall / (precision + recall);
}

inline double max_f_measure(const PRCurve& curve) {
  double best = 0.0;
  for (const PRRow& row : curve.rows) {
    if (row.precision == 0.0 && row.recall == 0.0) continue;
    best = std::max(best, 2.0 * row.precision * row.recall / (row.precision + row.recall));
  }
  return best;
}

inline void write_pr_csv(const std::string& path, const PRCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "rank,precision,recall,score\n";
  for (size_t k = 0; k < curve.rows.size(); ++k) {
    const PRRow& row = curve.rows[k];
    out << (k + 1) << ',' << format_g(row.precision) << ',' << format_g(row.recall) << ','
        << format_g(row.score) << "\n";
  }
}

// P@N over N in {100..500} plus their mean, as percentages with one decimal.
inline void write_pn_txt(const std::string& path, const std::vector<EvalRecord>& records,
                         const GoldSet& gold) {
  const int ns[5] = {100, 200, 300, 400, 500};
  if (static_cast<int>(records.size()) < ns[4]) {
    throw DataError("write_pn_txt: need at least 500 records, have " +
                    std::to_string(records.size()));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "P@100 P@200 P@300 P@400 P@500 mean\n";
  double sum = 0.0;
  char buf[16];
  std::string line;
  for (int i = 0; i < 5; ++i) {
    double p = precision_at(records, gold, ns[i]) * 100.0;
    sum += p;
    std::snprintf(buf, sizeof(buf), "%.1f", p);
    line += buf;
    line += ' ';
  }
  std::snprintf(buf, sizeof(buf), "%.1f", sum / 5.0);
  line += buf;
  out << line << "\n";
}

}  // namespace relex
