#include "relex/evaluator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relex/aggregator.hpp"
#include "relex/losses.hpp"
#include "relex/model.hpp"

namespace relex {
namespace {

// Three relations: 0 = NR, 1, 2.
constexpr int kNr = 0;

GoldSet toy_gold() {
  GoldSet g;
  g.emplace("A", "B", 1);
  g.emplace("C", "D", 2);
  return g;
}

// Ranked order: hit, miss, hit.
std::vector<EvalRecord> toy_records() {
  return {
      {"X", "Y", 1, 2.0},
      {"C", "D", 2, 1.0},
      {"A", "B", 1, 3.0},
  };
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_path(const std::string& name) {
  return testing::TempDir() + name;
}

TEST(GoldFacts, CollectsDistinctPositivePairs) {
  std::vector<Bag> bags(3);
  bags[0].head = "A";
  bags[0].tail = "B";
  bags[0].labels = {1, 2};
  bags[1].head = "C";
  bags[1].tail = "D";
  bags[1].labels = {kNr};  // NR-only bag contributes nothing
  bags[2].head = "A";
  bags[2].tail = "E";
  bags[2].labels = {1};
  GoldSet gold = gold_facts(bags, kNr);
  EXPECT_EQ(gold.size(), 3u);
  EXPECT_TRUE(gold.count({"A", "B", 1}));
  EXPECT_TRUE(gold.count({"A", "B", 2}));
  EXPECT_TRUE(gold.count({"A", "E", 1}));
  EXPECT_FALSE(gold.count({"C", "D", kNr}));
}

TEST(GoldFacts, DuplicateFactsAcrossBagsCollapse) {
  std::vector<Bag> bags(2);
  bags[0] = {"A", "B", {1}, {}};
  bags[1] = {"A", "B", {1}, {}};
  EXPECT_EQ(gold_facts(bags, kNr).size(), 1u);
}

TEST(RankRecords, ScoreDescendingThenLexicographic) {
  std::vector<EvalRecord> recs = {
      {"B", "t", 1, 1.0}, {"A", "t", 2, 1.0}, {"A", "t", 1, 1.0},
      {"A", "s", 9, 1.0}, {"Z", "z", 1, 5.0},
  };
  std::vector<EvalRecord> ranked = rank_records(recs);
  ASSERT_EQ(ranked.size(), 5u);
  EXPECT_EQ(ranked[0].head, "Z");  // highest score first
  // ties at score 1.0: head asc, then tail asc, then relation asc
  EXPECT_EQ(ranked[1].tail, "s");
  EXPECT_EQ(ranked[2].head, "A");
  EXPECT_EQ(ranked[2].relation, 1);
  EXPECT_EQ(ranked[3].head, "A");
  EXPECT_EQ(ranked[3].relation, 2);
  EXPECT_EQ(ranked[4].head, "B");
}

TEST(RankRecords, OrderIsInputPermutationInvariant) {
  std::vector<EvalRecord> recs;
  Rng rng(7);
  for (int i = 0; i < 40; ++i) {
    recs.push_back({"h" + std::to_string(i % 5), "t" + std::to_string(i % 3), i % 4,
                    std::floor(rng.uniform(0.0, 4.0))});
  }
  std::vector<EvalRecord> ranked = rank_records(recs);
  std::vector<int> idx(recs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);
  std::vector<EvalRecord> shuffled;
  for (int i : idx) shuffled.push_back(recs[i]);
  std::vector<EvalRecord> ranked2 = rank_records(shuffled);
  ASSERT_EQ(ranked.size(), ranked2.size());
  for (size_t i = 0; i < ranked.size(); ++i) {
    EXPECT_EQ(ranked[i].head, ranked2[i].head);
    EXPECT_EQ(ranked[i].tail, ranked2[i].tail);
    EXPECT_EQ(ranked[i].relation, ranked2[i].relation);
    EXPECT_EQ(ranked[i].score, ranked2[i].score);
  }
}

TEST(PrCurve, HandComputedRows) {
  PRCurve curve = pr_curve(toy_records(), toy_gold());
  ASSERT_EQ(curve.rows.size(), 3u);
  EXPECT_EQ(curve.gold_count, 2);
  EXPECT_DOUBLE_EQ(curve.rows[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(curve.rows[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(curve.rows[0].score, 3.0);
  EXPECT_DOUBLE_EQ(curve.rows[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(curve.rows[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(curve.rows[2].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(curve.rows[2].recall, 1.0);
  EXPECT_DOUBLE_EQ(curve.rows[2].score, 1.0);
}

TEST(PrCurve, RecallNeverDecreasesAndStaysInUnitInterval) {
  Rng rng(11);
  std::vector<EvalRecord> recs;
  GoldSet gold;
  for (int i = 0; i < 200; ++i) {
    std::string h = "h" + std::to_string(i);
    recs.push_back({h, "t", 1 + (i % 2), rng.uniform(-3.0, 3.0)});
    if (i % 3 == 0) gold.emplace(h, "t", 1 + (i % 2));
  }
  PRCurve curve = pr_curve(recs, gold);
  double prev_recall = 0.0;
  for (const PRRow& row : curve.rows) {
    EXPECT_GE(row.precision, 0.0);
    EXPECT_LE(row.precision, 1.0);
    EXPECT_GE(row.recall, prev_recall);
    EXPECT_LE(row.recall, 1.0);
    prev_recall = row.recall;
  }
  EXPECT_DOUBLE_EQ(curve.rows.back().recall, 1.0);  // every gold fact is scored
}

TEST(PrCurve, EmptyGoldSetRejected) {
  EXPECT_THROW(pr_curve(toy_records(), GoldSet{}), DataError);
}

TEST(PrecisionAt, HandComputedFractions) {
  const std::vector<EvalRecord> recs = toy_records();
  const GoldSet gold = toy_gold();
  EXPECT_DOUBLE_EQ(precision_at(recs, gold, 1), 1.0);
  EXPECT_DOUBLE_EQ(precision_at(recs, gold, 2), 0.5);
  EXPECT_DOUBLE_EQ(precision_at(recs, gold, 3), 2.0 / 3.0);
}

TEST(PrecisionAt, RejectsOutOfRangeN) {
  const std::vector<EvalRecord> recs = toy_records();
  const GoldSet gold = toy_gold();
  EXPECT_THROW(precision_at(recs, gold, 0), DataError);
  EXPECT_THROW(precision_at(recs, gold, -1), DataError);
  EXPECT_THROW(precision_at(recs, gold, 4), DataError);
}

TEST(PrecisionAt, HitCountsAreIntegersAndNonDecreasing) {
  Rng rng(13);
  std::vector<EvalRecord> recs;
  GoldSet gold;
  for (int i = 0; i < 120; ++i) {
    std::string h = "e" + std::to_string(i);
    recs.push_back({h, "t", 1, rng.uniform(-1.0, 1.0)});
    if (rng.uniform01() < 0.4) gold.emplace(h, "t", 1);
  }
  long long prev_hits = 0;
  for (int n = 1; n <= 120; ++n) {
    const double hits = precision_at(recs, gold, n) * n;
    EXPECT_NEAR(hits, std::llround(hits), 1e-9) << "P@" << n << " * " << n << " not integral";
    EXPECT_GE(std::llround(hits), prev_hits);
    prev_hits = std::llround(hits);
  }
}

TEST(FMeasure, HarmonicMeanCases) {
  EXPECT_DOUBLE_EQ(f_measure(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(f_measure(0.5, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(f_measure(1.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(f_measure(0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(f_measure(2.0 / 3.0, 1.0), 0.8);
}

TEST(FMeasure, BothZeroWarnsAndReturnsZero) {
  testing::internal::CaptureStderr();
  const double f = f_measure(0.0, 0.0);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_DOUBLE_EQ(f, 0.0);
  EXPECT_NE(err.find("# warning"), std::string::npos) << err;
}

TEST(FMeasure, MaxOverHandCurve) {
  PRCurve curve = pr_curve(toy_records(), toy_gold());
  // per-rank F: 2/3, 1/2, 4/5 -> max at the last rank
  EXPECT_DOUBLE_EQ(max_f_measure(curve), 0.8);
}

TEST(FMeasure, MaxIsZeroOnAllMissCurve) {
  GoldSet gold;
  gold.emplace("never", "hit", 1);
  std::vector<EvalRecord> recs = {{"A", "B", 1, 1.0}, {"C", "D", 2, 0.5}};
  EXPECT_DOUBLE_EQ(max_f_measure(pr_curve(recs, gold)), 0.0);
}

// --- scoring a toy split against a real model ---

struct ToyWorld {
  Dataset data;
  ModelParams params;
  PositionFeaturizer pf;
};

ToyWorld make_toy_world() {
  ToyWorld w;
  w.pf.clip = 4;

  ModelShapes sh;
  sh.vocab = 9;
  sh.pos_rows = w.pf.rows();
  sh.d1 = 4;
  sh.d2 = 2;
  sh.dwin = 3;
  sh.ds = 2;
  sh.classes = 3;

  Matrix V(sh.vocab, sh.d1);
  Rng fill(99);
  for (int r = 1; r < V.rows; ++r) {
    for (int c = 0; c < V.cols; ++c) V.at(r, c) = fill.uniform(-0.25, 0.25);
  }
  Rng init(100);
  w.params = init_params(sh, std::move(V), init);

  w.data.max_len = 10;
  w.data.pos_clip = w.pf.clip;

  auto mention = [](std::vector<int> ids, int hp, int tp) {
    EncodedMention m;
    m.token_ids = std::move(ids);
    m.head_pos = hp;
    m.tail_pos = tp;
    return m;
  };
  DatasetSplit& split = w.data.test;
  split.mentions.push_back(mention({2, 3, 4, 5}, 0, 2));
  split.mentions.push_back(mention({3, 6, 7}, 1, 2));
  split.mentions.push_back(mention({8, 2, 6, 3, 4}, 0, 4));

  Bag b1;
  b1.head = "e1";
  b1.tail = "e2";
  b1.labels = {1};
  b1.mention_ids = {0, 1};
  Bag b2;
  b2.head = "e3";
  b2.tail = "e4";
  b2.labels = {kNr};
  b2.mention_ids = {2};
  split.bags = {b1, b2};
  return w;
}

std::vector<std::vector<double>> sentence_reprs(const ToyWorld& w, const Bag& bag) {
  std::vector<std::vector<double>> S;
  for (int mid : bag.mention_ids) {
    TokenGrid g = featurize(w.data.test.mentions[mid], w.pf, w.data.max_len);
    S.push_back(encoder_forward(g, w.params.enc, 1.0, false, nullptr).s);
  }
  return S;
}

TEST(ScoreBags, AveScoresComeFromTheMeanRepresentation) {
  ToyWorld w = make_toy_world();
  LossConfig cfg;
  cfg.variant = Variant::kAve;
  ScoredSplit out = score_bags(w.data.test, w.params, cfg, kNr, w.pf, w.data.max_len);
  // two bags x two non-NR relations, nothing skipped
  ASSERT_EQ(out.records.size(), 4u);
  EXPECT_EQ(out.skipped, 0);
  for (const Bag& bag : w.data.test.bags) {
    const std::vector<double> want = matvec(w.params.W, aggregate_ave(sentence_reprs(w, bag)).r);
    for (const EvalRecord& rec : out.records) {
      if (rec.head != bag.head) continue;
      EXPECT_NE(rec.relation, kNr);
      EXPECT_EQ(rec.score, want[rec.relation]);
      EXPECT_EQ(rec.tail, bag.tail);
    }
  }
}

TEST(ScoreBags, AttentionReAggregatesPerCandidateRelation) {
  ToyWorld w = make_toy_world();
  LossConfig cfg;
  cfg.variant = Variant::kAtt;
  ScoredSplit out = score_bags(w.data.test, w.params, cfg, kNr, w.pf, w.data.max_len);
  ASSERT_EQ(out.records.size(), 4u);
  for (const EvalRecord& rec : out.records) {
    const Bag& bag = rec.head == "e1" ? w.data.test.bags[0] : w.data.test.bags[1];
    const BagRepr repr = aggregate_att(sentence_reprs(w, bag), rec.relation, w.params.W);
    EXPECT_EQ(rec.score, score(repr.r, rec.relation, w.params.W));
  }
  // the multi-sentence bag must see different representations per relation
  const BagRepr r1 = aggregate_att(sentence_reprs(w, w.data.test.bags[0]), 1, w.params.W);
  const BagRepr r2 = aggregate_att(sentence_reprs(w, w.data.test.bags[0]), 2, w.params.W);
  bool differ = false;
  for (size_t i = 0; i < r1.r.size(); ++i) differ |= (r1.r[i] != r2.r[i]);
  EXPECT_TRUE(differ);
}

TEST(ScoreBags, CostAttScoresMatchAttScores) {
  // scoring has no cost weights: cost_att and att rank identically
  ToyWorld w = make_toy_world();
  LossConfig att, cost;
  att.variant = Variant::kAtt;
  cost.variant = Variant::kCostAtt;
  cost.lambda = 0.7;
  cost.gamma = 0.3;
  ScoredSplit a = score_bags(w.data.test, w.params, att, kNr, w.pf, w.data.max_len);
  ScoredSplit c = score_bags(w.data.test, w.params, cost, kNr, w.pf, w.data.max_len);
  ASSERT_EQ(a.records.size(), c.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].score, c.records[i].score);
  }
}

TEST(ScoreBags, EmptyBagsAreSkippedWithWarning) {
  ToyWorld w = make_toy_world();
  Bag empty;
  empty.head = "e9";
  empty.tail = "e10";
  empty.labels = {1};
  w.data.test.bags.push_back(empty);
  LossConfig cfg;
  cfg.variant = Variant::kAve;
  testing::internal::CaptureStderr();
  ScoredSplit out = score_bags(w.data.test, w.params, cfg, kNr, w.pf, w.data.max_len);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_EQ(out.skipped, 1);
  EXPECT_EQ(out.records.size(), 4u);  // the empty bag adds no records
  EXPECT_NE(err.find("skipped 1 empty bags"), std::string::npos) << err;
}

TEST(WritePrCsv, ExactRowsForHandCurve) {
  const std::string path = tmp_path("pr_test.csv");
  write_pr_csv(path, pr_curve(toy_records(), toy_gold()));
  EXPECT_EQ(read_file(path),
            "rank,precision,recall,score\n"
            "1,1,0.5,3\n"
            "2,0.5,0.5,2\n"
            "3,0.6666666667,1,1\n");
}

TEST(WritePrCsv, UnwritablePathRejected) {
  EXPECT_THROW(write_pr_csv("/nonexistent-dir/pr.csv", PRCurve{}), DataError);
}

TEST(WritePnTxt, NeedsAtLeastFiveHundredRecords) {
  std::vector<EvalRecord> recs(499);
  for (int i = 0; i < 499; ++i) recs[i] = {"h" + std::to_string(i), "t", 1, -i * 1.0};
  GoldSet gold;
  gold.emplace("h0", "t", 1);
  EXPECT_THROW(write_pn_txt(tmp_path("pn_short.txt"), recs, gold), DataError);
}

TEST(WritePnTxt, PercentagesWithOneDecimal) {
  // top 100 records are hits, the rest are misses
  std::vector<EvalRecord> recs;
  GoldSet gold;
  for (int i = 0; i < 600; ++i) {
    std::string h = "h" + std::to_string(i);
    recs.push_back({h, "t", 1, 600.0 - i});
    if (i < 100) gold.emplace(h, "t", 1);
  }
  const std::string path = tmp_path("pn_test.txt");
  write_pn_txt(path, recs, gold);
  // P@N = 100/N: 100.0 50.0 33.3 25.0 20.0, mean 45.7
  EXPECT_EQ(read_file(path),
            "P@100 P@200 P@300 P@400 P@500 mean\n"
            "100.0 50.0 33.3 25.0 20.0 45.7\n");
}

}  // namespace
}  // namespace relex
