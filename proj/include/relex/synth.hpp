#pragma once

// Deterministic synthetic corpus for smoke and learning tests: 8 positive
// relations plus NR, two mentions per bag, 70% NR mentions. Positive bags
// alternate between tied label pairs ({rel1,rel2}, {rel3,rel4}, {rel5,rel6})
// and singletons over every relation; each positive mention carries a cue
// word for one of its relations between the two entity tokens, so the task
// is learnable but not trivial (entity tokens and fillers carry nothing).

#include <string>
#include <vector>

#include "json.hpp"
#include "relex/corpus.hpp"
#include "relex/numeric.hpp"

namespace relex {

struct SynthConfig {
  std::uint64_t seed = 7;
  int train_bags = 2000;
  int test_bags = 400;
  int dim = 50;  // embedding width in the emitted vectors file
};

struct SynthSplitCounts {
  long long bags = 0;
  long long mentions = 0;
  long long facts = 0;
  double nr_pct = 0.0;
};

struct SynthCorpus {
  std::string schema_text;
  std::string embeddings_text;
  std::string train_jsonl;
  std::string test_jsonl;
  SynthSplitCounts train;
  SynthSplitCounts test;
  int surface_words = 0;  // distinct tokens across all sentences
};

namespace detail {

inline const std::vector<std::string>& synth_fillers() {
  static const std::vector<std::string> f = {"the", "a",  "of",   "in",   "said", "was",
                                             "report", "from", "city", "on", "met",  "with"};
  return f;
}

inline std::string synth_cue(int rel, int alt) {
  return "cue" + std::to_string(rel) + (alt == 0 ? "a" : "b");
}

struct SynthMention {
  std::string head, tail;
  std::vector<std::string> relations;
  std::vector<std::string> tokens;
  int head_pos = 0, tail_pos = 0;
};

// [fillers] E1 [fillers] (cue) [fillers] E2 [fillers]; the cue, when present,
// always sits between the entities.
inline SynthMention make_sentence(Rng& rng, const std::string& head, const std::string& tail,
                                  const std::vector<std::string>& relations, int cue_rel) {
  const auto& fillers = synth_fillers();
  auto filler = [&]() { return fillers[rng.below(fillers.size())]; };
  SynthMention m;
  m.head = head;
  m.tail = tail;
  m.relations = relations;
  const bool head_first = rng.uniform01() < 0.7;
  const std::string first = head_first ? "enth" : "entt";
  const std::string second = head_first ? "entt" : "enth";

  for (std::uint64_t i = rng.below(3); i > 0; --i) m.tokens.push_back(filler());
  const int first_pos = static_cast<int>(m.tokens.size());
  m.tokens.push_back(first);
  for (std::uint64_t i = rng.below(2); i > 0; --i) m.tokens.push_back(filler());
  if (cue_rel > 0) m.tokens.push_back(synth_cue(cue_rel, static_cast<int>(rng.below(2))));
  for (std::uint64_t i = rng.below(2); i > 0; --i) m.tokens.push_back(filler());
  const int second_pos = static_cast<int>(m.tokens.size());
  m.tokens.push_back(second);
  for (std::uint64_t i = rng.below(3); i > 0; --i) m.tokens.push_back(filler());

  m.head_pos = head_first ? first_pos : second_pos;
  m.tail_pos = head_first ? second_pos : first_pos;
  return m;
}

inline std::string mention_json(const SynthMention& m) {
  nlohmann::json j;
  j["head"] = m.head;
  j["tail"] = m.tail;
  j["relations"] = m.relations;
  j["tokens"] = m.tokens;
  j["head_pos"] = m.head_pos;
  j["tail_pos"] = m.tail_pos;
  return j.dump();
}

inline void synth_split(Rng& rng, int n_bags, const std::string& pair_prefix,
                        std::string* jsonl, SynthSplitCounts* counts) {
  long long nr_mentions = 0;
  int positive_seen = 0;
  for (int i = 0; i < n_bags; ++i) {
    const std::string head = pair_prefix + std::to_string(i) + "_h";
    const std::string tail = pair_prefix + std::to_string(i) + "_t";
    const bool positive = (i % 10) < 3;  // 30% positive bags -> 70% NR mentions
    std::vector<SynthMention> mentions;
    if (!positive) {
      mentions.push_back(make_sentence(rng, head, tail, {"NR"}, 0));
      mentions.push_back(make_sentence(rng, head, tail, {"NR"}, 0));
      nr_mentions += 2;
    } else {
      const int j = positive_seen++;
      if (j % 2 == 0) {
        // tied pair: the two mentions carry one relation each, union at bag level
        static const int ties[3][2] = {{1, 2}, {3, 4}, {5, 6}};
        const int* pair = ties[(j / 2) % 3];
        mentions.push_back(
            make_sentence(rng, head, tail, {"rel" + std::to_string(pair[0])}, pair[0]));
        mentions.push_back(
            make_sentence(rng, head, tail, {"rel" + std::to_string(pair[1])}, pair[1]));
        counts->facts += 2;
      } else {
        const int rel = 1 + (j / 2) % 8;
        const std::string name = "rel" + std::to_string(rel);
        mentions.push_back(make_sentence(rng, head, tail, {name}, rel));
        mentions.push_back(make_sentence(rng, head, tail, {name}, rel));
        counts->facts += 1;
      }
    }
    for (const SynthMention& m : mentions) {
      *jsonl += mention_json(m);
      *jsonl += '\n';
    }
    counts->mentions += static_cast<long long>(mentions.size());
  }
  counts->bags = n_bags;
  counts->nr_pct = 100.0 * static_cast<double>(nr_mentions) / static_cast<double>(counts->mentions);
}

}  // namespace detail

inline SynthCorpus generate_synth(const SynthConfig& cfg) {
  SynthCorpus out;
  Rng rng(cfg.seed);

  out.schema_text = "NR\t0\n";
  for (int r = 1; r <= 8; ++r) {
    out.schema_text += "rel" + std::to_string(r) + "\t" + std::to_string(r) + "\n";
  }

  std::vector<std::string> words = {"enth", "entt"};
  for (const std::string& f : detail::synth_fillers()) words.push_back(f);
  for (int r = 1; r <= 8; ++r) {
    words.push_back(detail::synth_cue(r, 0));
    words.push_back(detail::synth_cue(r, 1));
  }
  out.surface_words = static_cast<int>(words.size());
  out.embeddings_text = std::to_string(words.size()) + " " + std::to_string(cfg.dim) + "\n";
  for (const std::string& w : words) {
    out.embeddings_text += w;
    for (int d = 0; d < cfg.dim; ++d) {
      out.embeddings_text += ' ';
      out.embeddings_text += format_g(rng.uniform(-0.25, 0.25));
    }
    out.embeddings_text += '\n';
  }

  detail::synth_split(rng, cfg.train_bags, "p", &out.train_jsonl, &out.train);
  detail::synth_split(rng, cfg.test_bags, "q", &out.test_jsonl, &out.test);
  return out;
}

struct SynthPaths {
  std::string schema;
  std::string embeddings;
  std::string train;
  std::string test;
};

inline SynthPaths write_synth(const SynthCorpus& corpus, const std::string& dir) {
  auto write = [&](const std::string& name, const std::string& text) {
    std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    return path;
  };
  SynthPaths p;
  p.schema = write("relations.tsv", corpus.schema_text);
  p.embeddings = write("vectors.txt", corpus.embeddings_text);
  p.train = write("train.jsonl", corpus.train_jsonl);
  p.test = write("test.jsonl", corpus.test_jsonl);
  return p;
}

}  // namespace relex
