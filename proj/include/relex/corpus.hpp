#pragma once

// Corpus ingestion for distantly supervised relation extraction.
//
// Input formats:
//  - relation schema: text, one "name<TAB>id" per line, ids dense from 0,
//    exactly one NR (no-relation) entry;
//  - mentions: JSON lines with fields head, tail, relations[], tokens[],
//    head_pos, tail_pos;
//  - word embeddings: text, optional "<count> <dim>" first line, then
//    "word v1 ... vd" rows.
//
// Mentions sharing an entity pair are grouped into a bag whose label set is
// the union of the mention labels; NR is exclusive, so it is dropped from the
// union whenever a positive relation is present.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "relex/binio.hpp"
#include "relex/numeric.hpp"

namespace relex {

struct RelationSchema {
  std::vector<std::string> names;  // id -> name
  std::unordered_map<std::string, int> ids;
  int nr_id = -1;

  int size() const { return static_cast<int>(names.size()); }

  int id_of(const std::string& name) const {
    auto it = ids.find(name);
    return it == ids.end() ? -1 : it->second;
  }

  static RelationSchema parse(std::istream& in, const std::string& origin) {
    RelationSchema schema;
    std::map<int, std::string> by_id;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": expected name<TAB>id");
      }
      std::string name = line.substr(0, tab);
      int id;
      try {
        id = std::stoi(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": bad relation id");
      }
      if (name.empty() || by_id.count(id) || schema.ids.count(name)) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": duplicate or empty entry");
      }
      by_id[id] = name;
      schema.ids[name] = id;
    }
    if (by_id.empty()) throw DataError(origin + ": empty relation schema");
    int expect = 0;
    for (const auto& [id, name] : by_id) {
      if (id != expect++) throw DataError(origin + ": relation ids must be dense from 0");
      schema.names.push_back(name);
    }
    schema.nr_id = schema.id_of("NR");
    if (schema.nr_id < 0) throw DataError(origin + ": schema must contain NR");
    return schema;
  }

  static RelationSchema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema: " + path);
    return parse(in, path);
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64("schema");
    for (int i = 0; i < size(); ++i) {
      h = fnv1a64(names[i], h);
      h = fnv1a64("\n", h);
    }
    return h;
  }
};

struct Mention {
  std::vector<std::string> tokens;
  int head_pos = 0;
  int tail_pos = 0;
  std::string head;
  std::string tail;
  std::vector<int> labels;  // sorted relation ids
};

// Parses JSON-lines mentions. Sentences longer than max_len are truncated to
// their first max_len tokens; a record whose truncation would drop an entity
// is rejected, as is any record with out-of-range positions or unknown labels.
inline std::vector<Mention> parse_mentions(std::istream& in, const std::string& origin,
                                           const RelationSchema& schema, int max_len) {
  std::vector<Mention> mentions;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("bad JSON: ") + e.what());
    }
    Mention m;
    try {
      m.head = j.at("head").get<std::string>();
      m.tail = j.at("tail").get<std::string>();
      m.head_pos = j.at("head_pos").get<int>();
      m.tail_pos = j.at("tail_pos").get<int>();
      m.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& rel : j.at("relations")) {
        int id = schema.id_of(rel.get<std::string>());
        if (id < 0) throw fail("unknown relation name: " + rel.get<std::string>());
        m.labels.push_back(id);
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("missing or mistyped field: ") + e.what());
    }
    int n = static_cast<int>(m.tokens.size());
    if (n < 1) throw fail("empty token list");
    if (m.labels.empty()) throw fail("empty relation list");
    if (m.head_pos < 0 || m.head_pos >= n || m.tail_pos < 0 || m.tail_pos >= n) {
      throw fail("entity position out of range");
    }
    if (m.head_pos == m.tail_pos) throw fail("head and tail positions coincide");
    if (n > max_len) {
      if (m.head_pos >= max_len || m.tail_pos >= max_len) {
        throw fail("truncation to max_len=" + std::to_string(max_len) + " would drop an entity");
      }
      m.tokens.resize(max_len);
    }
    std::sort(m.labels.begin(), m.labels.end());
    m.labels.erase(std::unique(m.labels.begin(), m.labels.end()), m.labels.end());
    mentions.push_back(std::move(m));
  }
  if (mentions.empty()) throw DataError(origin + ": no mentions");
  return mentions;
}

inline std::vector<Mention> load_mentions(const std::string& path, const RelationSchema& schema,
                                          int max_len) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mentions: " + path);
  return parse_mentions(in, path, schema, max_len);
}

struct Bag {
  std::string head;
  std::string tail;
  std::vector<int> labels;       // sorted union; NR never co-occurs with a positive
  std::vector<int> mention_ids;  // indices into the mention array
};

// Groups mentions by entity pair. Bags come out in first-occurrence order;
// the label union drops NR whenever any positive label is present.
inline std::vector<Bag> build_bags(const std::vector<Mention>& mentions,
                                   const RelationSchema& schema) {
  std::vector<Bag> bags;
  std::map<std::pair<std::string, std::string>, int> index;
  for (size_t i = 0; i < mentions.size(); ++i) {
    const Mention& m = mentions[i];
    auto key = std::make_pair(m.head, m.tail);
    auto it = index.find(key);
    if (it == index.end()) {
      index[key] = static_cast<int>(bags.size());
      bags.push_back(Bag{m.head, m.tail, {}, {}});
      it = index.find(key);
    }
    Bag& bag = bags[it->second];
    bag.mention_ids.push_back(static_cast<int>(i));
    bag.labels.insert(bag.labels.end(), m.labels.begin(), m.labels.end());
  }
  for (Bag& bag : bags) {
    std::sort(bag.labels.begin(), bag.labels.end());
    bag.labels.erase(std::unique(bag.labels.begin(), bag.labels.end()), bag.labels.end());
    if (bag.labels.size() > 1) {
      auto nr = std::find(bag.labels.begin(), bag.labels.end(), schema.nr_id);
      if (nr != bag.labels.end()) bag.labels.erase(nr);
    }
  }
  return bags;
}

// Percentage of mentions whose label set is exactly {NR}.
inline double nr_proportion(const std::vector<Mention>& mentions, int nr_id) {
  if (mentions.empty()) throw DataError("nr_proportion: no mentions");
  size_t nr = 0;
  for (const Mention& m : mentions) {
    if (m.labels.size() == 1 && m.labels[0] == nr_id) ++nr;
  }
  return 100.0 * static_cast<double>(nr) / static_cast<double>(mentions.size());
}

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> words;  // id -> word, [0]="<PAD>", [1]="<UNK>"
  std::unordered_map<std::string, int> ids;
  int min_count = 100;

  int size() const { return static_cast<int>(words.size()); }

  int id_of(const std::string& w) const {
    auto it = ids.find(w);
    return it == ids.end() ? kUnk : it->second;
  }

  // Keeps words whose corpus frequency is strictly greater than min_count,
  // in lexicographic order so the mapping does not depend on input order.
  static Vocabulary build(const std::vector<Mention>& mentions, int min_count) {
    std::map<std::string, long long> freq;
    for (const Mention& m : mentions) {
      for (const std::string& t : m.tokens) ++freq[t];
    }
    Vocabulary v;
    v.min_count = min_count;
    v.words = {"<PAD>", "<UNK>"};
    for (const auto& [word, count] : freq) {
      if (count > min_count) v.words.push_back(word);
    }
    for (int i = 0; i < v.size(); ++i) v.ids[v.words[i]] = i;
    return v;
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64("vocab");
    for (const std::string& w : words) {
      h = fnv1a64(w, h);
      h = fnv1a64("\n", h);
    }
    return h;
  }
};

// Relative positions to an entity, clipped to [-clip, clip] and shifted to
// [0, 2*clip]; one extra id marks padding. The matching embedding table
// therefore has 2*clip + 2 rows and its PAD row stays zero.
struct PositionFeaturizer {
  int clip = 30;

  int rows() const { return 2 * clip + 2; }
  int pad_id() const { return 2 * clip + 1; }

  int id_for(int rel) const { return std::clamp(rel, -clip, clip) + clip; }
};

struct EncodedMention {
  std::vector<int> token_ids;  // true length, no padding
  int head_pos = 0;
  int tail_pos = 0;
  std::vector<int> labels;
};

inline EncodedMention encode_mention(const Mention& m, const Vocabulary& vocab) {
  EncodedMention e;
  e.token_ids.reserve(m.tokens.size());
  for (const std::string& t : m.tokens) e.token_ids.push_back(vocab.id_of(t));
  e.head_pos = m.head_pos;
  e.tail_pos = m.tail_pos;
  e.labels = m.labels;
  return e;
}

// One row per grid position: word id plus relative-position ids to head and
// tail. Rows past max_len are cut (ingestion already guarded the entities);
// rows past the true length are PAD on all three channels.
struct TokenGrid {
  int n = 0;  // true sentence length after truncation
  int head_pos = 0;
  int tail_pos = 0;
  std::vector<int> word;      // max_len entries
  std::vector<int> pos_head;  // max_len entries
  std::vector<int> pos_tail;  // max_len entries
};

inline TokenGrid featurize(const EncodedMention& m, const PositionFeaturizer& pf, int max_len) {
  TokenGrid g;
  g.n = std::min<int>(static_cast<int>(m.token_ids.size()), max_len);
  if (m.head_pos >= g.n || m.tail_pos >= g.n) {
    throw DataError("featurize: entity position beyond truncated length");
  }
  g.head_pos = m.head_pos;
  g.tail_pos = m.tail_pos;
  g.word.assign(max_len, Vocabulary::kPad);
  g.pos_head.assign(max_len, pf.pad_id());
  g.pos_tail.assign(max_len, pf.pad_id());
  for (int i = 0; i < g.n; ++i) {
    g.word[i] = m.token_ids[i];
    g.pos_head[i] = pf.id_for(i - m.head_pos);
    g.pos_tail[i] = pf.id_for(i - m.tail_pos);
  }
  return g;
}

// Word embedding matrix for a vocabulary: file-provided rows where available,
// uniform [-0.25, 0.25] for out-of-vocabulary words (drawn in id order), and
// an all-zero PAD row.
inline Matrix parse_embeddings(std::istream& in, const std::string& origin,
                               const Vocabulary& vocab, Rng& rng) {
  std::unordered_map<std::string, std::vector<double>> table;
  int dim = -1;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> parts;
    std::string tok;
    while (ss >> tok) parts.push_back(tok);
    if (first) {
      first = false;
      // optional "<count> <dim>" header
      if (parts.size() == 2) {
        try {
          (void)std::stoll(parts[0]);
          dim = std::stoi(parts[1]);
          continue;
        } catch (const std::exception&) {
          // fall through: a two-column line that is not a header
        }
      }
    }
    if (parts.size() < 2) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected word and values");
    }
    std::vector<double> vec;
    vec.reserve(parts.size() - 1);
    for (size_t i = 1; i < parts.size(); ++i) {
      try {
        vec.push_back(std::stod(parts[i]));
      } catch (const std::exception&) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": bad value " + parts[i]);
      }
    }
    if (dim < 0) dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": dimension " +
                      std::to_string(vec.size()) + " != " + std::to_string(dim));
    }
    table[parts[0]] = std::move(vec);
  }
  if (dim <= 0) throw DataError(origin + ": no embedding rows");
  Matrix V(vocab.size(), dim);
  for (int id = 0; id < vocab.size(); ++id) {
    if (id == Vocabulary::kPad) continue;  // stays zero
    auto it = table.find(vocab.words[id]);
    if (it != table.end()) {
      std::copy(it->second.begin(), it->second.end(), V.row(id));
    } else {
      for (int c = 0; c < dim; ++c) V.at(id, c) = rng.uniform(-0.25, 0.25);
    }
  }
  return V;
}

inline Matrix load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings: " + path);
  return parse_embeddings(in, path, vocab, rng);
}

struct DatasetSplit {
  std::vector<EncodedMention> mentions;
  std::vector<Bag> bags;
  double nr_pct = 0.0;  // over mentions, computed at ingestion
};

struct SplitStats {
  long long mentions = 0;
  long long bags = 0;
  long long facts = 0;  // distinct positive (pair, relation)
  double nr_pct = 0.0;
};

inline SplitStats split_stats(const DatasetSplit& split, int nr_id) {
  SplitStats s;
  s.mentions = static_cast<long long>(split.mentions.size());
  s.bags = static_cast<long long>(split.bags.size());
  for (const Bag& b : split.bags) {
    for (int label : b.labels) {
      if (label != nr_id) ++s.facts;
    }
  }
  s.nr_pct = split.nr_pct;
  return s;
}

// Prepared dataset: schema, vocabulary and encoded splits, cached to one file
// (JSON header + int32 payload) so training never re-parses text.
struct Dataset {
  RelationSchema schema;
  Vocabulary vocab;
  int max_len = 120;
  int pos_clip = 30;
  DatasetSplit train;
  DatasetSplit test;
  DatasetSplit val;

  static constexpr int kCacheVersion = 1;

  void save(const std::string& path) const {
    nlohmann::json header;
    header["format"] = "relex-dataset";
    header["version"] = kCacheVersion;
    header["schema"] = schema.names;
    header["nr_id"] = schema.nr_id;
    header["vocab"] = vocab.words;
    header["min_count"] = vocab.min_count;
    header["max_len"] = max_len;
    header["pos_clip"] = pos_clip;
    header["schema_hash"] = hash_hex(schema.hash());
    header["vocab_hash"] = hash_hex(vocab.hash());
    std::string payload;
    const DatasetSplit* splits[3] = {&train, &test, &val};
    const char* names[3] = {"train", "test", "val"};
    for (int si = 0; si < 3; ++si) {
      const DatasetSplit& sp = *splits[si];
      nlohmann::json js;
      js["nr_pct"] = sp.nr_pct;
      js["bags"] = nlohmann::json::array();
      for (const Bag& b : sp.bags) {
        js["bags"].push_back({{"h", b.head}, {"t", b.tail}, {"l", b.labels}, {"m", b.mention_ids}});
      }
      std::vector<std::int32_t> ints;
      ints.push_back(static_cast<std::int32_t>(sp.mentions.size()));
      for (const EncodedMention& m : sp.mentions) {
        ints.push_back(static_cast<std::int32_t>(m.token_ids.size()));
        ints.push_back(m.head_pos);
        ints.push_back(m.tail_pos);
        ints.push_back(static_cast<std::int32_t>(m.labels.size()));
        for (int l : m.labels) ints.push_back(l);
        for (int t : m.token_ids) ints.push_back(t);
      }
      js["i32_count"] = ints.size();
      header["splits"][names[si]] = js;
      binio::append_i32(payload, ints.data(), ints.size());
    }
    binio::write_file(path, header, payload);
  }

  static Dataset load(const std::string& path) {
    binio::FileContent fc = binio::read_file(path);
    const nlohmann::json& h = fc.header;
    try {
      if (h.at("format") != "relex-dataset" || h.at("version") != kCacheVersion) {
        throw DataError("unsupported dataset cache: " + path);
      }
      Dataset d;
      d.schema.names = h.at("schema").get<std::vector<std::string>>();
      for (int i = 0; i < d.schema.size(); ++i) d.schema.ids[d.schema.names[i]] = i;
      d.schema.nr_id = h.at("nr_id").get<int>();
      d.vocab.words = h.at("vocab").get<std::vector<std::string>>();
      d.vocab.min_count = h.at("min_count").get<int>();
      for (int i = 0; i < d.vocab.size(); ++i) d.vocab.ids[d.vocab.words[i]] = i;
      d.max_len = h.at("max_len").get<int>();
      d.pos_clip = h.at("pos_clip").get<int>();
      DatasetSplit* splits[3] = {&d.train, &d.test, &d.val};
      const char* names[3] = {"train", "test", "val"};
      size_t offset = 0;
      for (int si = 0; si < 3; ++si) {
        const nlohmann::json& js = h.at("splits").at(names[si]);
        DatasetSplit& sp = *splits[si];
        sp.nr_pct = js.at("nr_pct").get<double>();
        for (const auto& jb : js.at("bags")) {
          Bag b;
          b.head = jb.at("h").get<std::string>();
          b.tail = jb.at("t").get<std::string>();
          b.labels = jb.at("l").get<std::vector<int>>();
          b.mention_ids = jb.at("m").get<std::vector<int>>();
          sp.bags.push_back(std::move(b));
        }
        size_t count = js.at("i32_count").get<size_t>();
        if (fc.payload.size() < offset + count * 4) {
          throw DataError("truncated dataset cache: " + path);
        }
        std::vector<std::int32_t> ints(count);
        binio::read_i32(fc.payload, offset, ints.data(), count);
        offset += count * 4;
        size_t p = 0;
        auto next = [&]() -> std::int32_t {
          if (p >= ints.size()) throw DataError("truncated dataset cache: " + path);
          return ints[p++];
        };
        int n_mentions = next();
        for (int i = 0; i < n_mentions; ++i) {
          EncodedMention m;
          int len = next();
          m.head_pos = next();
          m.tail_pos = next();
          int n_labels = next();
          for (int l = 0; l < n_labels; ++l) m.labels.push_back(next());
          for (int t = 0; t < len; ++t) m.token_ids.push_back(next());
          sp.mentions.push_back(std::move(m));
        }
      }
      return d;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad dataset cache " + path + ": " + e.what());
    }
  }
};

}  // namespace relex
