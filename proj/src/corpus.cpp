#include "riskspan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "riskspan/error.hpp"
#include "riskspan/rng.hpp"
#include "riskspan/text.hpp"
#include "riskspan/unicode.hpp"

namespace riskspan {

using ojson = nlohmann::ordered_json;

namespace {

AnnotatedDocument parse_document(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, e.what(), line_no);
  }
  if (!j.is_object()) throw Error(ErrorCode::MalformedJson, "expected a JSON object", line_no);

  auto require_string = [&](const char* key) -> std::string {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::MissingField, std::string("missing \"") + key + "\"", line_no);
    if (!it->is_string()) throw Error(ErrorCode::MalformedJson, std::string("\"") + key + "\" must be a string", line_no);
    return it->get<std::string>();
  };

  AnnotatedDocument doc;
  doc.id = require_string("id");
  if (doc.id.empty()) throw Error(ErrorCode::MissingField, "empty id", line_no);
  doc.text = require_string("text");
  if (doc.text.empty()) throw Error(ErrorCode::EmptyText, "document '" + doc.id + "' has empty text", line_no);
  const std::string risk = require_string("risk");
  const auto level = parse_risk(risk);
  if (!level) throw Error(ErrorCode::UnknownRiskLevel, "risk \"" + risk + "\" is not one of a, b, c, d", line_no);
  doc.risk = *level;

  const std::size_t length = unicode::codepoint_length(doc.text);
  if (const auto it = j.find("spans"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::MalformedJson, "\"spans\" must be an array", line_no);
    for (const auto& s : *it) {
      if (!s.is_object() || !s.contains("start") || !s.contains("end") ||
          !s["start"].is_number_integer() || !s["end"].is_number_integer()) {
        throw Error(ErrorCode::MalformedJson, "span needs integer \"start\" and \"end\"", line_no);
      }
      const auto start = s["start"].get<std::int64_t>();
      const auto end = s["end"].get<std::int64_t>();
      if (start < 0 || end <= start || static_cast<std::size_t>(end) > length) {
        std::ostringstream msg;
        msg << "span [" << start << ", " << end << ") outside text of length " << length
            << " in document '" << doc.id << "'";
        throw Error(ErrorCode::SpanOutOfBounds, msg.str(), line_no);
      }
      CharSpan span{static_cast<std::size_t>(start), static_cast<std::size_t>(end), std::nullopt};
      if (const auto lab = s.find("label"); lab != s.end() && !lab->is_null()) {
        if (!lab->is_string()) throw Error(ErrorCode::MalformedJson, "span label must be a string", line_no);
        span.label = lab->get<std::string>();
      }
      doc.gold_spans.push_back(std::move(span));
    }
  }
  std::stable_sort(doc.gold_spans.begin(), doc.gold_spans.end(), [](const CharSpan& a, const CharSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  return doc;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::vector<AnnotatedDocument> read_corpus(std::istream& in) {
  std::vector<AnnotatedDocument> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    AnnotatedDocument doc = parse_document(line, line_no);
    if (!seen.insert(doc.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id '" + doc.id + "'", line_no);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus file " + path.string());
  return read_corpus(in);
}

std::string to_jsonl_line(const AnnotatedDocument& doc) {
  ojson j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["risk"] = std::string(1, risk_char(doc.risk));
  ojson spans = ojson::array();
  for (const auto& s : doc.gold_spans) {
    ojson o;
    o["start"] = s.start;
    o["end"] = s.end;
    if (s.label) o["label"] = *s.label;
    spans.push_back(std::move(o));
  }
  j["spans"] = std::move(spans);
  return j.dump();
}

void write_corpus(std::span<const AnnotatedDocument> corpus, std::ostream& out) {
  for (const auto& doc : corpus) out << to_jsonl_line(doc) << '\n';
}

void write_corpus(std::span<const AnnotatedDocument> corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_corpus(corpus, out);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<CharSpan> merge_overlapping(std::span<const CharSpan> spans) {
  std::vector<CharSpan> sorted(spans.begin(), spans.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const CharSpan& a, const CharSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  std::vector<CharSpan> merged;
  for (auto& s : sorted) {
    if (!merged.empty() && s.start < merged.back().end) {
      CharSpan& last = merged.back();
      last.end = std::max(last.end, s.end);
      if (last.label != s.label) last.label.reset();
    } else {
      merged.push_back(std::move(s));
    }
  }
  return merged;
}

std::vector<TokenSpan> char_to_token_spans(std::span<const CharSpan> spans, std::span<const Token> tokens) {
  std::vector<TokenSpan> out;
  for (const CharSpan& s : merge_overlapping(spans)) {
    // First token whose end lies past the span start.
    auto first = std::partition_point(tokens.begin(), tokens.end(),
                                      [&](const Token& t) { return t.char_end <= s.start; });
    if (first == tokens.end() || first->char_start >= s.end) continue;
    auto last = first;
    while (std::next(last) != tokens.end() && std::next(last)->char_start < s.end) ++last;
    TokenSpan ts{static_cast<std::size_t>(first - tokens.begin()),
                 static_cast<std::size_t>(last - tokens.begin())};
    if (!out.empty() && ts.start <= out.back().end) {
      out.back().end = std::max(out.back().end, ts.end);
    } else {
      out.push_back(ts);
    }
  }
  return out;
}

TagSequence project_spans_to_bio(const AnnotatedDocument& doc, std::span<const Token> tokens) {
  const std::size_t length = unicode::codepoint_length(doc.text);
  for (const Token& t : tokens) {
    if (t.char_start >= t.char_end || t.char_end > length) {
      throw Error(ErrorCode::TokenMismatch, "token offsets outside text of document '" + doc.id + "'");
    }
  }
  TagSequence tags(tokens.size(), BioTag::O);
  for (const TokenSpan& ts : char_to_token_spans(doc.gold_spans, tokens)) {
    tags[ts.start] = BioTag::B;
    for (std::size_t i = ts.start + 1; i <= ts.end; ++i) tags[i] = BioTag::I;
  }
  return tags;
}

// ---------------------------------------------------------------------------

std::size_t FoldAssignment::fold_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(ErrorCode::IdMismatch, "id '" + id + "' not in fold assignment");
  return folds[static_cast<std::size_t>(it - ids.begin())];
}

std::vector<std::size_t> FoldAssignment::members(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] == f) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] != f) out.push_back(i);
  }
  return out;
}

namespace {

std::array<std::vector<std::size_t>, kNumRiskLevels> shuffled_by_class(
    std::span<const AnnotatedDocument> corpus, Rng& rng) {
  std::array<std::vector<std::size_t>, kNumRiskLevels> groups;
  for (std::size_t i = 0; i < corpus.size(); ++i) groups[index_of(corpus[i].risk)].push_back(i);
  for (auto& g : groups) rng.shuffle(std::span(g));
  return groups;
}

}  // namespace

FoldAssignment kfold_split(std::span<const AnnotatedDocument> corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (corpus.size() < k) {
    throw Error(ErrorCode::CorpusTooSmall,
                "corpus of " + std::to_string(corpus.size()) + " documents is smaller than k=" + std::to_string(k));
  }
  Rng rng(seed);
  const auto groups = shuffled_by_class(corpus, rng);
  FoldAssignment fa;
  fa.k = k;
  fa.folds.assign(corpus.size(), 0);
  // Dealing the class-grouped sequence round-robin keeps both every class and
  // every fold balanced to within one document.
  std::size_t position = 0;
  for (const auto& g : groups) {
    for (std::size_t idx : g) fa.folds[idx] = position++ % k;
  }
  fa.ids.reserve(corpus.size());
  for (const auto& doc : corpus) fa.ids.push_back(doc.id);
  return fa;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const AnnotatedDocument> corpus, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "dev_fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  const auto groups = shuffled_by_class(corpus, rng);
  std::vector<std::size_t> train, dev;
  for (const auto& g : groups) {
    const auto n_dev = static_cast<std::size_t>(std::floor(static_cast<double>(g.size()) * dev_fraction + 0.5));
    for (std::size_t i = 0; i < g.size(); ++i) (i < n_dev ? dev : train).push_back(g[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(dev.begin(), dev.end());
  return {std::move(train), std::move(dev)};
}

// ---------------------------------------------------------------------------

GenConfig GenConfig::defaults() {
  GenConfig c;
  c.mild = {"feeling down", "cannot sleep", "so stressed", "feel lonely",
            "lost interest", "really anxious", "overwhelmed", "exhausted constantly"};
  c.moderate = {"hopeless", "feel worthless", "hate myself", "no reason to live",
                "cutting again", "better off without me", "cannot go on", "self harm"};
  c.severe = {"want to die", "kill myself", "end my life", "wrote a note",
              "bought a rope", "suicide plan", "not be here tomorrow", "overdose tonight"};
  c.filler = {"i", "my", "the", "a", "and", "to", "today", "work", "friends", "school",
              "really", "just", "think", "about", "it", "is", "was", "that", "this", "with",
              "we", "went", "out", "dinner", "weekend", "game", "music", "movie", "dog", "cat",
              "coffee", "rain", "sun", "morning", "night", "class", "boss", "mom", "dad", "sister",
              "brother", "phone", "car", "bus", "city", "park", "walk", "book", "read", "watch",
              "play", "new", "old", "good", "bad", "day", "week", "year", "home", "house",
              "room", "food", "pizza", "tea", "call", "text", "post", "people", "maybe", "never",
              "always", "still", "yesterday", "tomorrow", "lunch", "store", "train", "garden", "shift", "exam"};
  return c;
}

RiskLevel risk_from_markers(std::span<const CharSpan> spans) {
  bool mild = false, moderate = false, severe = false;
  for (const auto& s : spans) {
    if (!s.label) continue;
    mild |= *s.label == kMildLabel;
    moderate |= *s.label == kModerateLabel;
    severe |= *s.label == kSevereLabel;
  }
  if (severe) return RiskLevel::D;
  if (moderate) return RiskLevel::C;
  if (mild) return RiskLevel::B;
  return RiskLevel::A;
}

namespace {

struct Plant {
  const std::string* phrase;
  std::string_view label;
};

const std::string& pick(Rng& rng, const std::vector<std::string>& items) {
  return items[rng.below(items.size())];
}

}  // namespace

std::vector<AnnotatedDocument> generate_synthetic(const GenConfig& config, std::uint64_t seed) {
  std::vector<AnnotatedDocument> docs;
  if (config.count == 0) return docs;

  const auto& w = config.class_weights;
  const double total_weight = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total_weight > 0.0) || std::any_of(w.begin(), w.end(), [](double x) { return !(x >= 0.0); })) {
    throw Error(ErrorCode::InvalidArgument, "class weights must be non-negative with a positive sum");
  }
  if (config.min_filler > config.max_filler) {
    throw Error(ErrorCode::InvalidArgument, "min_filler exceeds max_filler");
  }
  if (config.filler.empty()) throw Error(ErrorCode::EmptyLexicon, "filler vocabulary is empty");
  auto require = [&](std::size_t cls, const std::vector<std::string>& lex, const char* name) {
    if (w[cls] > 0.0 && lex.empty()) {
      throw Error(ErrorCode::EmptyLexicon, std::string(name) + " lexicon is empty but requested");
    }
  };
  require(1, config.mild, "mild");
  require(2, config.moderate, "moderate");
  require(3, config.severe, "severe");

  Rng rng(seed);
  docs.reserve(config.count);
  for (std::size_t n = 0; n < config.count; ++n) {
    // Target class by weighted draw.
    double u = rng.open_unit() * total_weight;
    std::size_t cls = 0;
    while (cls + 1 < kNumRiskLevels && (u >= w[cls] || w[cls] == 0.0)) {
      u -= w[cls];
      ++cls;
    }

    std::vector<Plant> plants;
    switch (cls) {
      case 1:
        plants.push_back({&pick(rng, config.mild), kMildLabel});
        break;
      case 2:
        plants.push_back({&pick(rng, config.moderate), kModerateLabel});
        if (!config.mild.empty() && rng.below(2) == 0) plants.push_back({&pick(rng, config.mild), kMildLabel});
        break;
      case 3:
        plants.push_back({&pick(rng, config.severe), kSevereLabel});
        if (rng.below(2) == 0) {
          if (!config.moderate.empty() && rng.below(2) == 0) {
            plants.push_back({&pick(rng, config.moderate), kModerateLabel});
          } else if (!config.mild.empty()) {
            plants.push_back({&pick(rng, config.mild), kMildLabel});
          }
        }
        break;
      default:
        break;
    }

    const std::size_t n_filler =
        config.min_filler + rng.below(config.max_filler - config.min_filler + 1);
    std::vector<const std::string*> words;
    words.reserve(n_filler);
    for (std::size_t i = 0; i < n_filler; ++i) words.push_back(&pick(rng, config.filler));

    // Each plant takes a distinct gap between filler words, so planted phrases
    // never touch each other.
    std::vector<std::size_t> gaps(n_filler + 1);
    std::iota(gaps.begin(), gaps.end(), std::size_t{0});
    rng.shuffle(std::span(gaps));
    std::vector<std::pair<std::size_t, std::size_t>> placement;  // (gap, plant index)
    for (std::size_t p = 0; p < plants.size() && p < gaps.size(); ++p) placement.emplace_back(gaps[p], p);
    std::sort(placement.begin(), placement.end());

    AnnotatedDocument doc;
    {
      std::ostringstream id;
      id << "syn-" << std::setw(6) << std::setfill('0') << n;
      doc.id = id.str();
    }
    std::u32string text;
    auto append_word = [&](std::string_view word) {
      if (!text.empty()) text.push_back(U' ');
      text += unicode::decode_utf8(word);
    };
    std::size_t next_plant = 0;
    for (std::size_t gap = 0; gap <= n_filler; ++gap) {
      while (next_plant < placement.size() && placement[next_plant].first == gap) {
        const Plant& plant = plants[placement[next_plant].second];
        if (!text.empty()) text.push_back(U' ');
        const std::size_t start = text.size();
        text += unicode::decode_utf8(*plant.phrase);
        doc.gold_spans.push_back(CharSpan{start, text.size(), std::string(plant.label)});
        ++next_plant;
      }
      if (gap < n_filler) append_word(*words[gap]);
    }
    if (text.empty()) append_word(pick(rng, config.filler));
    if (text[0] >= U'a' && text[0] <= U'z') text[0] = text[0] - 32;
    text.push_back(rng.below(4) == 0 ? U'!' : U'.');

    doc.text = unicode::encode_utf8(text);
    doc.risk = risk_from_markers(doc.gold_spans);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << value;
  return s.str();
}

std::uint64_t lexicon_hash(const GenConfig& config) {
  ojson j;
  j["mild"] = config.mild;
  j["moderate"] = config.moderate;
  j["severe"] = config.severe;
  j["filler"] = config.filler;
  return fnv1a64(j.dump());
}

}  // namespace riskspan
