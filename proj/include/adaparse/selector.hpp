#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/detail.hpp"
#include "adaparse/tokenize.hpp"

// The selection cascade: CLS I judges extraction validity from cheap text
// statistics, CLS II infers improvement likelihood from metadata, CLS III
// predicts per-parser accuracy from the extracted text via a bucket-hashed
// bag-of-n-grams embedding under a linear head.

namespace adaparse::selector {

// --- CLS I: text validity ----------------------------------------------------

struct TextStats {
  std::size_t char_count = 0;
  std::size_t word_count = 0;
  double alpha_ratio = 0.0;
  double whitespace_ratio = 0.0;
  std::size_t replacement_char_count = 0;
  double mean_word_len = 0.0;
  double backslash_density = 0.0;
};

inline TextStats text_stats(std::string_view text) {
  TextStats s;
  s.char_count = text.size();
  if (text.empty()) return s;
  std::size_t alpha = 0, ws = 0, backslash = 0, word_chars = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    const bool is_ws = c < 0x80 && std::isspace(c);
    if (is_ws) {
      ++ws;
      in_word = false;
    } else {
      if (!in_word) {
        ++s.word_count;
        in_word = true;
      }
      ++word_chars;
    }
    if (c < 0x80 && std::isalpha(c)) ++alpha;
    if (c == '\\') ++backslash;
    // U+FFFD replacement character, UTF-8 EF BF BD.
    if (c == 0xEF && i + 2 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0xBF &&
        static_cast<unsigned char>(text[i + 2]) == 0xBD)
      ++s.replacement_char_count;
  }
  const double n = static_cast<double>(s.char_count);
  s.alpha_ratio = static_cast<double>(alpha) / n;
  s.whitespace_ratio = static_cast<double>(ws) / n;
  s.backslash_density = static_cast<double>(backslash) / n;
  if (s.word_count > 0)
    s.mean_word_len =
        static_cast<double>(word_chars) / static_cast<double>(s.word_count);
  return s;
}

struct Cls1Thresholds {
  std::size_t min_chars_per_page = 200;
  double min_alpha_ratio = 0.5;
  std::size_t max_replacement_chars = 20;
};

// CLS I applies to the first-page probe text, so min_chars_per_page binds
// against one page worth of characters.
inline bool cls1_validity(const TextStats& stats,
                          const Cls1Thresholds& thresholds = {}) {
  return stats.char_count >= thresholds.min_chars_per_page &&
         stats.alpha_ratio >= thresholds.min_alpha_ratio &&
         stats.replacement_char_count <= thresholds.max_replacement_chars;
}

// --- CLS II: metadata improvement likelihood ---------------------------------

// Logistic model over one-hot categorical vocabularies plus scaled numeric
// features. Vocabulary index 0 is the out-of-vocabulary bucket, so unseen
// values score rather than error.
struct Cls2Model {
  std::map<std::string, std::size_t> tool_vocab;
  std::map<std::string, std::size_t> publisher_vocab;
  std::map<std::string, std::size_t> category_vocab;
  std::map<std::string, std::size_t> format_vocab;
  std::vector<double> weights;  // bias, year, pages, then the one-hot blocks
  double bias() const { return weights.empty() ? 0.0 : weights[0]; }

  static double scale_year(int year) {
    return (static_cast<double>(year) - 2000.0) / 50.0;
  }
  static double scale_pages(std::size_t pages) {
    return (static_cast<double>(pages) - 2.5) / 5.0;
  }

  std::size_t feature_count() const {
    return 3 + tool_vocab.size() + 1 + publisher_vocab.size() + 1 +
           category_vocab.size() + 1 + format_vocab.size() + 1;
  }

  // Active feature indices (value 1.0) plus the numeric features.
  template <typename Fn>
  void for_each_feature(const corpus::DocumentMetadata& meta, Fn&& fn) const {
    fn(0, 1.0);  // bias
    fn(1, scale_year(meta.year));
    fn(2, scale_pages(meta.page_count));
    std::size_t base = 3;
    auto one_hot = [&](const std::map<std::string, std::size_t>& vocab,
                       const std::string& value) {
      auto it = vocab.find(value);
      const std::size_t idx = it == vocab.end() ? 0 : it->second + 1;
      fn(base + idx, 1.0);
      base += vocab.size() + 1;
    };
    one_hot(tool_vocab, meta.authoring_tool);
    one_hot(publisher_vocab, meta.publisher);
    one_hot(category_vocab, meta.category);
    one_hot(format_vocab, meta.format_version);
  }

  double score(const corpus::DocumentMetadata& meta) const {
    if (weights.empty()) return 0.5;
    double z = 0.0;
    for_each_feature(meta, [&](std::size_t idx, double value) {
      if (idx < weights.size()) z += weights[idx] * value;
    });
    return 1.0 / (1.0 + std::exp(-z));
  }
};

// Strict inequality: an all-zero model never predicts improvement.
inline bool cls2_improvement(const corpus::DocumentMetadata& meta,
                             const Cls2Model& model) {
  return model.score(meta) > 0.5;
}

// --- CLS III: hashed n-gram embedding and linear accuracy head ---------------

struct EmbeddingConfig {
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 2;
  std::size_t bucket_count = 1u << 14;  // power of two
  std::size_t dim = 16;

  void validate() const {
    if (ngram_min < 1 || ngram_min > ngram_max || ngram_max > 5)
      throw std::invalid_argument("embedding n-gram range must satisfy 1 <= min <= max <= 5");
    if (bucket_count < (1u << 12) || (bucket_count & (bucket_count - 1)) != 0)
      throw std::invalid_argument("bucket_count must be a power of two >= 4096");
    if (dim == 0) throw std::invalid_argument("embedding dim must be >= 1");
  }
};

namespace detail {

// Sparse bag of hashed n-grams, normalized to sum 1. The bucket hash is
// FNV-1a over tokens joined with 0x1f; fixed and documented so weight
// files stay portable.
struct SparseFeatures {
  std::vector<std::pair<std::size_t, double>> items;  // (bucket, weight)
};

inline SparseFeatures feature_counts(std::string_view text,
                                     const EmbeddingConfig& cfg) {
  const auto toks = tokenize(text);
  std::map<std::size_t, double> counts;
  std::size_t total = 0;
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (toks.size() < n) break;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string key = toks[i];
      for (std::size_t k = 1; k < n; ++k) {
        key.push_back('\x1f');
        key += toks[i + k];
      }
      ++counts[fnv1a64(key) & (cfg.bucket_count - 1)];
      ++total;
    }
  }
  SparseFeatures f;
  f.items.reserve(counts.size());
  if (total == 0) return f;
  for (const auto& [bucket, c] : counts)
    f.items.emplace_back(bucket, c / static_cast<double>(total));
  return f;
}

}  // namespace detail

// Embedding table plus linear heads: an m-output regression head for
// per-parser accuracy and a scalar preference head used by DPO.
struct PredictorModel {
  EmbeddingConfig embedding_cfg;
  std::size_t m = 0;
  int stage = 0;  // 0 untrained, then 1..3 through the pipeline
  std::vector<std::string> parser_ids;  // size m
  std::vector<double> embedding;        // bucket_count x dim
  std::vector<double> head_w;           // m x dim
  std::vector<double> head_b;           // m
  std::vector<double> pref_w;           // dim
  double pref_b = 0.0;

  std::size_t parser_index(std::string_view id) const {
    for (std::size_t j = 0; j < parser_ids.size(); ++j)
      if (parser_ids[j] == id) return j;
    throw std::invalid_argument("model has no parser: " + std::string(id));
  }
};

inline PredictorModel init_model(const EmbeddingConfig& cfg,
                                 std::vector<std::string> parser_ids,
                                 std::uint64_t seed,
                                 double head_init_scale = 0.0) {
  cfg.validate();
  PredictorModel model;
  model.embedding_cfg = cfg;
  model.parser_ids = std::move(parser_ids);
  model.m = model.parser_ids.size();
  if (model.m == 0) throw std::invalid_argument("model needs >= 1 parser");
  Rng rng(mix64(seed));
  model.embedding.resize(cfg.bucket_count * cfg.dim);
  for (auto& v : model.embedding) v = (rng.uniform() - 0.5);
  model.head_w.assign(model.m * cfg.dim, 0.0);
  model.head_b.assign(model.m, 0.5);
  if (head_init_scale > 0.0)
    for (auto& v : model.head_w) v = (rng.uniform() - 0.5) * 2.0 * head_init_scale;
  model.pref_w.assign(cfg.dim, 0.0);
  return model;
}

// Mean of bucket vectors over all word n-grams; empty text embeds to zero.
inline std::vector<double> embed(std::string_view text,
                                 const EmbeddingConfig& cfg,
                                 const std::vector<double>& table) {
  if (table.size() != cfg.bucket_count * cfg.dim)
    throw std::invalid_argument("embedding table does not match config");
  std::vector<double> e(cfg.dim, 0.0);
  for (const auto& [bucket, w] : detail::feature_counts(text, cfg).items) {
    const double* row = table.data() + bucket * cfg.dim;
    for (std::size_t j = 0; j < cfg.dim; ++j) e[j] += w * row[j];
  }
  return e;
}

inline std::vector<double> embed(const PredictorModel& model,
                                 std::string_view text) {
  return embed(text, model.embedding_cfg, model.embedding);
}

// head(embed(text)) clamped to [0,1]^m.
inline std::vector<double> predict_accuracy(const PredictorModel& model,
                                            std::string_view first_page_text) {
  const auto e = embed(model, first_page_text);
  std::vector<double> out(model.m);
  for (std::size_t j = 0; j < model.m; ++j) {
    double v = model.head_b[j];
    const double* w = model.head_w.data() + j * model.embedding_cfg.dim;
    for (std::size_t k = 0; k < model.embedding_cfg.dim; ++k) v += w[k] * e[k];
    out[j] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

// --- Weight file ------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_f64s(std::ostream& out, const std::vector<double>& v) {
  write_u32(out, static_cast<std::uint32_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::vector<double> read_f64s(std::istream& in) {
  std::vector<double> v(read_u32(in));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kWeightFileVersion = 1;

inline void save_model(const PredictorModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write weight file: " + path);
  out.write("APWM", 4);
  detail::write_u32(out, kWeightFileVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(model.stage));
  detail::write_u32(out, static_cast<std::uint32_t>(model.m));
  detail::write_u32(out, static_cast<std::uint32_t>(model.embedding_cfg.ngram_min));
  detail::write_u32(out, static_cast<std::uint32_t>(model.embedding_cfg.ngram_max));
  detail::write_u32(out, static_cast<std::uint32_t>(model.embedding_cfg.bucket_count));
  detail::write_u32(out, static_cast<std::uint32_t>(model.embedding_cfg.dim));
  for (const auto& id : model.parser_ids) {
    detail::write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  detail::write_f64s(out, model.embedding);
  detail::write_f64s(out, model.head_w);
  detail::write_f64s(out, model.head_b);
  detail::write_f64s(out, model.pref_w);
  out.write(reinterpret_cast<const char*>(&model.pref_b), sizeof(double));
  if (!out) throw std::runtime_error("weight file write failed: " + path);
}

inline PredictorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string_view(magic, 4) != "APWM")
    throw std::runtime_error("not a weight file: " + path);
  if (detail::read_u32(in) != kWeightFileVersion)
    throw std::runtime_error("unsupported weight file version: " + path);
  PredictorModel model;
  model.stage = static_cast<int>(detail::read_u32(in));
  model.m = detail::read_u32(in);
  model.embedding_cfg.ngram_min = detail::read_u32(in);
  model.embedding_cfg.ngram_max = detail::read_u32(in);
  model.embedding_cfg.bucket_count = detail::read_u32(in);
  model.embedding_cfg.dim = detail::read_u32(in);
  for (std::size_t j = 0; j < model.m; ++j) {
    std::string id(detail::read_u32(in), '\0');
    in.read(id.data(), static_cast<std::streamsize>(id.size()));
    model.parser_ids.push_back(std::move(id));
  }
  model.embedding = detail::read_f64s(in);
  model.head_w = detail::read_f64s(in);
  model.head_b = detail::read_f64s(in);
  model.pref_w = detail::read_f64s(in);
  in.read(reinterpret_cast<char*>(&model.pref_b), sizeof(double));
  if (!in) throw std::runtime_error("weight file truncated: " + path);
  model.embedding_cfg.validate();
  return model;
}

// --- Routing ------------------------------------------------------------------

enum class RouteStage { cls1_invalid, cls2_accept, cls3_routed };

inline const char* to_string(RouteStage s) {
  switch (s) {
    case RouteStage::cls1_invalid: return "cls1_invalid";
    case RouteStage::cls2_accept: return "cls2_accept";
    case RouteStage::cls3_routed: return "cls3_routed";
  }
  return "?";
}

struct RoutingDecision {
  std::string doc_id;
  std::string chosen_parser;
  std::vector<double> predicted_accuracy;  // empty for the FT variant
  RouteStage stage = RouteStage::cls2_accept;
  // Planner priority: predicted improvement (LLM) or CLS II score (FT);
  // used when a batch cap forces demotions.
  double routing_score = 0.0;
};

// The two parser roles the budgeted cascade arbitrates between.
struct ParserRoles {
  std::string default_parser;
  std::string heavy_parser;
};

// AdaParse(FT): CLS I invalid or CLS II improvement-likely triggers the
// heavy parser outright; no accuracy prediction is made.
inline RoutingDecision route_ft(const corpus::DocumentRecord& doc,
                                const TextStats& first_page_stats,
                                const Cls1Thresholds& cls1,
                                const Cls2Model& cls2,
                                const ParserRoles& roles) {
  RoutingDecision d;
  d.doc_id = doc.doc_id;
  if (!cls1_validity(first_page_stats, cls1)) {
    d.stage = RouteStage::cls1_invalid;
    d.chosen_parser = roles.heavy_parser;
    d.routing_score = 1.0;
  } else if (cls2_improvement(doc.metadata, cls2)) {
    d.stage = RouteStage::cls3_routed;
    d.chosen_parser = roles.heavy_parser;
    d.routing_score = cls2.score(doc.metadata);
  } else {
    d.stage = RouteStage::cls2_accept;
    d.chosen_parser = roles.default_parser;
    d.routing_score = cls2.score(doc.metadata);
  }
  return d;
}

struct BatchItem {
  const corpus::DocumentRecord* doc = nullptr;
  std::string first_page_text;
  std::vector<double> predicted;  // size m when supplied by the caller
};

// AdaParse(LLM) batch routing with precomputed predictions. CLS-I-invalid
// documents are routed to the heavy parser first and consume budget slots;
// the remaining slots go to the largest strictly positive predicted
// improvements. Ties and orderings break by doc_id ascending, so the
// result is independent of input order. Decisions return sorted by doc_id.
inline std::vector<RoutingDecision> route_batch(
    std::vector<BatchItem> items, std::size_t default_index,
    std::size_t heavy_index, double alpha, const Cls1Thresholds& cls1,
    const ParserRoles& roles) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must be in [0,1]");
  if (items.empty()) throw std::invalid_argument("empty routing batch");
  const std::size_t k = items.size();
  std::size_t slots = static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(k) + 1e-9));

  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.doc->doc_id < b.doc->doc_id;
  });

  std::vector<RoutingDecision> decisions(items.size());
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& d = decisions[i];
    d.doc_id = items[i].doc->doc_id;
    d.predicted_accuracy = items[i].predicted;
    for (auto& v : d.predicted_accuracy) v = std::clamp(v, 0.0, 1.0);
    if (!cls1_validity(text_stats(items[i].first_page_text), cls1)) {
      d.stage = RouteStage::cls1_invalid;
      if (slots > 0) {
        d.chosen_parser = roles.heavy_parser;
        --slots;
      } else {
        // Budget exhausted by earlier invalid docs: the hard cap wins.
        d.chosen_parser = roles.default_parser;
      }
    } else {
      valid.push_back(i);
    }
  }

  std::sort(valid.begin(), valid.end(), [&](std::size_t a, std::size_t b) {
    const double ia = decisions[a].predicted_accuracy.empty()
                          ? 0.0
                          : decisions[a].predicted_accuracy[heavy_index] -
                                decisions[a].predicted_accuracy[default_index];
    const double ib = decisions[b].predicted_accuracy.empty()
                          ? 0.0
                          : decisions[b].predicted_accuracy[heavy_index] -
                                decisions[b].predicted_accuracy[default_index];
    if (ia != ib) return ia > ib;
    return decisions[a].doc_id < decisions[b].doc_id;
  });
  for (std::size_t rank = 0; rank < valid.size(); ++rank) {
    auto& d = decisions[valid[rank]];
    const double improvement =
        d.predicted_accuracy.empty()
            ? 0.0
            : d.predicted_accuracy[heavy_index] -
                  d.predicted_accuracy[default_index];
    d.routing_score = improvement;
    if (rank < slots && improvement > 0.0) {
      d.stage = RouteStage::cls3_routed;
      d.chosen_parser = roles.heavy_parser;
    } else {
      d.stage = RouteStage::cls2_accept;
      d.chosen_parser = roles.default_parser;
    }
  }
  return decisions;
}

// AdaParse(LLM) with the trained predictor: invalid docs bypass prediction.
inline std::vector<RoutingDecision> route_llm(
    std::vector<std::pair<const corpus::DocumentRecord*, std::string>> batch,
    const PredictorModel& model, double alpha,
    const Cls1Thresholds& cls1 = {}, ParserRoles roles = {}) {
  if (roles.default_parser.empty()) roles.default_parser = model.parser_ids.front();
  if (roles.heavy_parser.empty()) roles.heavy_parser = model.parser_ids.back();
  const std::size_t di = model.parser_index(roles.default_parser);
  const std::size_t hi = model.parser_index(roles.heavy_parser);
  std::vector<BatchItem> items;
  items.reserve(batch.size());
  for (auto& [doc, text] : batch) {
    BatchItem item;
    item.doc = doc;
    if (cls1_validity(text_stats(text), cls1))
      item.predicted = predict_accuracy(model, text);
    item.first_page_text = std::move(text);
    items.push_back(std::move(item));
  }
  return route_batch(std::move(items), di, hi, alpha, cls1, roles);
}

}  // namespace adaparse::selector
