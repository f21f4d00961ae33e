#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "adaparse/detail.hpp"
#include "adaparse/tokenize.hpp"
#include "adaparse/zip.hpp"

// Document ingestion, groundtruth pairing, and the perturbation generator
// that realizes the classic parser failure modes on synthetic corpora.

namespace adaparse::corpus {

struct DocumentMetadata {
  std::string authoring_tool;
  int year = 2000;
  std::size_t page_count = 0;
  std::string publisher;
  std::string category;
  std::string format_version;
};

struct DocumentRecord {
  std::string doc_id;
  // The embedded text layer, page by page. Perturbation regimes mutate
  // this; groundtruth is never touched.
  std::vector<std::string> pages;
  DocumentMetadata metadata;
  std::optional<std::string> groundtruth;
  std::size_t token_count = 0;  // tokenizer count of groundtruth

  std::string text_layer() const { return join_pages(pages); }
};

// --- Perturbations ----------------------------------------------------------

enum class PerturbMode {
  whitespace_injection,
  word_substitution,
  char_scramble,
  char_substitution,
  identifier_corruption,
  latex_flatten,
  page_drop,
};

inline const char* to_string(PerturbMode m) {
  switch (m) {
    case PerturbMode::whitespace_injection: return "whitespace_injection";
    case PerturbMode::word_substitution: return "word_substitution";
    case PerturbMode::char_scramble: return "char_scramble";
    case PerturbMode::char_substitution: return "char_substitution";
    case PerturbMode::identifier_corruption: return "identifier_corruption";
    case PerturbMode::latex_flatten: return "latex_flatten";
    case PerturbMode::page_drop: return "page_drop";
  }
  return "?";
}

inline PerturbMode perturb_mode_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(PerturbMode::page_drop); ++i) {
    if (s == to_string(static_cast<PerturbMode>(i)))
      return static_cast<PerturbMode>(i);
  }
  throw std::invalid_argument("unknown perturbation mode: " + std::string(s));
}

struct PerturbationSpec {
  PerturbMode mode = PerturbMode::word_substitution;
  double rate = 0.0;  // fraction of units corrupted, [0,1]
  std::uint64_t seed = 0;
};

namespace detail {

struct WordSpan {
  std::size_t start;
  std::size_t len;
};

inline std::vector<WordSpan> word_spans(std::string_view text) {
  std::vector<WordSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           static_cast<unsigned char>(text[i]) < 0x80 &&
           std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t start = i;
    while (i < text.size() &&
           !(static_cast<unsigned char>(text[i]) < 0x80 &&
             std::isspace(static_cast<unsigned char>(text[i]))))
      ++i;
    if (i > start) spans.push_back({start, i - start});
  }
  return spans;
}

inline std::size_t unit_count(double rate, std::size_t units) {
  if (rate <= 0.0 || units == 0) return 0;
  const double k = std::ceil(std::min(rate, 1.0) * static_cast<double>(units));
  return std::min(units, static_cast<std::size_t>(k));
}

// Small fixed lexicon for word substitution; picked to never collide with
// the synth generator's science terms so substitutions are visible.
inline const std::array<std::string_view, 24>& substitution_lexicon() {
  static const std::array<std::string_view, 24> words = {
      "apple",  "borrow", "candle", "dorsal", "ember",  "fathom",
      "gimbal", "hollow", "indigo", "jumble", "kettle", "lantern",
      "marble", "nimbus", "orchid", "pebble", "quiver", "russet",
      "saddle", "timber", "umber",  "velvet", "walnut", "yonder"};
  return words;
}

inline bool is_ascii_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Glyph garbage an OCR-grade scrambler produces; includes U+FFFD so
// downstream validity checks can see the damage.
inline const std::array<std::string_view, 8>& garbage_glyphs() {
  static const std::array<std::string_view, 8> g = {
      "\xEF\xBF\xBD", "#", "~", "^", "|", "@", "%", "\xEF\xBF\xBD"};
  return g;
}

// Identifier heuristic: token carries a digit or unbalanced brackets.
// LaTeX atoms carry digits too but are their own failure axis, so anything
// with a backslash is excluded here.
inline bool looks_like_identifier(std::string_view tok) {
  int round = 0, square = 0;
  bool digit = false;
  for (char c : tok) {
    if (c == '\\') return false;
    if (c >= '0' && c <= '9') digit = true;
    if (c == '(') ++round;
    if (c == ')') --round;
    if (c == '[') ++square;
    if (c == ']') --square;
  }
  return digit || round != 0 || square != 0;
}

inline std::string perturb_single_page(const std::string& text,
                                       const PerturbationSpec& spec,
                                       Rng& rng);

inline std::uint64_t page_seed(std::uint64_t seed, std::size_t page_index) {
  return page_index == 0 ? mix64(seed) : mix64(seed ^ mix64(page_index + 1));
}

// Which pages a page_drop at this rate removes; depends only on the page
// count and seed, so a probe can answer "was page 0 dropped" cheaply.
inline std::vector<std::size_t> pages_to_drop(std::size_t page_count,
                                              const PerturbationSpec& spec) {
  Rng rng(mix64(spec.seed));
  const std::size_t k = unit_count(spec.rate, page_count);
  if (k == 0) return {};
  return rng.sample_indices(page_count, k);
}

}  // namespace detail

// Single page under the page-indexed seed stream (page 0 of a one-page
// document matches perturb() on that text).
inline std::string perturb_page(const std::string& page,
                                const PerturbationSpec& spec,
                                std::size_t page_index) {
  if (spec.rate <= 0.0 || spec.mode == PerturbMode::page_drop) return page;
  Rng rng(detail::page_seed(spec.seed, page_index));
  return detail::perturb_single_page(page, spec, rng);
}

// Page-level form used by parser error models: page_drop removes whole
// pages, the other modes corrupt each page under its own seed stream so a
// first-page probe and a full parse agree byte for byte.
inline std::vector<std::string> perturb_pages(
    const std::vector<std::string>& pages, const PerturbationSpec& spec) {
  if (spec.rate <= 0.0) return pages;
  if (spec.mode == PerturbMode::page_drop) {
    auto drop = detail::pages_to_drop(pages.size(), spec);
    std::vector<std::string> kept;
    std::size_t d = 0;
    for (std::size_t i = 0; i < pages.size(); ++i) {
      if (d < drop.size() && drop[d] == i) {
        ++d;
        continue;
      }
      kept.push_back(pages[i]);
    }
    return kept;
  }
  std::vector<std::string> out;
  out.reserve(pages.size());
  for (std::size_t i = 0; i < pages.size(); ++i)
    out.push_back(perturb_page(pages[i], spec, i));
  return out;
}

// Applies one failure mode to a text. Deterministic in (text, spec). Unit
// scope per mode: whitespace slots for injection, words for substitution
// and scrambling, characters for char modes, LaTeX atoms for flattening,
// '\f'-separated pages for page_drop. Multi-page text is perturbed page by
// page (page_drop aside) with a per-page seed stream.
inline std::string perturb(const std::string& text,
                           const PerturbationSpec& spec) {
  if (spec.rate <= 0.0) return text;
  return join_pages(perturb_pages(split_pages(text), spec));
}

namespace detail {

inline std::string perturb_single_page(const std::string& text,
                                       const PerturbationSpec& spec,
                                       Rng& rng) {
  std::string out;
  switch (spec.mode) {
    case PerturbMode::whitespace_injection: {
      // Slots are positions strictly inside words.
      const auto spans = word_spans(text);
      std::vector<std::size_t> slots;
      for (const auto& w : spans)
        for (std::size_t p = 1; p < w.len; ++p) slots.push_back(w.start + p);
      const std::size_t k = unit_count(spec.rate, slots.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(slots.size(), k);
      std::vector<std::size_t> positions;
      for (auto c : chosen) positions.push_back(slots[c]);
      std::sort(positions.begin(), positions.end());
      out.reserve(text.size() + k);
      std::size_t pi = 0;
      for (std::size_t i = 0; i < text.size(); ++i) {
        while (pi < positions.size() && positions[pi] == i) {
          out.push_back(' ');
          ++pi;
        }
        out.push_back(text[i]);
      }
      return out;
    }
    case PerturbMode::word_substitution: {
      const auto spans = word_spans(text);
      const std::size_t k = unit_count(spec.rate, spans.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(spans.size(), k);
      out.reserve(text.size());
      std::size_t ci = 0, pos = 0;
      for (std::size_t w = 0; w < spans.size(); ++w) {
        out.append(text, pos, spans[w].start - pos);
        std::string_view orig(text.data() + spans[w].start, spans[w].len);
        if (ci < chosen.size() && chosen[ci] == w) {
          ++ci;
          const auto& lex = substitution_lexicon();
          std::size_t pick = rng.bounded(lex.size());
          if (lex[pick] == orig) pick = (pick + 1) % lex.size();
          out += lex[pick];
        } else {
          out += orig;
        }
        pos = spans[w].start + spans[w].len;
      }
      out.append(text, pos, text.size() - pos);
      return out;
    }
    case PerturbMode::char_scramble: {
      // OCR-grade scrambling: selected words get their characters shuffled
      // and roughly half replaced by garbage glyphs.
      const auto spans = word_spans(text);
      const std::size_t k = unit_count(spec.rate, spans.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(spans.size(), k);
      out.reserve(text.size() + k * 2);
      std::size_t ci = 0, pos = 0;
      for (std::size_t w = 0; w < spans.size(); ++w) {
        out.append(text, pos, spans[w].start - pos);
        std::string word = text.substr(spans[w].start, spans[w].len);
        if (ci < chosen.size() && chosen[ci] == w) {
          ++ci;
          std::vector<char> chars(word.begin(), word.end());
          rng.shuffle(chars);
          std::string scrambled;
          for (char c : chars) {
            if (rng.chance(0.5)) {
              scrambled += garbage_glyphs()[rng.bounded(garbage_glyphs().size())];
            } else {
              scrambled.push_back(c);
            }
          }
          if (scrambled == word) scrambled += garbage_glyphs()[0];
          out += scrambled;
        } else {
          out += word;
        }
        pos = spans[w].start + spans[w].len;
      }
      out.append(text, pos, text.size() - pos);
      return out;
    }
    case PerturbMode::char_substitution: {
      // Units are ASCII bytes (multi-byte sequences are left intact).
      std::vector<std::size_t> units;
      for (std::size_t i = 0; i < text.size(); ++i)
        if (static_cast<unsigned char>(text[i]) < 0x80) units.push_back(i);
      const std::size_t k = unit_count(spec.rate, units.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(units.size(), k);
      out = text;
      for (auto c : chosen) {
        const std::size_t i = units[c];
        const char ch = out[i];
        if (is_ascii_alpha(ch)) {
          out[i] = static_cast<char>(ch ^ 0x20);  // case flip
        } else if (ch >= '0' && ch <= '9') {
          char d = static_cast<char>('0' + rng.bounded(10));
          if (d == ch) d = static_cast<char>('0' + (ch - '0' + 1) % 10);
          out[i] = d;
        } else {
          out[i] = static_cast<char>('a' + rng.bounded(26));
        }
      }
      return out;
    }
    case PerturbMode::identifier_corruption: {
      const auto spans = word_spans(text);
      std::vector<std::size_t> ids;
      for (std::size_t w = 0; w < spans.size(); ++w) {
        if (looks_like_identifier(
                std::string_view(text.data() + spans[w].start, spans[w].len)))
          ids.push_back(w);
      }
      const std::size_t k = unit_count(spec.rate, ids.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(ids.size(), k);
      std::unordered_set<std::size_t> selected;
      for (auto c : chosen) selected.insert(ids[c]);
      out.reserve(text.size());
      std::size_t pos = 0;
      for (std::size_t w = 0; w < spans.size(); ++w) {
        out.append(text, pos, spans[w].start - pos);
        std::string word = text.substr(spans[w].start, spans[w].len);
        if (selected.count(w)) {
          // One subtle single-character edit.
          const std::size_t p = rng.bounded(word.size());
          char r = "0123456789abcdefghijklmnopqrstuvwxyz"[rng.bounded(36)];
          if (r == word[p]) r = r == '9' ? '0' : static_cast<char>(r + 1);
          word[p] = r;
        }
        out += word;
        pos = spans[w].start + spans[w].len;
      }
      out.append(text, pos, text.size() - pos);
      return out;
    }
    case PerturbMode::latex_flatten: {
      // Atoms: backslash commands and brace characters. Selected atoms are
      // deleted, which is what a plaintext conversion leaves behind.
      struct Atom {
        std::size_t start, len;
      };
      std::vector<Atom> atoms;
      for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\\') {
          std::size_t j = i + 1;
          while (j < text.size() && is_ascii_alpha(text[j])) ++j;
          atoms.push_back({i, std::max<std::size_t>(1, j - i)});
          i = j - 1;
        } else if (text[i] == '{' || text[i] == '}') {
          atoms.push_back({i, 1});
        }
      }
      const std::size_t k = unit_count(spec.rate, atoms.size());
      if (k == 0) return text;
      auto chosen = rng.sample_indices(atoms.size(), k);
      std::vector<bool> cut(text.size(), false);
      for (auto c : chosen)
        for (std::size_t p = 0; p < atoms[c].len; ++p)
          cut[atoms[c].start + p] = true;
      out.reserve(text.size());
      for (std::size_t i = 0; i < text.size(); ++i)
        if (!cut[i]) out.push_back(text[i]);
      return out;
    }
    case PerturbMode::page_drop:
      return text;  // handled at document scope
  }
  return text;
}

}  // namespace detail

// --- Synthetic corpora ------------------------------------------------------

// Desk-scale stand-in for a real benchmark corpus: page texts with a
// controllable share of LaTeX atoms and chemistry-style identifiers, plus
// metadata whose distribution correlates with parsing difficulty (old years
// and legacy tools skew hard) so metadata classifiers have signal to find.
struct SynthProfile {
  std::size_t pages_min = 1;
  std::size_t pages_max = 4;
  std::size_t words_per_page_min = 60;
  std::size_t words_per_page_max = 140;
  double latex_density = 0.04;       // share of tokens that are LaTeX atoms
  double identifier_density = 0.02;  // share of tokens that are identifiers
  double hard_fraction = 0.15;       // docs with ~6x LaTeX and old metadata
  int year_min = 1975;
  int year_max = 2024;
};

namespace detail {

inline const std::array<std::string_view, 96>& synth_lexicon() {
  static const std::array<std::string_view, 96> words = {
      "the",        "of",         "and",        "to",         "in",
      "is",         "that",       "for",        "with",       "as",
      "are",        "on",         "by",         "be",         "this",
      "we",         "an",         "which",      "from",       "at",
      "results",    "model",      "data",       "between",    "measured",
      "observed",   "sample",     "method",     "analysis",   "figure",
      "table",      "shown",      "values",     "rate",       "energy",
      "surface",    "field",      "phase",      "density",    "function",
      "temperature","pressure",   "velocity",   "particle",   "spectrum",
      "signal",     "noise",      "error",      "estimate",   "parameter",
      "approach",   "evidence",   "structure",  "protein",    "cell",
      "tissue",     "spectral",   "molecular",  "quantum",    "thermal",
      "linear",     "gradient",   "matrix",     "vector",     "domain",
      "region",     "boundary",   "condition",  "solution",   "equation",
      "derivative", "integral",   "distribution","probability","variance",
      "experiment", "measurement","calibration","instrument", "detector",
      "synthesis",  "reaction",   "catalyst",   "compound",   "crystal",
      "lattice",    "membrane",   "genome",     "sequence",   "cluster",
      "network",    "algorithm",  "simulation", "numerical",  "empirical",
      "theoretical"};
  return words;
}

inline const std::array<std::string_view, 12>& synth_latex_atoms() {
  static const std::array<std::string_view, 12> atoms = {
      "\\alpha",          "\\beta",        "\\gamma",
      "\\frac{x}{y}",     "\\sum_{i=1}^{n}", "\\mathbb{R}",
      "\\partial_{t}",    "\\nabla",       "\\epsilon",
      "\\int_{0}^{T}",    "\\hat{\\theta}", "\\sigma^{2}"};
  return atoms;
}

inline std::string synth_identifier(Rng& rng) {
  // A small dense vocabulary: identifiers must recur often enough for a
  // text model to associate them with parser behavior.
  static const std::array<std::string_view, 8> stems = {
      "C6H12O6", "H2SO4", "NaCl2", "CH3COOH", "Eq(4)", "x[12]", "T1w", "p53"};
  return std::string(stems[rng.bounded(stems.size())]);
}

inline const std::array<std::string_view, 5>& synth_tools_modern() {
  static const std::array<std::string_view, 5> t = {
      "textpress-3", "articlekit", "sciformat", "typeset-pro", "docforge"};
  return t;
}
inline const std::array<std::string_view, 3>& synth_tools_legacy() {
  static const std::array<std::string_view, 3> t = {"legacy-ocr", "scanmaster",
                                                    "wordperfect5"};
  return t;
}
inline const std::array<std::string_view, 6>& synth_publishers() {
  static const std::array<std::string_view, 6> p = {
      "aurora-press", "meridian", "helix-journals",
      "northgate",    "paragon",  "quanta-pub"};
  return p;
}
inline const std::array<std::string_view, 8>& synth_categories() {
  static const std::array<std::string_view, 8> c = {
      "mathematics", "biology",  "chemistry", "physics",
      "engineering", "medicine", "economics", "computer-science"};
  return c;
}

}  // namespace detail

// Per-document generation knobs resolved from the profile; exposed so
// error models can recompute a document's nominal difficulty. Identifier
// density varies independently of hardness, so "heavy on formulas" and
// "heavy on identifiers" are different axes of difficulty.
struct SynthDocTraits {
  bool hard = false;
  double latex_density = 0.0;
  double identifier_density = 0.0;
};

inline SynthDocTraits synth_traits(const SynthProfile& profile,
                                   std::uint64_t seed, std::size_t index) {
  Rng rng(mix64(seed ^ mix64(index * 2 + 1)));
  SynthDocTraits t;
  t.hard = rng.uniform() < profile.hard_fraction;
  t.latex_density =
      std::min(0.5, profile.latex_density * (t.hard ? 6.0 : 1.0));
  t.identifier_density = rng.uniform() * 3.0 * profile.identifier_density;
  return t;
}

inline std::vector<DocumentRecord> synth_corpus(std::size_t n,
                                                const SynthProfile& profile,
                                                std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("synth_corpus: n must be >= 1");
  std::vector<DocumentRecord> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix64(seed ^ mix64(i * 2)));
    const SynthDocTraits traits = synth_traits(profile, seed, i);
    DocumentRecord d;
    char idbuf[40];
    std::snprintf(idbuf, sizeof(idbuf), "doc-%06zu-%08llx", i,
                  static_cast<unsigned long long>(mix64(seed + i) & 0xffffffffull));
    d.doc_id = idbuf;

    // Hard documents skew longer, still within the profile bounds.
    const std::size_t span = profile.pages_max - profile.pages_min + 1;
    std::size_t draw = rng.bounded(span);
    if (traits.hard) draw = std::max(draw, rng.bounded(span));
    const std::size_t pages = profile.pages_min + draw;
    for (std::size_t p = 0; p < pages; ++p) {
      const std::size_t words =
          profile.words_per_page_min +
          rng.bounded(profile.words_per_page_max - profile.words_per_page_min +
                      1);
      std::string page;
      std::size_t sentence_len = 0;
      for (std::size_t w = 0; w < words; ++w) {
        if (!page.empty()) page.push_back(' ');
        const double roll = rng.uniform();
        if (roll < traits.latex_density) {
          page += detail::synth_latex_atoms()[rng.bounded(
              detail::synth_latex_atoms().size())];
        } else if (roll < traits.latex_density + traits.identifier_density) {
          page += detail::synth_identifier(rng);
        } else {
          page += detail::synth_lexicon()[rng.bounded(
              detail::synth_lexicon().size())];
        }
        if (++sentence_len >= 8 + rng.bounded(8)) {
          page.push_back('.');
          sentence_len = 0;
        }
      }
      d.pages.push_back(std::move(page));
    }

    auto& meta = d.metadata;
    if (traits.hard) {
      meta.authoring_tool = detail::synth_tools_legacy()[rng.bounded(
          detail::synth_tools_legacy().size())];
      meta.year = profile.year_min +
                  static_cast<int>(rng.bounded(
                      std::max(1, std::min(profile.year_max, 1999) -
                                      profile.year_min + 1)));
    } else {
      meta.authoring_tool = detail::synth_tools_modern()[rng.bounded(
          detail::synth_tools_modern().size())];
      const int lo = std::max(profile.year_min, 2000);
      meta.year =
          lo + static_cast<int>(rng.bounded(
                   std::max(1, profile.year_max - lo + 1)));
    }
    meta.page_count = d.pages.size();
    meta.publisher = detail::synth_publishers()[rng.bounded(
        detail::synth_publishers().size())];
    meta.category = detail::synth_categories()[rng.bounded(
        detail::synth_categories().size())];
    meta.format_version = traits.hard ? "1.2" : (rng.chance(0.5) ? "1.7" : "2.0");

    d.groundtruth = join_pages(d.pages);
    d.token_count = token_count(*d.groundtruth);
    docs.push_back(std::move(d));
  }
  return docs;
}

// --- JSON record format and staging ----------------------------------------

inline nlohmann::json to_json(const DocumentRecord& d) {
  nlohmann::json meta = {
      {"authoring_tool", d.metadata.authoring_tool},
      {"year", d.metadata.year},
      {"page_count", d.metadata.page_count},
      {"publisher", d.metadata.publisher},
      {"category", d.metadata.category},
      {"format_version", d.metadata.format_version},
  };
  nlohmann::json j = {{"pages", d.pages}, {"metadata", meta}};
  if (d.groundtruth)
    j["groundtruth"] = *d.groundtruth;
  else
    j["groundtruth"] = nullptr;
  return j;
}

// Parses one archive member. Structural damage (bad JSON, missing/empty
// pages) is an error for the caller to log; metadata problems are repaired
// in place since they do not affect parseability.
inline DocumentRecord record_from_json(const std::string& doc_id,
                                       const nlohmann::json& j) {
  DocumentRecord d;
  d.doc_id = doc_id;
  if (!j.is_object() || !j.contains("pages") || !j["pages"].is_array() ||
      j["pages"].empty())
    throw std::invalid_argument("record has no pages");
  for (const auto& p : j["pages"]) {
    if (!p.is_string()) throw std::invalid_argument("non-string page");
    d.pages.push_back(p.get<std::string>());
  }
  if (j.contains("metadata") && j["metadata"].is_object()) {
    const auto& m = j["metadata"];
    d.metadata.authoring_tool = m.value("authoring_tool", std::string("unknown"));
    d.metadata.year = m.value("year", 2000);
    d.metadata.publisher = m.value("publisher", std::string("unknown"));
    d.metadata.category = m.value("category", std::string("unknown"));
    d.metadata.format_version = m.value("format_version", std::string("1.0"));
  } else {
    d.metadata.authoring_tool = "unknown";
    d.metadata.publisher = "unknown";
    d.metadata.category = "unknown";
    d.metadata.format_version = "1.0";
  }
  d.metadata.year = std::clamp(d.metadata.year, 1900, 2100);
  d.metadata.page_count = d.pages.size();
  if (j.contains("groundtruth") && j["groundtruth"].is_string()) {
    d.groundtruth = j["groundtruth"].get<std::string>();
    d.token_count = token_count(*d.groundtruth);
  }
  return d;
}

// Immutable after staging; shareable across threads.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<DocumentRecord> docs, std::string local_dir = "")
      : docs_(std::move(docs)), local_dir_(std::move(local_dir)) {
    std::sort(docs_.begin(), docs_.end(),
              [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    for (std::size_t i = 0; i < docs_.size(); ++i) index_[docs_[i].doc_id] = i;
  }

  std::size_t size() const { return docs_.size(); }
  const std::vector<DocumentRecord>& docs() const { return docs_; }
  const std::string& local_dir() const { return local_dir_; }

  const DocumentRecord* find(std::string_view doc_id) const {
    auto it = index_.find(std::string(doc_id));
    return it == index_.end() ? nullptr : &docs_[it->second];
  }

  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

 private:
  std::vector<DocumentRecord> docs_;
  std::string local_dir_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct StageEntry {
  std::string subject;  // doc_id or archive path
  std::string status;   // staged | skipped | error
  std::string reason;
};

struct StageResult {
  Corpus corpus;
  std::vector<StageEntry> log;
  std::size_t staged = 0;
  std::size_t skipped = 0;
};

inline constexpr std::string_view kStagingLogName = "_staging_log.jsonl";

// Decompresses archives into local_dir, one <doc_id>.json per document.
// Damaged members and unreadable archives are logged and skipped; only a
// complete lack of readable documents is fatal.
inline StageResult stage_archives(const std::vector<std::string>& archive_paths,
                                  const std::string& local_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(local_dir);
  StageResult result;
  std::vector<DocumentRecord> docs;
  std::unordered_set<std::string> seen;

  auto log = [&result](std::string subject, std::string status,
                       std::string reason) {
    result.log.push_back({std::move(subject), std::move(status), std::move(reason)});
  };

  for (const auto& path : archive_paths) {
    std::unique_ptr<ziparc::ZipReader> reader;
    try {
      reader = std::make_unique<ziparc::ZipReader>(path);
    } catch (const std::exception& e) {
      log(path, "error", e.what());
      continue;
    }
    for (const auto& entry : reader->entries()) {
      std::string doc_id = fs::path(entry.name).stem().string();
      try {
        if (fs::path(entry.name).extension() != ".json")
          throw std::invalid_argument("not a document member");
        const std::string raw = reader->extract(entry);
        const auto j = nlohmann::json::parse(raw);
        DocumentRecord d = record_from_json(doc_id, j);
        if (!seen.insert(doc_id).second) {
          log(doc_id, "skipped", "duplicate doc_id");
          ++result.skipped;
          continue;
        }
        std::ofstream out(fs::path(local_dir) / (doc_id + ".json"),
                          std::ios::binary | std::ios::trunc);
        out << to_json(d).dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed");
        docs.push_back(std::move(d));
        log(doc_id, "staged", "");
        ++result.staged;
      } catch (const std::exception& e) {
        log(doc_id.empty() ? entry.name : doc_id, "skipped", e.what());
        ++result.skipped;
        log_note("stage: skipped " + entry.name + " (" + e.what() + ")");
      }
    }
  }

  // Staging log, one JSON object per line.
  {
    std::ofstream out(fs::path(local_dir) / std::string(kStagingLogName),
                      std::ios::binary | std::ios::trunc);
    for (const auto& e : result.log) {
      nlohmann::json j = {{e.status == "error" ? "archive" : "doc_id", e.subject},
                          {"status", e.status},
                          {"reason", e.reason}};
      out << j.dump() << '\n';
    }
  }

  if (docs.empty())
    throw std::runtime_error("stage_archives: no readable documents in " +
                             std::to_string(archive_paths.size()) + " archive(s)");
  result.corpus = Corpus(std::move(docs), local_dir);
  return result;
}

// Re-opens a directory previously produced by stage_archives.
inline Corpus load_staged(const std::string& local_dir) {
  namespace fs = std::filesystem;
  std::vector<DocumentRecord> docs;
  for (const auto& ent : fs::directory_iterator(local_dir)) {
    if (!ent.is_regular_file() || ent.path().extension() != ".json") continue;
    std::ifstream in(ent.path(), std::ios::binary);
    try {
      const auto j = nlohmann::json::parse(in);
      docs.push_back(record_from_json(ent.path().stem().string(), j));
    } catch (const std::exception& e) {
      log_note("load_staged: skipped " + ent.path().string() + " (" + e.what() +
               ")");
    }
  }
  if (docs.empty())
    throw std::runtime_error("load_staged: no documents in " + local_dir);
  return Corpus(std::move(docs), local_dir);
}

// Packs records into a ZIP archive in the member format stage_archives
// reads. Used by tests and the synth subcommand.
inline void write_archive(const std::string& path,
                          const std::vector<DocumentRecord>& docs,
                          bool compress = true) {
  ziparc::ZipWriter w(path);
  for (const auto& d : docs) w.add(d.doc_id + ".json", to_json(d).dump(2), compress);
  w.finish();
}

}  // namespace adaparse::corpus
