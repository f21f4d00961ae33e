#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adaparse/detail.hpp"
#include "adaparse/tokenize.hpp"

// Text-quality measures used for evaluation, training targets and the
// acceptance gates. Everything in here is a pure function of its inputs.

namespace adaparse::metrics {

struct MetricConfig {
  enum class BleuSmoothing { none, add_one };
  enum class RougeVariant { rouge1_f, rougeL_f };

  int bleu_max_ngram = 4;
  BleuSmoothing bleu_smoothing = BleuSmoothing::add_one;
  RougeVariant rouge_variant = RougeVariant::rouge1_f;
  // Band half-width for the approximate edit distance on long texts.
  int car_band_width = 1024;
  double at_threshold = 0.5;

  void validate() const {
    if (bleu_max_ngram < 1 || bleu_max_ngram > 8)
      throw std::invalid_argument("bleu_max_ngram must be in [1,8]");
    if (car_band_width < 1)
      throw std::invalid_argument("car_band_width must be >= 1");
    if (!(at_threshold >= 0.0 && at_threshold <= 1.0))
      throw std::invalid_argument("at_threshold must be in [0,1]");
  }
};

struct QualityScores {
  double coverage = 0.0;
  double bleu = 0.0;
  double rouge = 0.0;
  double car = 0.0;
  bool accepted = false;  // bleu >= at_threshold
};

// One pairwise human judgment. "NEITHER" in the winner slot marks
// indifference; such records never enter win/loss counts.
inline constexpr std::string_view kNeither = "NEITHER";

struct PreferenceRecord {
  std::string page_id;
  std::string winner_parser;
  std::string loser_parser;
  std::string annotator_id;

  bool indifferent() const {
    return winner_parser == kNeither || loser_parser == kNeither;
  }
};

// --- Edit distance ---------------------------------------------------------

// Exact Levenshtein distance, unit costs, two-row DP.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);  // b is the shorter
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Banded Levenshtein: only cells within +-half_width of the main diagonal
// are explored, so the result is an upper bound on the true distance and
// equals it whenever the true distance fits inside the band.
inline std::size_t levenshtein_banded(std::string_view a, std::string_view b,
                                      std::size_t half_width) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  // The band must at least cover the length difference or no path exists.
  const std::size_t w = half_width + (a.size() - b.size());
  const std::size_t inf = std::numeric_limits<std::size_t>::max() / 2;
  std::vector<std::size_t> row(b.size() + 1, inf), prev(b.size() + 1, inf);
  for (std::size_t j = 0; j <= std::min(b.size(), w); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    const std::size_t lo = i > w ? i - w : 0;
    const std::size_t hi = std::min(b.size(), i + w);
    std::fill(row.begin(), row.end(), inf);
    if (lo == 0) row[0] = i;
    for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
      row[j] = std::min({prev[j] + 1, row[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(row, prev);
  }
  return prev[b.size()];
}

// --- Character accuracy rate -----------------------------------------------

struct CarResult {
  double value = 0.0;
  bool approximate = false;  // banded distance used; value is a lower bound
};

inline CarResult car_ex(std::string_view candidate, std::string_view reference,
                        const MetricConfig& cfg = {}) {
  const std::size_t longest = std::max(candidate.size(), reference.size());
  if (longest == 0) return {1.0, false};  // both empty: identical by convention
  CarResult r;
  std::size_t dist;
  const std::size_t band = static_cast<std::size_t>(cfg.car_band_width);
  if (longest > 4 * band) {
    dist = levenshtein_banded(candidate, reference, band);
    r.approximate = true;
    log_note("car: banded edit distance on " + std::to_string(longest) +
             " chars, result is a lower bound");
  } else {
    dist = levenshtein(candidate, reference);
  }
  r.value = std::max(0.0, 1.0 - static_cast<double>(dist) /
                              static_cast<double>(longest));
  return r;
}

inline double car(std::string_view candidate, std::string_view reference,
                  const MetricConfig& cfg = {}) {
  return car_ex(candidate, reference, cfg).value;
}

// --- BLEU / ROUGE ----------------------------------------------------------

namespace detail {

// N-grams keyed as tokens joined with 0x1f (never produced by the tokenizer).
inline std::unordered_map<std::string, std::size_t> ngram_counts(
    const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (toks.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

inline std::size_t clipped_matches(
    const std::unordered_map<std::string, std::size_t>& cand,
    const std::unordered_map<std::string, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace detail

// Corpus BLEU on a single candidate/reference pair: geometric mean of
// modified n-gram precisions with exponential brevity penalty. Smoothing
// add_one adds 1 to numerator and denominator for orders n >= 2 (unigram
// precision stays raw so disjoint texts still score 0). Orders longer than
// the candidate contribute precision 1.
inline double bleu(std::string_view candidate, std::string_view reference,
                   const MetricConfig& cfg = {}) {
  const auto cand = tokenize(candidate);
  if (cand.empty()) return 0.0;
  const auto ref = tokenize(reference);
  const int max_n = cfg.bleu_max_ngram;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cn = detail::ngram_counts(cand, n);
    std::size_t total = 0;
    for (const auto& [g, c] : cn) total += c;
    if (total == 0) continue;  // p_n = 1, log contribution 0
    const std::size_t matched =
        detail::clipped_matches(cn, detail::ngram_counts(ref, n));
    double p;
    if (n == 1 || cfg.bleu_smoothing == MetricConfig::BleuSmoothing::none) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(p);
  }
  double score = std::exp(log_sum / max_n);
  if (cand.size() < ref.size()) {
    score *= std::exp(1.0 - static_cast<double>(ref.size()) /
                            static_cast<double>(cand.size()));
  }
  return std::min(1.0, score);
}

// ROUGE F1: clipped unigram overlap (rouge1_f, default) or token-level
// longest common subsequence (rougeL_f).
inline double rouge(std::string_view candidate, std::string_view reference,
                    const MetricConfig& cfg = {}) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  std::size_t matched = 0;
  if (cfg.rouge_variant == MetricConfig::RougeVariant::rouge1_f) {
    matched = detail::clipped_matches(detail::ngram_counts(cand, 1),
                                      detail::ngram_counts(ref, 1));
  } else {
    // LCS over tokens, two-row DP.
    std::vector<std::size_t> row(ref.size() + 1, 0), prev(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
      for (std::size_t j = 1; j <= ref.size(); ++j) {
        row[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                           : std::max(prev[j], row[j - 1]);
      }
      std::swap(row, prev);
    }
    matched = prev[ref.size()];
  }
  if (matched == 0) return 0.0;
  const double p = static_cast<double>(matched) / cand.size();
  const double r = static_cast<double>(matched) / ref.size();
  return 2.0 * p * r / (p + r);
}

// --- Document-level measures -----------------------------------------------

// Fraction of pages that carry any non-whitespace text.
inline double coverage(const std::vector<std::string>& parsed_pages,
                       std::size_t total_pages) {
  if (total_pages == 0)
    throw std::invalid_argument("coverage: document has zero pages");
  std::size_t nonblank = 0;
  for (const auto& p : parsed_pages) {
    if (!is_blank(p)) ++nonblank;
  }
  return std::min(1.0, static_cast<double>(nonblank) /
                           static_cast<double>(total_pages));
}

// Token-weighted share of documents whose BLEU clears tau.
inline double accepted_tokens(
    const std::vector<std::pair<std::size_t, double>>& per_doc, double tau) {
  if (per_doc.empty())
    throw std::invalid_argument("accepted_tokens: no documents");
  double num = 0.0, den = 0.0;
  for (const auto& [tokens, b] : per_doc) {
    den += static_cast<double>(tokens);
    if (b >= tau) num += static_cast<double>(tokens);
  }
  return den > 0.0 ? num / den : 0.0;
}

// wins / (wins + losses); indifference records are excluded entirely.
inline double win_rate(const std::vector<PreferenceRecord>& records,
                       std::string_view parser) {
  std::size_t wins = 0, losses = 0;
  for (const auto& r : records) {
    if (r.indifferent()) continue;
    if (r.winner_parser == parser) ++wins;
    if (r.loser_parser == parser) ++losses;
  }
  if (wins + losses == 0)
    throw std::invalid_argument("win_rate: parser '" + std::string(parser) +
                                "' was never compared");
  return static_cast<double>(wins) / static_cast<double>(wins + losses);
}

// Among (page, unordered parser pair) groups judged by several annotators,
// the fraction where every annotator chose the same option.
inline double consensus_rate(const std::vector<PreferenceRecord>& records) {
  struct Group {
    std::size_t n = 0;
    bool unanimous = true;
    std::string first_choice;
  };
  std::unordered_map<std::string, Group> groups;
  for (const auto& r : records) {
    std::string lo = r.winner_parser, hi = r.loser_parser;
    if (hi < lo) std::swap(lo, hi);
    std::string key = r.page_id + '\x1f' + lo + '\x1f' + hi;
    auto& g = groups[key];
    if (g.n == 0) {
      g.first_choice = r.winner_parser;
    } else if (r.winner_parser != g.first_choice) {
      g.unanimous = false;
    }
    ++g.n;
  }
  std::size_t multi = 0, agree = 0;
  for (const auto& [key, g] : groups) {
    if (g.n < 2) continue;
    ++multi;
    if (g.unanimous) ++agree;
  }
  if (multi == 0)
    throw std::invalid_argument("consensus_rate: no multi-annotator groups");
  return static_cast<double>(agree) / static_cast<double>(multi);
}

// Full score vector for one parse against groundtruth.
inline QualityScores score_parse(std::string_view parsed_text,
                                 std::string_view groundtruth,
                                 std::size_t total_pages,
                                 const MetricConfig& cfg = {}) {
  QualityScores q;
  q.coverage = coverage(split_pages(parsed_text), total_pages);
  q.bleu = bleu(parsed_text, groundtruth, cfg);
  q.rouge = rouge(parsed_text, groundtruth, cfg);
  q.car = car(parsed_text, groundtruth, cfg);
  q.accepted = q.bleu >= cfg.at_threshold;
  return q;
}

}  // namespace adaparse::metrics
