#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/metrics.hpp"
#include "adaparse/parsers.hpp"
#include "adaparse/scheduler.hpp"

// Experiment harness: the three evaluation regimes (clean corpus, degraded
// subsets) as strategy-comparison tables, plus the difficulty-ranking
// analysis over a parser set.

namespace adaparse::harness {

struct ExperimentSpec {
  std::uint64_t corpus_seed = 0;
  std::size_t corpus_size = 400;
  corpus::SynthProfile profile;
  // Each entry perturbs the text layer of a random subset of documents.
  std::vector<std::pair<corpus::PerturbationSpec, double>> perturbation_plan;
  std::vector<std::string> strategies;
  double alpha = 0.05;
  std::size_t batch_size = 64;
  std::size_t workers = 2;
  selector::ParserRoles roles{"fastext", "visionparse"};
  // Predictions for adaparse_llm: the true-BLEU oracle by default, or a
  // trained model when set.
  const selector::PredictorModel* model = nullptr;
  metrics::MetricConfig metric;

  void validate() const {
    for (const auto& [spec, fraction] : perturbation_plan)
      if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("subset fractions must be in [0,1]");
  }
};

struct RegimeRow {
  std::string strategy;
  double coverage = 0.0;
  double bleu = 0.0;
  double rouge = 0.0;
  double car = 0.0;
  double accepted_tokens = 0.0;
  double heavy_fraction = 0.0;
};

struct RegimeTable {
  std::vector<RegimeRow> rows;

  const RegimeRow& row(std::string_view strategy) const {
    for (const auto& r : rows)
      if (r.strategy == strategy) return r;
    throw std::invalid_argument("no such strategy row: " +
                                std::string(strategy));
  }
};

// Applies the perturbation plan to the corpus text layers. Subsets are
// uniform random under the spec seed; groundtruth stays untouched.
inline corpus::Corpus build_regime_corpus(const ExperimentSpec& spec) {
  auto docs = corpus::synth_corpus(spec.corpus_size, spec.profile,
                                   spec.corpus_seed);
  for (std::size_t p = 0; p < spec.perturbation_plan.size(); ++p) {
    const auto& [pspec, fraction] = spec.perturbation_plan[p];
    Rng rng(mix64(spec.corpus_seed ^ mix64(0xfeed + p)));
    const auto subset = rng.sample_indices(
        docs.size(),
        static_cast<std::size_t>(fraction * static_cast<double>(docs.size()) +
                                 0.5));
    for (const auto idx : subset)
      docs[idx].pages = corpus::perturb_pages(docs[idx].pages, pspec);
  }
  return corpus::Corpus(std::move(docs));
}

// Aggregates one campaign manifest into a table row. The accepted-tokens
// column is token-weighted by each document's groundtruth size.
inline RegimeRow summarize(const std::string& strategy,
                           const sched::CampaignResult& result,
                           const corpus::Corpus& docs,
                           const metrics::MetricConfig& metric) {
  RegimeRow row;
  row.strategy = strategy;
  std::vector<std::pair<std::size_t, double>> token_bleu;
  std::size_t scored = 0;
  for (const auto& r : result.manifest) {
    if (!r.scores) continue;
    ++scored;
    row.coverage += r.scores->coverage;
    row.bleu += r.scores->bleu;
    row.rouge += r.scores->rouge;
    row.car += r.scores->car;
    const auto* doc = docs.find(r.doc_id);
    token_bleu.emplace_back(doc ? doc->token_count : 0, r.scores->bleu);
  }
  if (scored == 0) throw std::runtime_error("no scored documents in manifest");
  const double n = static_cast<double>(scored);
  row.coverage /= n;
  row.bleu /= n;
  row.rouge /= n;
  row.car /= n;
  row.accepted_tokens = metrics::accepted_tokens(token_bleu, metric.at_threshold);
  row.heavy_fraction = result.report.heavy_fraction;
  return row;
}

// True per-parser BLEU for one document; the oracle the adaptive upper
// bound experiments run on.
inline std::vector<double> true_accuracies(
    const corpus::DocumentRecord& doc,
    const std::vector<parsers::ParserProfile>& parser_set,
    const metrics::MetricConfig& metric = {}) {
  std::vector<double> acc;
  acc.reserve(parser_set.size());
  for (const auto& p : parser_set) {
    const auto r = parsers::parse(p, doc);
    acc.push_back(doc.groundtruth ? metrics::bleu(r.text, *doc.groundtruth, metric)
                                  : 0.0);
  }
  return acc;
}

// One row per strategy over the same (possibly degraded) corpus.
inline RegimeTable run_regime(const ExperimentSpec& spec,
                              const std::vector<parsers::ParserProfile>& parser_set) {
  spec.validate();
  const auto docs = build_regime_corpus(spec);

  // Oracle cache: the adaptive strategies with no model reuse these.
  std::map<std::string, std::vector<double>> oracle_cache;
  auto oracle = [&](const corpus::DocumentRecord& d) {
    auto it = oracle_cache.find(d.doc_id);
    if (it != oracle_cache.end()) return it->second;
    auto acc = true_accuracies(d, parser_set, spec.metric);
    oracle_cache.emplace(d.doc_id, acc);
    return acc;
  };

  RegimeTable table;
  for (const auto& strategy : spec.strategies) {
    sched::CampaignOptions opt;
    opt.strategy = sched::Strategy::parse(strategy);
    opt.alpha = spec.alpha;
    opt.batch_size = spec.batch_size;
    opt.default_workers = spec.workers;
    opt.metric = spec.metric;
    opt.roles = spec.roles;
    if (opt.strategy.kind == sched::Strategy::Kind::adaparse_llm) {
      if (spec.model)
        opt.model = spec.model;
      else
        opt.oracle = oracle;
    }
    const auto result = sched::run_campaign(docs, parser_set, opt);
    table.rows.push_back(summarize(strategy, result, docs, spec.metric));
  }
  return table;
}

// Reference selections for context rows: per-document best, worst, random.
struct SelectionBaselines {
  double best = 0.0;    // BLEU-maximal selection
  double worst = 0.0;   // BLEU-minimal selection
  double random = 0.0;  // uniform random parser per document
};

inline SelectionBaselines selection_baselines(
    const corpus::Corpus& docs,
    const std::vector<parsers::ParserProfile>& parser_set, std::uint64_t seed,
    const metrics::MetricConfig& metric = {}) {
  SelectionBaselines out;
  Rng rng(mix64(seed));
  for (const auto& d : docs) {
    const auto acc = true_accuracies(d, parser_set, metric);
    out.best += *std::max_element(acc.begin(), acc.end());
    out.worst += *std::min_element(acc.begin(), acc.end());
    out.random += acc[rng.bounded(acc.size())];
  }
  const double n = static_cast<double>(docs.size());
  out.best /= n;
  out.worst /= n;
  out.random /= n;
  return out;
}

// --- Difficulty ranking ---------------------------------------------------------

struct DifficultyRanking {
  std::vector<std::string> parser_ids;
  // One row per document, hardest first (ascending mean BLEU).
  struct Entry {
    std::string doc_id;
    double mean_bleu = 0.0;
    std::vector<double> per_parser_bleu;
  };
  std::vector<Entry> entries;
};

// Core ranking over a complete score matrix; a missing (doc, parser) cell
// is an error.
inline DifficultyRanking difficulty_rank_scores(
    const std::vector<std::string>& doc_ids,
    const std::vector<std::string>& parser_ids,
    const std::map<std::pair<std::string, std::string>, double>& bleu_of) {
  if (doc_ids.empty()) throw std::invalid_argument("difficulty_rank: no documents");
  DifficultyRanking ranking;
  ranking.parser_ids = parser_ids;
  for (const auto& doc : doc_ids) {
    DifficultyRanking::Entry e;
    e.doc_id = doc;
    for (const auto& parser : parser_ids) {
      auto it = bleu_of.find({doc, parser});
      if (it == bleu_of.end())
        throw std::invalid_argument("difficulty_rank: missing parse for (" +
                                    doc + ", " + parser + ")");
      e.per_parser_bleu.push_back(it->second);
      e.mean_bleu += it->second;
    }
    e.mean_bleu /= static_cast<double>(parser_ids.size());
    ranking.entries.push_back(std::move(e));
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const auto& a, const auto& b) {
                     if (a.mean_bleu != b.mean_bleu)
                       return a.mean_bleu < b.mean_bleu;
                     return a.doc_id < b.doc_id;
                   });
  return ranking;
}

// Runs every parser on every document, then ranks. Small corpora only.
inline DifficultyRanking difficulty_rank(
    const corpus::Corpus& docs,
    const std::vector<parsers::ParserProfile>& parser_set,
    const metrics::MetricConfig& metric = {}) {
  std::vector<std::string> doc_ids, parser_ids;
  for (const auto& p : parser_set) parser_ids.push_back(p.parser_id);
  std::map<std::pair<std::string, std::string>, double> bleu_of;
  for (const auto& d : docs) {
    doc_ids.push_back(d.doc_id);
    const auto acc = true_accuracies(d, parser_set, metric);
    for (std::size_t j = 0; j < parser_set.size(); ++j)
      bleu_of[{d.doc_id, parser_ids[j]}] = acc[j];
  }
  return difficulty_rank_scores(doc_ids, parser_ids, bleu_of);
}

// Rank vs per-parser BLEU, one CSV row per document, hardest first.
inline void write_difficulty_csv(const std::string& path,
                                 const DifficultyRanking& ranking) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "rank,doc_id,mean_bleu";
  for (const auto& p : ranking.parser_ids) out << ',' << p;
  out << '\n';
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    const auto& e = ranking.entries[i];
    out << i << ',' << e.doc_id << ',' << e.mean_bleu;
    for (double b : e.per_parser_bleu) out << ',' << b;
    out << '\n';
  }
}

inline void write_regime_csv(const std::string& path, const RegimeTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "strategy,coverage,bleu,rouge,car,accepted_tokens,heavy_fraction\n";
  for (const auto& r : table.rows) {
    out << r.strategy << ',' << r.coverage << ',' << r.bleu << ',' << r.rouge
        << ',' << r.car << ',' << r.accepted_tokens << ',' << r.heavy_fraction
        << '\n';
  }
}

}  // namespace adaparse::harness
