#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/metrics.hpp"
#include "adaparse/parsers.hpp"
#include "adaparse/pool.hpp"
#include "adaparse/selector.hpp"

// Budget mathematics, dataset partitioning, per-batch planning under the
// heavy-parser cap, and the parallel campaign executor.

namespace adaparse::sched {

struct Budget {
  double total_seconds = 0.0;  // campaign-wide cost ceiling
  std::size_t n_docs = 0;
  double alpha = 0.0;
};

// Largest heavy-parser share that keeps expected cost within budget:
// (T - n*t_cheap) / (n*(t_heavy - t_cheap)), clamped to [0,1].
inline double compute_alpha(double budget_total_seconds, std::size_t n,
                            const parsers::ParserProfile& cheap,
                            const parsers::ParserProfile& heavy) {
  if (n == 0) throw std::invalid_argument("compute_alpha: n must be >= 1");
  if (!(heavy.avg_cost_seconds > cheap.avg_cost_seconds) ||
      !(cheap.avg_cost_seconds > 0.0))
    throw std::invalid_argument(
        "compute_alpha: requires heavy cost > cheap cost > 0");
  const double nn = static_cast<double>(n);
  const double alpha = (budget_total_seconds - nn * cheap.avg_cost_seconds) /
                       (nn * (heavy.avg_cost_seconds - cheap.avg_cost_seconds));
  return std::clamp(alpha, 0.0, 1.0);
}

struct NodePartition {
  std::string node_id;
  std::vector<std::string> doc_ids;
  double budget_seconds = 0.0;  // (n_l / n) * total budget
};

// Near-equal split across L nodes with proportional budgets.
inline std::vector<NodePartition> partition(
    const std::vector<std::string>& doc_ids, std::size_t node_count,
    const Budget& budget) {
  if (node_count == 0) throw std::invalid_argument("partition: need >= 1 node");
  if (node_count > doc_ids.size())
    throw std::invalid_argument("partition: more nodes than documents");
  const std::size_t n = doc_ids.size();
  std::vector<NodePartition> nodes(node_count);
  const std::size_t base = n / node_count;
  const std::size_t extra = n % node_count;
  std::size_t cursor = 0;
  for (std::size_t l = 0; l < node_count; ++l) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "node-%03zu", l);
    nodes[l].node_id = buf;
    const std::size_t take = base + (l < extra ? 1 : 0);
    nodes[l].doc_ids.assign(doc_ids.begin() + cursor,
                            doc_ids.begin() + cursor + take);
    cursor += take;
    nodes[l].budget_seconds = budget.total_seconds *
                              static_cast<double>(take) /
                              static_cast<double>(n);
  }
  return nodes;
}

// --- Batch planning -----------------------------------------------------------

struct BatchPlan {
  std::string batch_id;
  std::vector<std::pair<std::string, std::string>> assignments;  // doc -> parser
  std::size_t heavy_count = 0;
};

inline std::size_t heavy_cap(double alpha, std::size_t k) {
  return static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(k) + 1e-9));
}

struct PlannedBatch {
  BatchPlan plan;
  // Final (possibly demoted) decisions, sorted by doc_id, aligned with
  // plan.assignments.
  std::vector<selector::RoutingDecision> decisions;
};

// Turns routing decisions into a cap-respecting plan. Decisions from the
// batch router already honor the cap; FT decisions are made per document,
// so excess heavy routings are demoted here by ascending priority:
// invalid-extraction documents hold the strongest claim on the budget,
// then higher routing scores win, then lower doc_ids.
inline PlannedBatch plan_batch_full(
    std::vector<selector::RoutingDecision> decisions, double alpha,
    const selector::ParserRoles& roles, std::string batch_id = "batch-0") {
  if (decisions.empty()) throw std::invalid_argument("plan_batch: empty batch");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("plan_batch: alpha must be in [0,1]");
  const std::size_t cap = heavy_cap(alpha, decisions.size());
  std::sort(decisions.begin(), decisions.end(),
            [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });

  std::vector<std::size_t> heavy_idx;
  for (std::size_t i = 0; i < decisions.size(); ++i)
    if (decisions[i].chosen_parser == roles.heavy_parser) heavy_idx.push_back(i);

  if (heavy_idx.size() > cap) {
    std::sort(heavy_idx.begin(), heavy_idx.end(),
              [&](std::size_t a, std::size_t b) {
                const auto& da = decisions[a];
                const auto& db = decisions[b];
                const bool ia = da.stage == selector::RouteStage::cls1_invalid;
                const bool ib = db.stage == selector::RouteStage::cls1_invalid;
                if (ia != ib) return ia;
                if (da.routing_score != db.routing_score)
                  return da.routing_score > db.routing_score;
                return da.doc_id < db.doc_id;
              });
    for (std::size_t r = cap; r < heavy_idx.size(); ++r) {
      auto& d = decisions[heavy_idx[r]];
      d.chosen_parser = roles.default_parser;
      d.stage = selector::RouteStage::cls2_accept;
    }
  }

  PlannedBatch out;
  out.plan.batch_id = std::move(batch_id);
  for (const auto& d : decisions) {
    out.plan.assignments.emplace_back(d.doc_id, d.chosen_parser);
    out.plan.heavy_count += d.chosen_parser == roles.heavy_parser;
  }
  if (out.plan.heavy_count > cap)
    throw std::logic_error("plan_batch: budget invariant violated");
  out.decisions = std::move(decisions);
  return out;
}

inline BatchPlan plan_batch(std::vector<selector::RoutingDecision> decisions,
                            double alpha, const selector::ParserRoles& roles,
                            std::string batch_id = "batch-0") {
  return plan_batch_full(std::move(decisions), alpha, roles,
                         std::move(batch_id))
      .plan;
}

// --- Campaign ------------------------------------------------------------------

struct Strategy {
  enum class Kind { single, adaparse_ft, adaparse_llm };
  Kind kind = Kind::single;
  std::string single_parser;

  static Strategy parse(std::string_view s) {
    Strategy st;
    if (s == "adaparse_ft") {
      st.kind = Kind::adaparse_ft;
    } else if (s == "adaparse_llm") {
      st.kind = Kind::adaparse_llm;
    } else if (s.rfind("single:", 0) == 0) {
      st.kind = Kind::single;
      st.single_parser = std::string(s.substr(7));
      if (st.single_parser.empty())
        throw std::invalid_argument("strategy single: missing parser id");
    } else {
      throw std::invalid_argument(
          "unknown strategy: " + std::string(s) +
          " (expected single:<parser>, adaparse_ft, adaparse_llm)");
    }
    return st;
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::single: return "single:" + single_parser;
      case Kind::adaparse_ft: return "adaparse_ft";
      case Kind::adaparse_llm: return "adaparse_llm";
    }
    return "?";
  }
};

struct ManifestRecord {
  std::string doc_id;
  std::string parser_id;
  std::string stage;  // single | cls1_invalid | cls2_accept | cls3_routed
  std::string status;
  double wall_seconds = 0.0;
  std::size_t pages_emitted = 0;
  std::optional<metrics::QualityScores> scores;  // present with groundtruth
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j = {{"doc_id", r.doc_id},
                      {"parser_id", r.parser_id},
                      {"stage", r.stage},
                      {"status", r.status},
                      {"wall_seconds", r.wall_seconds},
                      {"pages_emitted", r.pages_emitted}};
  if (r.scores) {
    j["bleu"] = r.scores->bleu;
    j["rouge"] = r.scores->rouge;
    j["car"] = r.scores->car;
    j["coverage"] = r.scores->coverage;
  }
  return j;
}

inline ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.parser_id = j.at("parser_id").get<std::string>();
  r.stage = j.value("stage", std::string("single"));
  r.status = j.value("status", std::string("ok"));
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.pages_emitted = j.value("pages_emitted", std::size_t{0});
  if (j.contains("bleu")) {
    metrics::QualityScores q;
    q.bleu = j.value("bleu", 0.0);
    q.rouge = j.value("rouge", 0.0);
    q.car = j.value("car", 0.0);
    q.coverage = j.value("coverage", 0.0);
    r.scores = q;
  }
  return r;
}

inline std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(manifest_record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

struct PoolReport {
  std::string parser_id;
  std::size_t workers = 0;
  parsers::PoolStats stats;
};

struct CampaignReport {
  std::string strategy;
  std::size_t n_docs = 0;
  std::size_t batches = 0;
  double alpha = 0.0;
  std::size_t heavy_total = 0;
  double heavy_fraction = 0.0;
  std::size_t max_batch_heavy = 0;
  std::map<std::string, std::size_t> per_parser_docs;
  std::map<std::string, std::size_t> per_status_docs;
  double measured_wall_seconds = 0.0;
  double throughput_docs_per_sec = 0.0;
  double simulated_parse_seconds = 0.0;  // deterministic cost-model total
  double probe_seconds = 0.0;            // selector probe, accounted apart
  double budget_seconds = 0.0;           // 0 when no budget was given
  // Expected-accuracy difference between one global greedy plan and the
  // executed per-batch plans, over documents that carried predictions.
  std::optional<double> optimality_gap;
  std::vector<PoolReport> pools;
};

inline nlohmann::json to_json(const CampaignReport& r) {
  nlohmann::json pools = nlohmann::json::array();
  for (const auto& p : r.pools)
    pools.push_back({{"parser_id", p.parser_id},
                     {"workers", p.workers},
                     {"initializations", p.stats.initializations},
                     {"served", p.stats.served},
                     {"retried", p.stats.retried},
                     {"failed_after_retry", p.stats.failed_after_retry},
                     {"peak_in_flight", p.stats.peak_in_flight}});
  nlohmann::json j = {{"strategy", r.strategy},
                      {"n_docs", r.n_docs},
                      {"batches", r.batches},
                      {"alpha", r.alpha},
                      {"heavy_total", r.heavy_total},
                      {"heavy_fraction", r.heavy_fraction},
                      {"max_batch_heavy", r.max_batch_heavy},
                      {"per_parser_docs", r.per_parser_docs},
                      {"per_status_docs", r.per_status_docs},
                      {"measured_wall_seconds", r.measured_wall_seconds},
                      {"throughput_docs_per_sec", r.throughput_docs_per_sec},
                      {"simulated_parse_seconds", r.simulated_parse_seconds},
                      {"probe_seconds", r.probe_seconds},
                      {"budget_seconds", r.budget_seconds},
                      {"pools", pools}};
  if (r.optimality_gap) j["optimality_gap"] = *r.optimality_gap;
  return j;
}

struct CampaignOptions {
  Strategy strategy;
  double alpha = 0.05;
  std::size_t batch_size = 256;
  std::size_t default_workers = 1;
  std::map<std::string, std::size_t> workers;  // per-parser override
  std::size_t queue_capacity = 64;
  metrics::MetricConfig metric;
  selector::Cls1Thresholds cls1;
  selector::ParserRoles roles;  // default/heavy for the adaptive strategies
  const selector::PredictorModel* model = nullptr;  // adaparse_llm
  const selector::Cls2Model* cls2 = nullptr;        // adaparse_ft
  // Oracle hook for experiments: per-document true accuracies indexed like
  // the parser set. Takes precedence over the model.
  std::function<std::vector<double>(const corpus::DocumentRecord&)> oracle;
  bool compute_metrics = true;
  bool prefetch = true;
  double budget_seconds = 0.0;  // reported against realized cost when set
  std::string manifest_path;    // empty: in-memory only
  std::string text_output_dir;  // when set, parsed text lands here per doc
};

struct CampaignResult {
  std::vector<ManifestRecord> manifest;
  CampaignReport report;
};

namespace detail {

struct ProbedDoc {
  const corpus::DocumentRecord* doc;
  std::string first_page;
};

inline std::vector<ProbedDoc> probe_batch(
    const std::vector<const corpus::DocumentRecord*>& batch,
    const parsers::ParserProfile& default_profile) {
  std::vector<ProbedDoc> out;
  out.reserve(batch.size());
  for (const auto* d : batch)
    out.push_back({d, parsers::parse_first_page(default_profile, *d)});
  return out;
}

inline std::size_t index_of(const std::vector<parsers::ParserProfile>& set,
                            std::string_view id) {
  for (std::size_t j = 0; j < set.size(); ++j)
    if (set[j].parser_id == id) return j;
  throw std::invalid_argument("unknown parser id: " + std::string(id));
}

}  // namespace detail

// Runs one campaign over a staged corpus. Every document yields exactly one
// manifest record (possibly failed); batches stream to the manifest file as
// they complete, in doc order within each batch, so reruns agree byte for
// byte when the parsers are deterministic.
inline CampaignResult run_campaign(
    const corpus::Corpus& docs,
    const std::vector<parsers::ParserProfile>& parser_set,
    const CampaignOptions& options) {
  using clock = std::chrono::steady_clock;
  if (docs.size() == 0) throw std::invalid_argument("run_campaign: empty corpus");
  if (options.batch_size == 0)
    throw std::invalid_argument("run_campaign: batch_size must be >= 1");
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0))
    throw std::invalid_argument("run_campaign: alpha must be in [0,1]");
  options.metric.validate();

  const bool adaptive = options.strategy.kind != Strategy::Kind::single;
  const selector::ParserRoles& roles = options.roles;
  if (adaptive && (roles.default_parser.empty() || roles.heavy_parser.empty()))
    throw std::invalid_argument(
        "run_campaign: adaptive strategies need parser roles");
  if (options.strategy.kind == Strategy::Kind::adaparse_llm &&
      !options.model && !options.oracle)
    throw std::invalid_argument("run_campaign: adaparse_llm needs a predictor");

  std::vector<std::string> active;
  if (options.strategy.kind == Strategy::Kind::single) {
    active.push_back(options.strategy.single_parser);
  } else {
    active.push_back(roles.default_parser);
    if (roles.heavy_parser != roles.default_parser)
      active.push_back(roles.heavy_parser);
  }
  std::map<std::string, std::unique_ptr<parsers::ParserPool>> pools;
  for (const auto& id : active) {
    const auto& profile = parsers::find_parser(parser_set, id);
    auto it = options.workers.find(id);
    const std::size_t workers =
        it != options.workers.end() ? it->second : options.default_workers;
    pools.emplace(id, std::make_unique<parsers::ParserPool>(
                          profile, workers, options.queue_capacity));
  }
  const parsers::ParserProfile* default_profile =
      adaptive ? &parsers::find_parser(parser_set, roles.default_parser)
               : nullptr;

  std::ofstream manifest_file;
  if (!options.manifest_path.empty()) {
    manifest_file.open(options.manifest_path,
                       std::ios::binary | std::ios::trunc);
    if (!manifest_file)
      throw std::runtime_error("cannot open manifest: " + options.manifest_path);
  }
  if (!options.text_output_dir.empty())
    std::filesystem::create_directories(options.text_output_dir);

  CampaignResult result;
  auto& report = result.report;
  report.strategy = options.strategy.to_string();
  report.n_docs = docs.size();
  report.alpha = options.alpha;
  report.budget_seconds = options.budget_seconds;

  std::vector<const corpus::DocumentRecord*> all_docs;
  all_docs.reserve(docs.size());
  for (const auto& d : docs) all_docs.push_back(&d);

  // Accumulators for the global-vs-batch optimality gap statistic.
  const bool track_gap = options.strategy.kind == Strategy::Kind::adaparse_llm;
  std::vector<double> improvements;
  double realized_gain = 0.0;  // sum of improvements the batch plans took

  const auto t0 = clock::now();
  std::future<std::vector<detail::ProbedDoc>> prefetched;

  for (std::size_t start = 0; start < all_docs.size();
       start += options.batch_size) {
    const std::size_t end =
        std::min(all_docs.size(), start + options.batch_size);
    std::vector<const corpus::DocumentRecord*> batch(all_docs.begin() + start,
                                                     all_docs.begin() + end);
    char batch_id[24];
    std::snprintf(batch_id, sizeof(batch_id), "batch-%05zu", report.batches);
    ++report.batches;

    std::vector<selector::RoutingDecision> decisions;
    if (options.strategy.kind == Strategy::Kind::single) {
      decisions.reserve(batch.size());
      for (const auto* d : batch) {
        selector::RoutingDecision dec;
        dec.doc_id = d->doc_id;
        dec.chosen_parser = options.strategy.single_parser;
        decisions.push_back(std::move(dec));
      }
    } else {
      std::vector<detail::ProbedDoc> probed =
          prefetched.valid() ? prefetched.get()
                             : detail::probe_batch(batch, *default_profile);
      report.probe_seconds += static_cast<double>(probed.size()) *
                              parsers::probe_seconds(*default_profile);

      // Overlap the next batch's probing with this batch's parsing.
      if (options.prefetch && end < all_docs.size()) {
        std::vector<const corpus::DocumentRecord*> next(
            all_docs.begin() + end,
            all_docs.begin() +
                std::min(all_docs.size(), end + options.batch_size));
        prefetched = std::async(std::launch::async, [next, default_profile] {
          return detail::probe_batch(next, *default_profile);
        });
      }

      if (options.strategy.kind == Strategy::Kind::adaparse_ft) {
        static const selector::Cls2Model kNeverImprove;
        const auto& cls2 = options.cls2 ? *options.cls2 : kNeverImprove;
        for (const auto& p : probed)
          decisions.push_back(selector::route_ft(
              *p.doc, selector::text_stats(p.first_page), options.cls1, cls2,
              roles));
      } else {
        const std::size_t di =
            options.oracle
                ? detail::index_of(parser_set, roles.default_parser)
                : options.model->parser_index(roles.default_parser);
        const std::size_t hi =
            options.oracle ? detail::index_of(parser_set, roles.heavy_parser)
                           : options.model->parser_index(roles.heavy_parser);
        std::vector<selector::BatchItem> items;
        items.reserve(probed.size());
        for (auto& p : probed) {
          selector::BatchItem item;
          item.doc = p.doc;
          if (selector::cls1_validity(selector::text_stats(p.first_page),
                                      options.cls1)) {
            item.predicted = options.oracle
                                 ? options.oracle(*p.doc)
                                 : selector::predict_accuracy(*options.model,
                                                              p.first_page);
          }
          item.first_page_text = std::move(p.first_page);
          items.push_back(std::move(item));
        }
        decisions = selector::route_batch(std::move(items), di, hi,
                                          options.alpha, options.cls1, roles);
        if (track_gap) {
          for (const auto& d : decisions) {
            if (d.predicted_accuracy.empty()) continue;
            const double imp =
                d.predicted_accuracy[hi] - d.predicted_accuracy[di];
            improvements.push_back(imp);
            if (d.chosen_parser == roles.heavy_parser) realized_gain += imp;
          }
        }
      }
    }

    PlannedBatch planned =
        plan_batch_full(std::move(decisions), adaptive ? options.alpha : 1.0,
                        roles, batch_id);
    if (adaptive) {
      report.heavy_total += planned.plan.heavy_count;
      report.max_batch_heavy =
          std::max(report.max_batch_heavy, planned.plan.heavy_count);
    }

    // Execute the plan; one slot per document, filled by pool callbacks.
    struct Slot {
      ManifestRecord record;
      bool done = false;
    };
    std::vector<Slot> slots(planned.plan.assignments.size());
    std::mutex slot_mu;
    for (std::size_t i = 0; i < planned.plan.assignments.size(); ++i) {
      const auto& [doc_id, parser_id] = planned.plan.assignments[i];
      const auto* doc = docs.find(doc_id);
      pools.at(parser_id)->submit(doc, [&, i, doc](parsers::ParseResult r) {
        ManifestRecord rec;
        rec.doc_id = r.doc_id;
        rec.parser_id = r.parser_id;
        rec.status = parsers::to_string(r.status);
        rec.wall_seconds = r.wall_seconds;
        rec.pages_emitted = r.pages_emitted;
        if (options.compute_metrics && doc->groundtruth &&
            r.status != parsers::ParseStatus::timeout) {
          rec.scores = metrics::score_parse(r.text, *doc->groundtruth,
                                            doc->pages.size(), options.metric);
        }
        if (!options.text_output_dir.empty()) {
          std::ofstream text_out(std::filesystem::path(options.text_output_dir) /
                                     (r.doc_id + ".txt"),
                                 std::ios::binary | std::ios::trunc);
          text_out << r.text;
        }
        std::lock_guard lock(slot_mu);
        slots[i].record = std::move(rec);
        slots[i].done = true;
      });
    }
    for (auto& [id, pool] : pools) pool->wait_idle();

    // Flush this batch in plan order (doc_id ascending within the batch).
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].done)
        throw std::logic_error("run_campaign: lost a document result");
      auto& rec = slots[i].record;
      rec.stage = adaptive ? selector::to_string(planned.decisions[i].stage)
                           : "single";
      report.per_parser_docs[rec.parser_id]++;
      report.per_status_docs[rec.status]++;
      report.simulated_parse_seconds += rec.wall_seconds;
      if (manifest_file) manifest_file << to_json(rec).dump() << '\n';
      result.manifest.push_back(std::move(rec));
    }
    if (manifest_file) manifest_file.flush();
  }

  report.measured_wall_seconds =
      std::chrono::duration<double>(clock::now() - t0).count();
  report.heavy_fraction = static_cast<double>(report.heavy_total) /
                          static_cast<double>(report.n_docs);
  report.throughput_docs_per_sec =
      report.measured_wall_seconds > 0.0
          ? static_cast<double>(report.n_docs) / report.measured_wall_seconds
          : 0.0;

  if (track_gap && !improvements.empty()) {
    // One global greedy plan over every predicted document at the same
    // alpha; its gain minus the per-batch gains bounds the planning loss.
    std::vector<double> sorted = improvements;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t cap = heavy_cap(options.alpha, sorted.size());
    double global_gain = 0.0;
    for (std::size_t i = 0; i < std::min(cap, sorted.size()); ++i)
      if (sorted[i] > 0.0) global_gain += sorted[i];
    report.optimality_gap = global_gain - realized_gain;
  }

  for (auto& [id, pool] : pools) {
    PoolReport pr;
    pr.parser_id = id;
    pr.workers = pool->worker_count();
    pr.stats = pool->stats();
    report.pools.push_back(std::move(pr));
    pool->close();
  }
  return result;
}

}  // namespace adaparse::sched
