// Campaign command line: stage archives, synthesize corpora, train the
// accuracy predictor, run parsing campaigns, evaluate manifests, and bench
// worker scaling.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adaparse/adaparse.hpp"

namespace fs = std::filesystem;
using namespace adaparse;

namespace {

void install_logging() {
  log_hook() = [](std::string_view msg) {
    std::cerr << "[note] " << msg << '\n';
  };
}

// Reference mocks, the built-in perfect mock, plus any external parser the
// config declares under parser_settings.
std::vector<parsers::ParserProfile> build_parser_set(
    const cli::CampaignConfig& cfg) {
  auto set = parsers::reference_parsers(cfg.seed);
  set.push_back(parsers::perfect_mock());
  auto cmd = cfg.parser_options.find("command");
  if (cmd != cfg.parser_options.end()) {
    parsers::ParserProfile ext;
    ext.parser_id = cfg.parser_name;
    ext.kind = parsers::ParserKind::external;
    ext.command_template = cmd->second;
    auto timeout = cfg.parser_options.find("timeout_seconds");
    if (timeout != cfg.parser_options.end())
      ext.timeout_seconds = std::stod(timeout->second);
    auto cost = cfg.parser_options.find("avg_cost_seconds");
    ext.avg_cost_seconds =
        cost != cfg.parser_options.end() ? std::stod(cost->second) : 1.0;
    set.push_back(std::move(ext));
  }
  return set;
}

bool has_zip_archives(const fs::path& dir, std::vector<std::string>& zips) {
  if (!fs::is_directory(dir)) return false;
  for (const auto& ent : fs::directory_iterator(dir))
    if (ent.is_regular_file() && ent.path().extension() == ".zip")
      zips.push_back(ent.path().string());
  std::sort(zips.begin(), zips.end());
  return !zips.empty();
}

// pdf_dir holding ZIP archives is staged into out_dir/staged; a directory
// of .json records is loaded directly.
corpus::Corpus resolve_corpus(const cli::CampaignConfig& cfg) {
  std::vector<std::string> zips;
  if (fs::is_regular_file(cfg.pdf_dir) &&
      fs::path(cfg.pdf_dir).extension() == ".zip")
    zips.push_back(cfg.pdf_dir);
  else
    has_zip_archives(cfg.pdf_dir, zips);
  if (!zips.empty()) {
    const auto staged_dir = (fs::path(cfg.out_dir) / "staged").string();
    auto result = corpus::stage_archives(zips, staged_dir);
    std::printf("staged %zu documents (%zu skipped) into %s\n", result.staged,
                result.skipped, staged_dir.c_str());
    return std::move(result.corpus);
  }
  return corpus::load_staged(cfg.pdf_dir);
}

void print_report_table(const sched::CampaignReport& r) {
  std::printf("strategy             %s\n", r.strategy.c_str());
  std::printf("documents            %zu in %zu batches\n", r.n_docs, r.batches);
  std::printf("alpha                %.4f\n", r.alpha);
  std::printf("heavy routed         %zu (%.2f%%), max %zu per batch\n",
              r.heavy_total, 100.0 * r.heavy_fraction, r.max_batch_heavy);
  std::printf("wall time            %.2f s (%.1f docs/s)\n",
              r.measured_wall_seconds, r.throughput_docs_per_sec);
  std::printf("simulated cost       %.2f s parse + %.2f s probe\n",
              r.simulated_parse_seconds, r.probe_seconds);
  if (r.budget_seconds > 0.0)
    std::printf("budget               %.2f s\n", r.budget_seconds);
  if (r.optimality_gap)
    std::printf("optimality gap       %.6f (global greedy vs per-batch)\n",
                *r.optimality_gap);
  for (const auto& [parser, count] : r.per_parser_docs)
    std::printf("  parser %-14s %zu docs\n", parser.c_str(), count);
  for (const auto& [status, count] : r.per_status_docs)
    std::printf("  status %-14s %zu docs\n", status.c_str(), count);
  for (const auto& p : r.pools)
    std::printf("  pool %-16s workers=%zu inits=%llu retries=%llu peak=%llu\n",
                p.parser_id.c_str(), p.workers,
                static_cast<unsigned long long>(p.stats.initializations),
                static_cast<unsigned long long>(p.stats.retried),
                static_cast<unsigned long long>(p.stats.peak_in_flight));
}

struct EvalRow {
  std::string parser;
  std::size_t docs = 0;
  double coverage = 0.0, bleu = 0.0, rouge = 0.0, car = 0.0;
  double at = 0.0;
  std::optional<double> wr;
};

// Table-shaped evaluation: Coverage | BLEU | ROUGE | CAR | WR | AT, one row
// per parser plus a campaign-wide row, all recomputed from the manifest.
std::vector<EvalRow> evaluate_manifest(
    const std::vector<sched::ManifestRecord>& manifest,
    const corpus::Corpus& docs,
    const std::vector<metrics::PreferenceRecord>& preferences,
    const metrics::MetricConfig& metric) {
  std::map<std::string, std::vector<const sched::ManifestRecord*>> by_parser;
  for (const auto& r : manifest) by_parser[r.parser_id].push_back(&r);
  for (const auto& r : manifest) by_parser["(campaign)"].push_back(&r);

  std::vector<EvalRow> rows;
  for (const auto& [parser, records] : by_parser) {
    EvalRow row;
    row.parser = parser;
    std::vector<std::pair<std::size_t, double>> token_bleu;
    std::size_t scored = 0;
    for (const auto* r : records) {
      ++row.docs;
      if (!r->scores) continue;
      ++scored;
      row.coverage += r->scores->coverage;
      row.bleu += r->scores->bleu;
      row.rouge += r->scores->rouge;
      row.car += r->scores->car;
      const auto* doc = docs.find(r->doc_id);
      token_bleu.emplace_back(doc ? doc->token_count : 0, r->scores->bleu);
    }
    if (scored > 0) {
      row.coverage /= static_cast<double>(scored);
      row.bleu /= static_cast<double>(scored);
      row.rouge /= static_cast<double>(scored);
      row.car /= static_cast<double>(scored);
      row.at = metrics::accepted_tokens(token_bleu, metric.at_threshold);
    }
    if (!preferences.empty() && parser != "(campaign)") {
      try {
        row.wr = metrics::win_rate(preferences, parser);
      } catch (const std::invalid_argument&) {
        // never compared: keep the dash
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_eval_table(const std::vector<EvalRow>& rows) {
  std::printf("%-16s %6s %9s %7s %7s %7s %7s %7s\n", "parser", "docs",
              "coverage", "bleu", "rouge", "car", "wr", "at");
  for (const auto& r : rows) {
    char wr[16] = "--";
    if (r.wr) std::snprintf(wr, sizeof(wr), "%.1f", 100.0 * *r.wr);
    std::printf("%-16s %6zu %9.1f %7.1f %7.1f %7.1f %7s %7.1f\n",
                r.parser.c_str(), r.docs, 100.0 * r.coverage, 100.0 * r.bleu,
                100.0 * r.rouge, 100.0 * r.car, wr, 100.0 * r.at);
  }
}

struct BenchRow {
  std::size_t workers = 0;
  double docs_per_sec = 0.0;
  double efficiency = 0.0;
};

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  out << "workers,docs_per_sec,parallel_efficiency\n";
  for (const auto& r : rows)
    out << r.workers << ',' << r.docs_per_sec << ',' << r.efficiency << '\n';
}

// Minimal static line plot, throughput vs workers.
void write_bench_svg(const std::string& path,
                     const std::vector<BenchRow>& rows) {
  if (rows.empty()) return;
  const double width = 640, height = 400, left = 70, bottom = 60, top = 30,
               right = 30;
  double max_tp = 0, max_w = 0;
  for (const auto& r : rows) {
    max_tp = std::max(max_tp, r.docs_per_sec);
    max_w = std::max(max_w, static_cast<double>(r.workers));
  }
  if (max_tp <= 0 || max_w <= 0) return;
  auto x = [&](double w) { return left + (w / max_w) * (width - left - right); };
  auto y = [&](double tp) {
    return height - bottom - (tp / max_tp) * (height - top - bottom);
  };
  std::ofstream out(path, std::ios::trunc);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << left << "' y1='" << height - bottom << "' x2='"
      << width - right << "' y2='" << height - bottom << "' stroke='black'/>\n";
  out << "<line x1='" << left << "' y1='" << height - bottom << "' x2='"
      << left << "' y2='" << top << "' stroke='black'/>\n";
  out << "<text x='" << width / 2 << "' y='" << height - 15
      << "' text-anchor='middle' font-size='14'>workers</text>\n";
  out << "<text x='18' y='" << height / 2
      << "' text-anchor='middle' font-size='14' transform='rotate(-90 18 "
      << height / 2 << ")'>documents / second</text>\n";
  out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& r : rows)
    out << x(static_cast<double>(r.workers)) << ',' << y(r.docs_per_sec) << ' ';
  out << "'/>\n";
  for (const auto& r : rows) {
    out << "<circle cx='" << x(static_cast<double>(r.workers)) << "' cy='"
        << y(r.docs_per_sec) << "' r='4' fill='steelblue'/>\n";
    out << "<text x='" << x(static_cast<double>(r.workers)) << "' y='"
        << height - bottom + 20 << "' text-anchor='middle' font-size='12'>"
        << r.workers << "</text>\n";
  }
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.1f", max_tp);
  out << "<text x='" << left - 8 << "' y='" << top + 5
      << "' text-anchor='end' font-size='12'>" << buf << "</text>\n";
  out << "<text x='" << left - 8 << "' y='" << height - bottom
      << "' text-anchor='end' font-size='12'>0</text>\n";
  out << "</svg>\n";
}

cli::CampaignConfig load_or_default(const std::string& config_path) {
  if (!config_path.empty()) return cli::load_config(config_path);
  cli::CampaignConfig cfg;
  cfg.pdf_dir = ".";
  cfg.out_dir = ".";
  return cfg;
}

int cmd_stage(const std::string& config_path, std::string pdf_dir,
              std::string out_dir) {
  auto cfg = load_or_default(config_path);
  if (!pdf_dir.empty()) cfg.pdf_dir = pdf_dir;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  std::vector<std::string> zips;
  if (fs::is_regular_file(cfg.pdf_dir) &&
      fs::path(cfg.pdf_dir).extension() == ".zip")
    zips.push_back(cfg.pdf_dir);
  else if (!has_zip_archives(cfg.pdf_dir, zips))
    throw std::runtime_error("no .zip archives under " + cfg.pdf_dir);
  fs::create_directories(cfg.out_dir);
  const auto staged_dir = (fs::path(cfg.out_dir) / "staged").string();
  const auto result = corpus::stage_archives(zips, staged_dir);
  std::printf("staged %zu documents, skipped %zu, log at %s/%s\n",
              result.staged, result.skipped, staged_dir.c_str(),
              std::string(corpus::kStagingLogName).c_str());
  return 0;
}

int cmd_synth(std::size_t n, std::uint64_t seed, const std::string& out_dir,
              double hard_fraction, bool training_data) {
  fs::create_directories(out_dir);
  corpus::SynthProfile profile;
  profile.hard_fraction = hard_fraction;
  auto docs = corpus::synth_corpus(n, profile, seed);
  const std::size_t half = docs.size() / 2;
  std::vector<corpus::DocumentRecord> first(docs.begin(), docs.begin() + half);
  std::vector<corpus::DocumentRecord> second(docs.begin() + half, docs.end());
  char name[64];
  std::snprintf(name, sizeof(name), "corpus-%llu-a.zip",
                static_cast<unsigned long long>(seed));
  corpus::write_archive((fs::path(out_dir) / name).string(), first);
  std::snprintf(name, sizeof(name), "corpus-%llu-b.zip",
                static_cast<unsigned long long>(seed));
  if (!second.empty())
    corpus::write_archive((fs::path(out_dir) / name).string(), second);
  std::printf("wrote %zu documents into 2 archives under %s\n", docs.size(),
              out_dir.c_str());

  if (training_data) {
    const auto set = parsers::reference_parsers(seed);
    const auto& fastext = parsers::find_parser(set, "fastext");
    std::vector<training::RegressionExample> reg;
    std::vector<training::PreferencePair> pairs;
    Rng rng(mix64(seed ^ 0x7a11));
    for (const auto& d : docs) {
      training::RegressionExample ex;
      ex.input_text = parsers::parse_first_page(fastext, d);
      for (const auto& p : set) {
        const auto r = parsers::parse(p, d);
        ex.targets.push_back(metrics::bleu(r.text, *d.groundtruth));
      }
      reg.push_back(std::move(ex));

      // One preference pair per document: two distinct parsers on page 1,
      // the higher page-BLEU side preferred.
      const std::size_t a = rng.bounded(set.size());
      std::size_t b = rng.bounded(set.size());
      if (b == a) b = (b + 1) % set.size();
      const auto pa = split_pages(parsers::parse(set[a], d).text);
      const auto pb = split_pages(parsers::parse(set[b], d).text);
      const auto gt = split_pages(*d.groundtruth);
      if (pa.empty() || pb.empty() || gt.empty()) continue;
      const double ba = metrics::bleu(pa[0], gt[0]);
      const double bb = metrics::bleu(pb[0], gt[0]);
      if (pa[0] == pb[0] || ba == bb) continue;
      training::PreferencePair pair;
      pair.page_id = d.doc_id + ":p0";
      pair.preferred_text = ba > bb ? pa[0] : pb[0];
      pair.rejected_text = ba > bb ? pb[0] : pa[0];
      pairs.push_back(std::move(pair));
    }
    training::save_regression_file(
        (fs::path(out_dir) / "regression.jsonl").string(), reg);
    training::save_preference_file((fs::path(out_dir) / "pairs.jsonl").string(),
                                   pairs);
    std::printf("wrote %zu regression examples and %zu preference pairs\n",
                reg.size(), pairs.size());
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& regression_path,
              const std::string& pairs_path,
              const std::string& doc_regression_path,
              const std::string& out_path, std::size_t dim, std::size_t buckets,
              std::size_t ngram_max, training::TrainConfig tc) {
  auto cfg = load_or_default(config_path);
  const auto reg = training::load_regression_file(regression_path);
  if (reg.empty()) throw std::runtime_error("regression file is empty");
  const auto pairs = training::load_preference_file(pairs_path);
  const auto doc_reg = doc_regression_path.empty()
                           ? reg
                           : training::load_regression_file(doc_regression_path);

  selector::EmbeddingConfig ecfg;
  ecfg.dim = dim;
  ecfg.bucket_count = buckets;
  ecfg.ngram_max = ngram_max;
  const std::size_t m = reg.front().targets.size();
  std::vector<std::string> parser_ids;
  {
    const auto set = parsers::reference_parsers(cfg.seed);
    if (m == set.size())
      for (const auto& p : set) parser_ids.push_back(p.parser_id);
    else
      for (std::size_t j = 0; j < m; ++j)
        parser_ids.push_back("parser-" + std::to_string(j));
  }

  auto model = selector::init_model(ecfg, parser_ids, cfg.seed);
  model = training::train_regression(std::move(model), reg, tc);
  std::printf("stage 1: regression loss %.6f on %zu examples\n",
              training::regression_loss(model, reg), reg.size());
  selector::save_model(model, out_path + ".stage1");

  model = training::train_dpo(std::move(model), pairs, tc);
  std::printf("stage 2: ranking accuracy %.3f on %zu pairs\n",
              training::ranking_accuracy(model, pairs), pairs.size());
  selector::save_model(model, out_path + ".stage2");

  model = training::train_final(std::move(model), doc_reg, tc);
  std::printf("stage 3: regression loss %.6f (document level)\n",
              training::regression_loss(model, doc_reg));
  selector::save_model(model, out_path);
  std::printf("weights written to %s (stages at %s.stage1, %s.stage2)\n",
              out_path.c_str(), out_path.c_str(), out_path.c_str());
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& strategy,
            double alpha, std::size_t workers, std::uint64_t seed,
            std::size_t batch_size, const std::string& model_path) {
  auto cfg = cli::load_config(config_path);
  if (!strategy.empty()) cfg.strategy = strategy;
  if (alpha >= 0.0) cfg.alpha = alpha;
  if (workers > 0) cfg.default_workers = workers;
  if (seed != 0) cfg.seed = seed;
  if (batch_size > 0) cfg.batch_size = batch_size;
  if (!model_path.empty()) cfg.model_path = model_path;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(fs::path(cfg.out_dir) / "effective_config.yaml",
                       std::ios::trunc);
    echo << cli::dump_config(cfg);
  }

  const auto docs = resolve_corpus(cfg);
  const auto set = build_parser_set(cfg);

  sched::CampaignOptions opt;
  opt.strategy = sched::Strategy::parse(cfg.effective_strategy());
  opt.alpha = cfg.alpha;
  opt.batch_size = cfg.batch_size;
  opt.default_workers = cfg.default_workers;
  opt.workers = cfg.workers;
  opt.metric = cfg.metric;
  opt.cls1 = cfg.cls1;
  opt.roles = {cfg.default_parser, cfg.heavy_parser};
  opt.manifest_path = (fs::path(cfg.out_dir) / "manifest.jsonl").string();
  opt.text_output_dir = (fs::path(cfg.out_dir) / "parsed").string();

  selector::PredictorModel model;
  if (opt.strategy.kind == sched::Strategy::Kind::adaparse_llm) {
    if (cfg.model_path.empty())
      throw std::runtime_error(
          "strategy adaparse_llm needs model_path (train one with 'adaparse "
          "train')");
    model = selector::load_model(cfg.model_path);
    opt.model = &model;
  }

  const auto result = sched::run_campaign(docs, set, opt);
  {
    std::ofstream report(fs::path(cfg.out_dir) / "report.json",
                         std::ios::trunc);
    report << sched::to_json(result.report).dump(2) << '\n';
  }
  print_report_table(result.report);
  std::printf("manifest: %s\n", opt.manifest_path.c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, std::string manifest_path,
             const std::string& preferences_path) {
  auto cfg = cli::load_config(config_path);
  if (manifest_path.empty())
    manifest_path = (fs::path(cfg.out_dir) / "manifest.jsonl").string();
  const auto manifest = sched::load_manifest(manifest_path);
  const auto docs = resolve_corpus(cfg);
  std::vector<metrics::PreferenceRecord> preferences;
  if (!preferences_path.empty())
    preferences = training::load_preference_records(preferences_path);

  const auto rows = evaluate_manifest(manifest, docs, preferences, cfg.metric);
  print_eval_table(rows);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"parser", r.parser},     {"docs", r.docs},
                          {"coverage", r.coverage}, {"bleu", r.bleu},
                          {"rouge", r.rouge},       {"car", r.car},
                          {"accepted_tokens", r.at}};
    if (r.wr) row["win_rate"] = *r.wr;
    j.push_back(std::move(row));
  }
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "eval_report.json",
                    std::ios::trunc);
  out << j.dump(2) << '\n';
  std::printf("eval report: %s\n",
              (fs::path(cfg.out_dir) / "eval_report.json").string().c_str());
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& workers_csv,
              std::size_t n_docs, double spin_ms, const std::string& csv_path,
              const std::string& svg_path) {
  auto cfg = load_or_default(config_path);
  std::vector<std::size_t> worker_counts;
  {
    std::stringstream ss{workers_csv};
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) worker_counts.push_back(std::stoul(tok));
  }
  if (worker_counts.empty()) throw std::runtime_error("no worker counts given");

  corpus::Corpus docs(
      corpus::synth_corpus(n_docs, corpus::SynthProfile{}, cfg.seed));
  auto bench_parser = parsers::perfect_mock("bench-mock");
  bench_parser.spin_ms_per_page = spin_ms;

  std::vector<BenchRow> rows;
  double tp1 = 0.0;
  for (const auto w : worker_counts) {
    sched::CampaignOptions opt;
    opt.strategy = sched::Strategy::parse("single:bench-mock");
    opt.default_workers = w;
    opt.batch_size = cfg.batch_size;
    opt.compute_metrics = false;
    const auto result = sched::run_campaign(docs, {bench_parser}, opt);
    BenchRow row;
    row.workers = w;
    row.docs_per_sec = result.report.throughput_docs_per_sec;
    if (rows.empty()) tp1 = row.docs_per_sec / static_cast<double>(w);
    row.efficiency =
        tp1 > 0.0 ? row.docs_per_sec / (static_cast<double>(w) * tp1) : 0.0;
    rows.push_back(row);
    std::printf("workers=%zu  %.1f docs/s  efficiency %.2f\n", w,
                row.docs_per_sec, row.efficiency);
  }
  if (!csv_path.empty()) write_bench_csv(csv_path, rows);
  if (!svg_path.empty()) write_bench_svg(svg_path, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_logging();
  CLI::App app{"adaptive document parsing campaigns"};
  app.require_subcommand(1);

  std::string config_path, pdf_dir, out_dir;

  auto* stage =
      app.add_subcommand("stage", "decompress archives to local storage");
  stage->add_option("--config", config_path, "campaign config file");
  stage->add_option("--pdf-dir", pdf_dir, "directory of .zip archives");
  stage->add_option("--out-dir", out_dir, "output directory");

  std::size_t synth_n = 500;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "synth";
  double synth_hard = 0.15;
  bool synth_training = false;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--n", synth_n, "number of documents");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--hard-fraction", synth_hard, "share of hard documents");
  synth->add_flag("--training-data", synth_training,
                  "also emit regression.jsonl and pairs.jsonl");

  std::string reg_path, pairs_path, doc_reg_path, weights_out = "weights.bin";
  std::size_t train_dim = 16, train_buckets = 1u << 14, train_ngram = 2;
  training::TrainConfig tc;
  auto* train = app.add_subcommand("train", "three-stage predictor training");
  train->add_option("--config", config_path, "campaign config file");
  train->add_option("--regression", reg_path, "page-level regression JSONL")
      ->required();
  train->add_option("--pairs", pairs_path, "preference pairs JSONL")
      ->required();
  train->add_option(
      "--doc-regression", doc_reg_path,
      "document-level regression JSONL (defaults to --regression)");
  train->add_option("--out", weights_out, "weight file path");
  train->add_option("--dim", train_dim, "embedding dimension");
  train->add_option("--buckets", train_buckets, "hash bucket count (power of 2)");
  train->add_option("--ngram-max", train_ngram, "largest n-gram order");
  train->add_option("--lr-stage1", tc.lr_stage1, "stage 1 learning rate");
  train->add_option("--lr-dpo", tc.lr_dpo, "DPO learning rate");
  train->add_option("--lr-stage3", tc.lr_stage3, "stage 3 learning rate");
  train->add_option("--beta", tc.dpo_beta, "DPO temperature");
  train->add_option("--epochs-stage1", tc.epochs_stage1, "stage 1 epochs");
  train->add_option("--epochs-dpo", tc.epochs_dpo, "DPO epochs");
  train->add_option("--epochs-stage3", tc.epochs_stage3, "stage 3 epochs");
  train->add_option("--weight-decay", tc.weight_decay,
                    "ridge shrinkage for the regression stages");
  train->add_flag("--printed-dpo-form", tc.printed_dpo_form,
                  "use the as-printed DPO objective variant");

  std::string run_strategy, run_model;
  double run_alpha = -1.0;
  std::size_t run_workers = 0, run_batch = 0;
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "execute a parsing campaign");
  run->add_option("--config", config_path, "campaign config file")->required();
  run->add_option("--strategy", run_strategy,
                  "single:<parser> | adaparse_ft | adaparse_llm");
  run->add_option("--alpha", run_alpha, "heavy-parser budget fraction");
  run->add_option("--workers", run_workers, "workers per pool");
  run->add_option("--seed", run_seed, "campaign seed");
  run->add_option("--batch-size", run_batch, "planning batch size");
  run->add_option("--model", run_model, "predictor weights (adaparse_llm)");

  std::string eval_manifest, eval_preferences;
  auto* eval = app.add_subcommand("eval", "score a campaign manifest");
  eval->add_option("--config", config_path, "campaign config file")->required();
  eval->add_option("--manifest", eval_manifest, "manifest JSONL path");
  eval->add_option("--preferences", eval_preferences,
                   "preference records JSONL for win rates");

  std::string bench_workers = "1,2,4,8", bench_csv = "bench.csv", bench_svg;
  std::size_t bench_n = 400;
  double bench_spin = 2.0;
  auto* bench = app.add_subcommand("bench", "worker-scaling throughput sweep");
  bench->add_option("--config", config_path, "campaign config file");
  bench->add_option("--workers", bench_workers, "comma-separated worker counts");
  bench->add_option("--n", bench_n, "documents per sweep point");
  bench->add_option("--spin-ms", bench_spin, "CPU work per page (ms)");
  bench->add_option("--csv", bench_csv, "throughput CSV output");
  bench->add_option("--svg", bench_svg, "line plot output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stage->parsed()) return cmd_stage(config_path, pdf_dir, out_dir);
    if (synth->parsed())
      return cmd_synth(synth_n, synth_seed, synth_out, synth_hard,
                       synth_training);
    if (train->parsed())
      return cmd_train(config_path, reg_path, pairs_path, doc_reg_path,
                       weights_out, train_dim, train_buckets, train_ngram, tc);
    if (run->parsed())
      return cmd_run(config_path, run_strategy, run_alpha, run_workers,
                     run_seed, run_batch, run_model);
    if (eval->parsed())
      return cmd_eval(config_path, eval_manifest, eval_preferences);
    if (bench->parsed())
      return cmd_bench(config_path, bench_workers, bench_n, bench_spin,
                       bench_csv, bench_svg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
