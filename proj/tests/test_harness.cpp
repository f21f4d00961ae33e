#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adaparse/harness.hpp"

using namespace adaparse;
using namespace adaparse::harness;
namespace fs = std::filesystem;

namespace {

ExperimentSpec base_spec(std::uint64_t seed) {
  ExperimentSpec spec;
  spec.corpus_seed = seed;
  spec.corpus_size = 240;
  spec.batch_size = 48;
  spec.alpha = 0.25;
  spec.strategies = {"single:fastext",     "single:purepdf",
                     "single:ocrus",       "single:gridbot",
                     "single:markdown",    "single:visionparse",
                     "adaparse_llm"};
  return spec;
}

}  // namespace

TEST_CASE("unperturbed regime: oracle-guided routing beats every single parser") {
  const auto set = parsers::reference_parsers();
  const auto table = run_regime(base_spec(71), set);
  REQUIRE(table.rows.size() == 7);
  const auto& adaptive = table.row("adaparse_llm");
  for (const auto& row : table.rows) {
    if (row.strategy == "adaparse_llm") continue;
    INFO(row.strategy << " bleu=" << row.bleu << " adaptive=" << adaptive.bleu);
    REQUIRE(adaptive.bleu >= row.bleu);
  }
  // Strictly better than the best constituent.
  double best_single = 0.0;
  for (const auto& row : table.rows)
    if (row.strategy != "adaparse_llm") best_single = std::max(best_single, row.bleu);
  REQUIRE(adaptive.bleu > best_single);
  REQUIRE(adaptive.heavy_fraction <= 0.25);
}

TEST_CASE("degraded text layers: adaptive stays above extraction-only") {
  auto spec = base_spec(72);
  spec.alpha = 0.05;
  spec.strategies = {"single:fastext", "adaparse_llm"};
  // 15% of text layers replaced with scrambled output.
  spec.perturbation_plan = {
      {{corpus::PerturbMode::char_scramble, 0.6, 1234}, 0.15}};
  const auto set = parsers::reference_parsers();
  const auto table = run_regime(spec, set);
  const auto& cheap = table.row("single:fastext");
  const auto& adaptive = table.row("adaparse_llm");
  REQUIRE(adaptive.bleu >= cheap.bleu);
  REQUIRE(adaptive.heavy_fraction <= 0.05 + 1e-9);
}

TEST_CASE("alpha 0 degenerates to the cheap extractor row exactly") {
  auto spec = base_spec(73);
  spec.corpus_size = 120;
  spec.alpha = 0.0;
  spec.strategies = {"single:fastext", "adaparse_llm"};
  const auto set = parsers::reference_parsers();
  const auto table = run_regime(spec, set);
  const auto& cheap = table.row("single:fastext");
  const auto& adaptive = table.row("adaparse_llm");
  REQUIRE(adaptive.bleu == cheap.bleu);
  REQUIRE(adaptive.rouge == cheap.rouge);
  REQUIRE(adaptive.car == cheap.car);
  REQUIRE(adaptive.coverage == cheap.coverage);
  REQUIRE(adaptive.accepted_tokens == cheap.accepted_tokens);
  REQUIRE(adaptive.heavy_fraction == 0.0);
}

TEST_CASE("selection baselines order: best >= random >= worst") {
  corpus::Corpus docs(corpus::synth_corpus(150, corpus::SynthProfile{}, 99));
  const auto set = parsers::reference_parsers();
  const auto base = selection_baselines(docs, set, 5);
  REQUIRE(base.best >= base.random);
  REQUIRE(base.random >= base.worst);
  REQUIRE(base.best <= 1.0);
  REQUIRE(base.worst >= 0.0);
}

TEST_CASE("per-document best selection bounds every strategy row") {
  auto spec = base_spec(74);
  spec.corpus_size = 120;
  spec.strategies = {"single:fastext", "single:visionparse", "adaparse_llm"};
  const auto set = parsers::reference_parsers();
  const auto table = run_regime(spec, set);
  const auto docs = build_regime_corpus(spec);
  const auto base = selection_baselines(docs, set, 9);
  for (const auto& row : table.rows) {
    INFO(row.strategy);
    REQUIRE(base.best >= row.bleu - 1e-9);
  }
}

TEST_CASE("difficulty_rank orders by mean BLEU ascending") {
  // Hand-built corpus: one LaTeX-free document every parser nails, two
  // LaTeX-dense ones the extractors butcher.
  std::vector<corpus::DocumentRecord> records(3);
  const std::string easy =
      "plain readable words with no markup at all just simple prose through";
  const std::string hard =
      "\\alpha \\frac{x}{y} \\sum_{i=1}^{n} \\mathbb{R} \\nabla \\epsilon "
      "\\partial_{t} \\alpha \\frac{x}{y} \\gamma";
  records[0].doc_id = "easy-doc";
  records[0].pages = {easy};
  records[0].groundtruth = easy;
  records[1].doc_id = "hard-doc-a";
  records[1].pages = {hard};
  records[1].groundtruth = hard;
  records[2].doc_id = "hard-doc-b";
  records[2].pages = {hard + " extra"};
  records[2].groundtruth = hard + " extra";
  for (auto& r : records) r.metadata.page_count = 1;
  corpus::Corpus docs(std::move(records));

  parsers::ParserProfile clean = parsers::perfect_mock("clean");
  parsers::ParserProfile flattener = parsers::perfect_mock("flattener");
  flattener.error_model.reads_text_layer = true;
  flattener.error_model.perturbations = {
      {corpus::PerturbMode::latex_flatten, 0.9, 3}};

  const auto ranking = difficulty_rank(docs, {clean, flattener});
  REQUIRE(ranking.entries.size() == 3);
  // The easiest document ranks last.
  REQUIRE(ranking.entries.back().doc_id == "easy-doc");
  REQUIRE(ranking.entries.back().mean_bleu == 1.0);
  // Ascending mean BLEU.
  for (std::size_t i = 1; i < ranking.entries.size(); ++i)
    REQUIRE(ranking.entries[i - 1].mean_bleu <= ranking.entries[i].mean_bleu);

  SECTION("single-document corpus ranks it first") {
    corpus::Corpus one(corpus::synth_corpus(1, corpus::SynthProfile{}, 8));
    const auto r = difficulty_rank(one, {clean});
    REQUIRE(r.entries.size() == 1);
  }

  SECTION("rank order is invariant under adding a constant-quality parser") {
    // A parser that scores identically on every document shifts every mean
    // by the same amount.
    parsers::ParserProfile blank = parsers::perfect_mock("blank");
    blank.error_model.reads_text_layer = true;
    blank.error_model.perturbations = {
        {corpus::PerturbMode::page_drop, 1.0, 1}};  // empty output: BLEU 0
    const auto with_blank = difficulty_rank(docs, {clean, flattener, blank});
    REQUIRE(with_blank.entries.size() == ranking.entries.size());
    for (std::size_t i = 0; i < ranking.entries.size(); ++i)
      REQUIRE(with_blank.entries[i].doc_id == ranking.entries[i].doc_id);
  }
}

TEST_CASE("difficulty_rank_scores errors on a missing parse") {
  std::map<std::pair<std::string, std::string>, double> scores;
  scores[{"d1", "p1"}] = 0.5;
  scores[{"d1", "p2"}] = 0.7;
  scores[{"d2", "p1"}] = 0.9;  // (d2, p2) missing
  REQUIRE_THROWS_WITH(
      difficulty_rank_scores({"d1", "d2"}, {"p1", "p2"}, scores),
      Catch::Matchers::ContainsSubstring("missing parse"));
  REQUIRE_THROWS_AS(difficulty_rank_scores({}, {"p1"}, {}),
                    std::invalid_argument);
}

TEST_CASE("csv emission") {
  const auto dir = fs::temp_directory_path() / "adaparse_harness_csv";
  fs::create_directories(dir);

  corpus::Corpus docs(corpus::synth_corpus(10, corpus::SynthProfile{}, 2));
  const auto set = parsers::reference_parsers();
  const auto ranking = difficulty_rank(docs, set);
  const auto csv_path = (dir / "difficulty.csv").string();
  write_difficulty_csv(csv_path, ranking);
  std::ifstream in(csv_path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header.rfind("rank,doc_id,mean_bleu", 0) == 0);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) lines += !line.empty();
  REQUIRE(lines == docs.size());

  ExperimentSpec spec = base_spec(3);
  spec.corpus_size = 40;
  spec.strategies = {"single:fastext"};
  const auto table = run_regime(spec, set);
  const auto regime_path = (dir / "regime.csv").string();
  write_regime_csv(regime_path, table);
  std::ifstream rin(regime_path);
  std::getline(rin, header);
  REQUIRE(header ==
          "strategy,coverage,bleu,rouge,car,accepted_tokens,heavy_fraction");
}

TEST_CASE("experiment spec validation") {
  ExperimentSpec spec = base_spec(1);
  spec.perturbation_plan = {
      {{corpus::PerturbMode::word_substitution, 0.2, 1}, 1.5}};
  REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);
}
