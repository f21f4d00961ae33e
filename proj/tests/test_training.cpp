#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/parsers.hpp"
#include "adaparse/training.hpp"

using namespace adaparse;
using namespace adaparse::selector;
using namespace adaparse::training;

namespace {

EmbeddingConfig small_cfg() {
  EmbeddingConfig cfg;
  cfg.ngram_min = 1;
  cfg.ngram_max = 2;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 4;
  return cfg;
}

// Tokens the LaTeX atoms of the synthetic generator reduce to.
const std::set<std::string>& latex_tokens() {
  static const std::set<std::string> toks = [] {
    std::set<std::string> s;
    for (auto atom : corpus::detail::synth_latex_atoms())
      for (const auto& t : tokenize(atom)) s.insert(t);
    return s;
  }();
  return toks;
}

double latex_share(const std::string& text) {
  const auto toks = tokenize(text);
  if (toks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : toks) hits += latex_tokens().count(t);
  return static_cast<double>(hits) / static_cast<double>(toks.size());
}

// Planted linear fixture: targets are exactly linear in the unigram share
// of LaTeX tokens, which the bag-of-unigrams model can represent.
struct PlantedData {
  std::vector<RegressionExample> train, held_out;
};

PlantedData make_planted(std::size_t n, std::uint64_t seed, std::size_t m) {
  corpus::SynthProfile profile;
  profile.hard_fraction = 0.5;  // wide spread of LaTeX density
  profile.pages_min = profile.pages_max = 1;
  auto docs = corpus::synth_corpus(n, profile, seed);
  PlantedData out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    RegressionExample ex;
    ex.input_text = docs[i].pages[0];
    const double s = latex_share(ex.input_text);
    for (std::size_t j = 0; j < m; ++j) {
      const double coef = (j % 2 == 0 ? -0.8 : 0.6) * (1.0 + 0.2 * j);
      ex.targets.push_back(0.55 + coef * (s - 0.15));
    }
    (i % 5 == 4 ? out.held_out : out.train).push_back(std::move(ex));
  }
  return out;
}

// Central finite difference on one parameter coordinate.
template <typename LossFn>
double fd_gradient(PredictorModel& model, double* coord, LossFn&& loss) {
  const double h = 1e-5;
  const double orig = *coord;
  *coord = orig + h;
  const double up = loss(model);
  *coord = orig - h;
  const double down = loss(model);
  *coord = orig;
  return (up - down) / (2.0 * h);
}

void check_close(double analytic, double fd) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
  REQUIRE(std::abs(analytic - fd) / denom <= 1e-4);
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Preference fixture: preferred sides carry a marker token.
std::vector<PreferencePair> marker_pairs(std::size_t n, std::uint64_t seed) {
  corpus::SynthProfile profile;
  profile.pages_min = profile.pages_max = 1;
  profile.words_per_page_min = 25;
  profile.words_per_page_max = 50;
  auto docs = corpus::synth_corpus(2 * n, profile, seed);
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({docs[2 * i].pages[0] + " veritas",
                     docs[2 * i + 1].pages[0], "pg" + std::to_string(i)});
  }
  return pairs;
}

}  // namespace

TEST_CASE("dpo_loss is ln 2 when the scorer equals the reference") {
  auto model = init_model(small_cfg(), {"a", "b"}, 3, 0.5);
  model.stage = 1;
  // Give the preference head real weights so scores are not trivially 0.5.
  Rng rng(17);
  for (auto& w : model.pref_w) w = rng.uniform() - 0.5;
  model.pref_b = 0.2;
  const auto reference = model;
  for (double beta : {0.05, 0.1, 1.0, 7.5}) {
    for (const char* text : {"alpha beta gamma", "completely different words",
                             "energy spectrum of the sample"}) {
      PreferencePair p{text, std::string(text) + " more", "pg"};
      REQUIRE_THAT(dpo_loss(model, reference, p, beta),
                   Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
    }
  }
}

TEST_CASE("dpo_loss closed-form anchor: margin ln 2 at beta 1") {
  // Construct scores directly: preferred logit 0 (score 1/2), rejected
  // logit ln(1/3) (score 1/4), reference head zeroed (score 1/2 always).
  // Log-ratio margin = ln 2, so loss = -log sigma(ln 2) = ln(3/2).
  EmbeddingConfig cfg = small_cfg();
  cfg.ngram_min = cfg.ngram_max = 1;
  cfg.dim = 1;
  auto model = init_model(cfg, {"a"}, 0);
  const auto b_pos = fnv1a64("preferredtoken") & (cfg.bucket_count - 1);
  const auto b_neg = fnv1a64("rejectedtoken") & (cfg.bucket_count - 1);
  REQUIRE(b_pos != b_neg);
  std::fill(model.embedding.begin(), model.embedding.end(), 0.0);
  model.embedding[b_pos] = 0.0;
  model.embedding[b_neg] = std::log(1.0 / 3.0);
  model.pref_w = {1.0};
  model.pref_b = 0.0;
  auto reference = model;
  reference.pref_w = {0.0};  // score 1/2 on everything

  PreferencePair pair{"preferredtoken", "rejectedtoken", "pg"};
  REQUIRE_THAT(dpo_loss(model, reference, pair, 1.0),
               Catch::Matchers::WithinAbs(std::log(1.5), 1e-12));

  // Saturation: scaling the margin up drives the loss toward zero.
  model.pref_w = {40.0};
  REQUIRE(dpo_loss(model, reference, pair, 1.0) < 1e-6);
}

TEST_CASE("regression and dpo gradients match central finite differences") {
  corpus::SynthProfile profile;
  profile.pages_min = profile.pages_max = 1;
  profile.words_per_page_min = 20;
  profile.words_per_page_max = 40;

  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    auto model = init_model(small_cfg(), {"p0", "p1", "p2"}, 100 + trial, 0.4);
    Rng rng(mix64(trial));
    for (auto& w : model.pref_w) w = rng.uniform() - 0.5;
    model.pref_b = rng.uniform() - 0.5;

    auto docs = corpus::synth_corpus(6, profile, 500 + trial);
    std::vector<RegressionExample> data;
    for (const auto& d : docs) {
      RegressionExample ex;
      ex.input_text = d.pages[0];
      for (int j = 0; j < 3; ++j) ex.targets.push_back(rng.uniform());
      data.push_back(std::move(ex));
    }
    std::vector<PreferencePair> pairs;
    for (std::size_t i = 0; i + 1 < docs.size(); i += 2)
      pairs.push_back(
          {docs[i].pages[0], docs[i + 1].pages[0], "pg" + std::to_string(i)});
    const auto reference = [&] {
      auto r = model;
      for (auto& w : r.pref_w) w *= 0.7;
      return r;
    }();

    const auto reg_g = regression_gradients(model, data);
    const auto dpo_g = dpo_gradients(model, reference, pairs, 0.3);

    // 10 coordinates for each loss: touched embedding rows plus head/pref.
    const auto feats = selector::detail::feature_counts(data[0].input_text,
                                                        model.embedding_cfg);
    const std::size_t dim = model.embedding_cfg.dim;
    std::vector<std::size_t> reg_idx;
    for (std::size_t c = 0; c < 5 && c < feats.items.size(); ++c)
      reg_idx.push_back(feats.items[c].first * dim + (c % dim));
    for (std::size_t idx : reg_idx) {
      const double fd =
          fd_gradient(model, &model.embedding[idx],
                      [&](const PredictorModel& m) { return regression_loss(m, data); });
      check_close(reg_g.embedding[idx], fd);
    }
    for (std::size_t idx : {std::size_t{2}, dim + 1, dim * 2}) {
      const double fd =
          fd_gradient(model, &model.head_w[idx],
                      [&](const PredictorModel& m) { return regression_loss(m, data); });
      check_close(reg_g.head_w[idx], fd);
    }
    for (std::size_t idx : {std::size_t{0}, std::size_t{2}}) {
      const double fd =
          fd_gradient(model, &model.head_b[idx],
                      [&](const PredictorModel& m) { return regression_loss(m, data); });
      check_close(reg_g.head_b[idx], fd);
    }

    const auto pf = selector::detail::feature_counts(pairs[0].preferred_text,
                                                     model.embedding_cfg);
    std::size_t checked = 0;
    for (std::size_t c = 0; c < 5 && c < pf.items.size(); ++c) {
      const std::size_t idx = pf.items[c].first * dim + (c % dim);
      const double fd = fd_gradient(model, &model.embedding[idx],
                                    [&](const PredictorModel& m) {
                                      return mean_dpo_loss(m, reference, pairs, 0.3);
                                    });
      check_close(dpo_g.embedding[idx], fd);
      ++checked;
    }
    for (std::size_t k = 0; k < dim; ++k) {
      const double fd = fd_gradient(model, &model.pref_w[k],
                                    [&](const PredictorModel& m) {
                                      return mean_dpo_loss(m, reference, pairs, 0.3);
                                    });
      check_close(dpo_g.pref_w[k], fd);
      ++checked;
    }
    {
      const double fd = fd_gradient(model, &model.pref_b,
                                    [&](const PredictorModel& m) {
                                      return mean_dpo_loss(m, reference, pairs, 0.3);
                                    });
      check_close(dpo_g.pref_b, fd);
      ++checked;
    }
    REQUIRE(checked >= 10);

    // The printed objective variant differentiates correctly too.
    const auto printed_g = dpo_gradients(model, reference, pairs, 0.3, true);
    const double fd_printed =
        fd_gradient(model, &model.pref_b, [&](const PredictorModel& m) {
          return mean_dpo_loss(m, reference, pairs, 0.3, true);
        });
    check_close(printed_g.pref_b, fd_printed);
  }
}

TEST_CASE("train_regression basics") {
  TrainConfig cfg;
  cfg.epochs_stage1 = 400;
  cfg.lr_stage1 = 0.8;

  SECTION("memorizes a single example") {
    auto model = init_model(small_cfg(), {"a", "b"}, 1);
    std::vector<RegressionExample> one = {
        {"alpha beta gamma delta", {0.3, 0.9}}};
    model = train_regression(std::move(model), one, cfg);
    REQUIRE(model.stage == 1);
    REQUIRE(regression_loss(model, one) < 1e-4);
  }

  SECTION("zero epochs leaves the model unchanged") {
    auto model = init_model(small_cfg(), {"a", "b"}, 2);
    const auto before = model;
    TrainConfig none = cfg;
    none.epochs_stage1 = 0;
    model =
        train_regression(std::move(model), {{"text here", {0.1, 0.2}}}, none);
    REQUIRE(model.embedding == before.embedding);
    REQUIRE(model.head_w == before.head_w);
    REQUIRE(model.stage == 1);
  }

  SECTION("dimension mismatch is an error") {
    auto model = init_model(small_cfg(), {"a", "b"}, 3);
    REQUIRE_THROWS_AS(
        train_regression(std::move(model), {{"text", {0.1, 0.2, 0.3}}}, cfg),
        std::invalid_argument);
  }

  SECTION("empty dataset is an error") {
    auto model = init_model(small_cfg(), {"a", "b"}, 4);
    REQUIRE_THROWS_AS(train_regression(std::move(model), {}, cfg),
                      std::invalid_argument);
  }
}

TEST_CASE("full-batch loss is non-increasing per epoch") {
  auto data = make_planted(60, 11, 2).train;
  auto model = init_model(small_cfg(), {"a", "b"}, 21);
  double prev = regression_loss(model, data);
  TrainConfig cfg;
  cfg.lr_stage1 = 0.05;  // small enough for monotone descent
  cfg.epochs_stage1 = 1;
  for (int epoch = 0; epoch < 40; ++epoch) {
    model = train_regression(std::move(model), data, cfg);
    const double loss = regression_loss(model, data);
    REQUIRE(loss <= prev + 1e-6);
    prev = loss;
  }
}

TEST_CASE("planted linear targets are recovered with high held-out R2") {
  const auto planted = make_planted(500, 77, 3);
  EmbeddingConfig cfg;
  cfg.ngram_min = cfg.ngram_max = 1;
  cfg.bucket_count = 1u << 14;
  cfg.dim = 8;
  auto model = init_model(cfg, {"p0", "p1", "p2"}, 5);
  TrainConfig tc;
  tc.lr_stage1 = 0.7;
  tc.epochs_stage1 = 800;
  model = train_regression(std::move(model), planted.train, tc);
  const auto r2 = r2_columns(model, planted.held_out);
  for (double v : r2) REQUIRE(v >= 0.9);
}

TEST_CASE("train_dpo learns a planted preference signal") {
  auto train_pairs = marker_pairs(200, 1001);
  auto held_out = marker_pairs(80, 2002);

  auto model = init_model(small_cfg(), {"a", "b"}, 31);
  model.stage = 1;
  const auto reference = model;
  TrainConfig cfg;
  cfg.epochs_dpo = 400;
  cfg.lr_dpo = 8.0;
  cfg.dpo_beta = 0.5;

  const double initial =
      mean_dpo_loss(model, reference, train_pairs, cfg.dpo_beta);
  REQUIRE_THAT(initial, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  const double initial_acc = ranking_accuracy(model, train_pairs);

  model = train_dpo(std::move(model), train_pairs, cfg);
  REQUIRE(model.stage == 2);
  REQUIRE(mean_dpo_loss(model, reference, train_pairs, cfg.dpo_beta) <
          std::log(2.0));
  REQUIRE(ranking_accuracy(model, train_pairs) >= initial_acc);
  REQUIRE(ranking_accuracy(model, held_out) >= 0.9);
}

TEST_CASE("train_dpo stage gating and degenerate inputs") {
  auto model = init_model(small_cfg(), {"a", "b"}, 1);
  TrainConfig cfg;

  SECTION("zero epochs: model unchanged, loss stays ln 2") {
    model.stage = 1;
    const auto before = model;
    TrainConfig none = cfg;
    none.epochs_dpo = 0;
    auto pairs = marker_pairs(5, 3);
    model = train_dpo(std::move(model), pairs, none);
    REQUIRE(model.embedding == before.embedding);
    REQUIRE(model.pref_w == before.pref_w);
    REQUIRE_THAT(mean_dpo_loss(model, before, pairs, cfg.dpo_beta),
                 Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  }

  SECTION("rejects a model that did not come from stage 1") {
    model.stage = 0;
    REQUIRE_THROWS_AS(train_dpo(std::move(model), marker_pairs(3, 4), cfg),
                      std::invalid_argument);
  }

  SECTION("rejects stage-2 reuse") {
    model.stage = 2;
    REQUIRE_THROWS_AS(train_dpo(std::move(model), marker_pairs(3, 4), cfg),
                      std::invalid_argument);
  }

  SECTION("rejects empty pair lists and identical sides") {
    model.stage = 1;
    REQUIRE_THROWS_AS(train_dpo(std::move(model), {}, cfg),
                      std::invalid_argument);
    auto m2 = init_model(small_cfg(), {"a", "b"}, 2);
    m2.stage = 1;
    REQUIRE_THROWS_AS(
        train_dpo(std::move(m2), {{"same text", "same text", "pg"}}, cfg),
        std::invalid_argument);
  }
}

TEST_CASE("three-step pipeline: order enforced, fit preserved, bit-stable") {
  const auto planted = make_planted(400, 99, 2);
  auto pairs = marker_pairs(150, 3003);

  EmbeddingConfig cfg;
  cfg.ngram_min = cfg.ngram_max = 1;
  cfg.bucket_count = 1u << 14;
  cfg.dim = 8;
  TrainConfig tc;
  tc.lr_stage1 = 0.7;
  tc.epochs_stage1 = 800;
  tc.lr_dpo = 8.0;
  tc.epochs_dpo = 400;
  tc.dpo_beta = 0.5;
  tc.lr_stage3 = 0.5;
  tc.epochs_stage3 = 300;

  auto run_pipeline = [&] {
    auto model = init_model(cfg, {"p0", "p1"}, 7);
    model = train_regression(std::move(model), planted.train, tc);
    const auto r2 = r2_columns(model, planted.held_out);
    const double r2_stage1 = (r2[0] + r2[1]) / 2.0;
    model = train_dpo(std::move(model), pairs, tc);
    model = train_final(std::move(model), planted.train, tc);
    return std::pair{std::move(model), r2_stage1};
  };

  auto [model, r2_stage1] = run_pipeline();
  REQUIRE(model.stage == 3);
  const auto r2_final = r2_columns(model, planted.held_out);
  const double r2_stage3 = (r2_final[0] + r2_final[1]) / 2.0;
  REQUIRE(r2_stage3 >= r2_stage1 - 0.05);  // DPO must not destroy the fit
  REQUIRE(r2_stage3 >= 0.3);

  SECTION("train_final refuses to skip DPO") {
    auto m = init_model(cfg, {"p0", "p1"}, 7);
    m = train_regression(std::move(m), planted.train, tc);
    REQUIRE_THROWS_AS(train_final(std::move(m), planted.train, tc),
                      std::invalid_argument);
  }

  SECTION("lr_stage3 = 0 leaves the stage-2 model weights unchanged") {
    auto m = init_model(cfg, {"p0", "p1"}, 7);
    m = train_regression(std::move(m), planted.train, tc);
    m = train_dpo(std::move(m), pairs, tc);
    const auto before = m;
    TrainConfig frozen = tc;
    frozen.lr_stage3 = 0.0;
    m = train_final(std::move(m), planted.train, frozen);
    REQUIRE(m.embedding == before.embedding);
    REQUIRE(m.head_w == before.head_w);
    REQUIRE(m.stage == 3);
  }

  SECTION("two seeded runs write bit-identical weight files") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "adaparse_test_pipeline";
    fs::create_directories(dir);
    auto [m2, unused] = run_pipeline();
    (void)unused;
    const auto p1 = (dir / "run1.bin").string();
    const auto p2 = (dir / "run2.bin").string();
    save_model(model, p1);
    save_model(m2, p2);
    REQUIRE(read_bytes(p1) == read_bytes(p2));
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.lr_stage3 = cfg.lr_stage1;  // must be strictly lower
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.dpo_beta = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  REQUIRE_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("dataset files round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "adaparse_test_datasets";
  fs::create_directories(dir);

  std::vector<RegressionExample> data = {{"first text", {0.25, 0.75}},
                                         {"second text", {1.0, 0.0}}};
  const auto reg_path = (dir / "reg.jsonl").string();
  save_regression_file(reg_path, data);
  const auto loaded = load_regression_file(reg_path);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded[1].input_text == "second text");
  REQUIRE(loaded[1].targets == std::vector<double>{1.0, 0.0});

  std::vector<PreferencePair> pairs = {{"good parse", "bad parse", "pg7"}};
  const auto pref_path = (dir / "pref.jsonl").string();
  save_preference_file(pref_path, pairs);
  const auto loaded_pairs = load_preference_file(pref_path);
  REQUIRE(loaded_pairs.size() == 1);
  REQUIRE(loaded_pairs[0].page_id == "pg7");
  REQUIRE(loaded_pairs[0].preferred_text == "good parse");
}

TEST_CASE("predictor learns real mock accuracies from extractions") {
  // Targets are the reference parsers' true BLEU scores; the model reads
  // only the default extraction. Held-out R2 for the two routed parsers
  // (default and heavy roles) must clear 0.3.
  const auto set = parsers::reference_parsers();
  const auto& fastext = parsers::find_parser(set, "fastext");
  auto docs = corpus::synth_corpus(1200, corpus::SynthProfile{}, 880);
  std::vector<RegressionExample> train, held_out;
  std::vector<std::string> ids;
  for (const auto& p : set) ids.push_back(p.parser_id);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    RegressionExample ex;
    ex.input_text = parsers::parse_first_page(fastext, docs[i]);
    for (const auto& p : set) {
      const auto r = parsers::parse(p, docs[i]);
      ex.targets.push_back(metrics::bleu(r.text, *docs[i].groundtruth));
    }
    (i % 5 == 4 ? held_out : train).push_back(std::move(ex));
  }
  EmbeddingConfig cfg;
  cfg.ngram_max = 1;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 8;
  TrainConfig tc;
  tc.lr_stage1 = 0.7;
  tc.epochs_stage1 = 3000;
  tc.weight_decay = 2e-4;
  auto model = init_model(cfg, ids, 7);
  model = train_regression(std::move(model), train, tc);
  const auto r2 = r2_columns(model, held_out);
  const std::size_t di = model.parser_index("fastext");
  const std::size_t hi = model.parser_index("visionparse");
  INFO("fastext R2=" << r2[di] << " visionparse R2=" << r2[hi]);
  REQUIRE(r2[di] >= 0.3);
  REQUIRE(r2[hi] >= 0.3);
}

TEST_CASE("cls2 training separates a planted metadata rule") {
  // Documents authored before 2000 are labeled improvement-likely.
  auto docs = corpus::synth_corpus(600, corpus::SynthProfile{}, 404);
  std::vector<Cls2Example> train, held_out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Cls2Example ex{docs[i].metadata, docs[i].metadata.year < 2000};
    (i % 4 == 3 ? held_out : train).push_back(std::move(ex));
  }
  const auto model = train_cls2(train, 1.0, 400);
  std::size_t correct = 0;
  for (const auto& ex : held_out)
    correct +=
        selector::cls2_improvement(ex.metadata, model) == ex.improvement;
  REQUIRE(static_cast<double>(correct) /
              static_cast<double>(held_out.size()) >=
          0.9);
}
