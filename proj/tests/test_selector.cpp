#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/selector.hpp"

using namespace adaparse;
using namespace adaparse::selector;

namespace {

// Long enough and alphabetic enough to pass CLS I under defaults.
std::string valid_page() {
  std::string s;
  for (int i = 0; i < 24; ++i) s += "clean readable words here ";
  return s;
}

struct PlanOutcome {
  double total = 0.0;
  std::size_t heavy = 0;
};

// Brute-force oracle: best expected-accuracy sum over all assignments with
// at most cap heavy routings.
PlanOutcome brute_force_best(const std::vector<std::array<double, 2>>& acc,
                             std::size_t cap) {
  const std::size_t k = acc.size();
  PlanOutcome best;
  best.total = -1.0;
  for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
    const auto heavy = static_cast<std::size_t>(std::popcount(mask));
    if (heavy > cap) continue;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += acc[i][(mask >> i) & 1u];
    if (total > best.total) best = {total, heavy};
  }
  return best;
}

std::vector<corpus::DocumentRecord> routing_docs(std::size_t k) {
  std::vector<corpus::DocumentRecord> docs(k);
  for (std::size_t i = 0; i < k; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "d%03zu", i);
    docs[i].doc_id = buf;
    docs[i].pages = {valid_page()};
  }
  return docs;
}

std::vector<BatchItem> items_for(
    const std::vector<corpus::DocumentRecord>& docs,
    const std::vector<std::array<double, 2>>& acc) {
  std::vector<BatchItem> items(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    items[i].doc = &docs[i];
    items[i].first_page_text = docs[i].pages[0];
    items[i].predicted = {acc[i][0], acc[i][1]};
  }
  return items;
}

}  // namespace

TEST_CASE("text_stats") {
  const auto empty = text_stats("");
  REQUIRE(empty.char_count == 0);
  REQUIRE(empty.word_count == 0);
  REQUIRE(empty.alpha_ratio == 0.0);
  REQUIRE(empty.whitespace_ratio == 0.0);

  const auto s = text_stats("ab cd");
  REQUIRE(s.char_count == 5);
  REQUIRE(s.word_count == 2);
  REQUIRE_THAT(s.whitespace_ratio, Catch::Matchers::WithinAbs(0.2, 1e-12));
  REQUIRE_THAT(s.alpha_ratio, Catch::Matchers::WithinAbs(0.8, 1e-12));
  REQUIRE_THAT(s.mean_word_len, Catch::Matchers::WithinAbs(2.0, 1e-12));

  const std::string half(std::string(100, 'a') + std::string(100, '\\'));
  REQUIRE_THAT(text_stats(half).backslash_density,
               Catch::Matchers::WithinAbs(0.5, 1e-12));

  REQUIRE(text_stats("x \xEF\xBF\xBD y \xEF\xBF\xBD").replacement_char_count ==
          2);
}

TEST_CASE("cls1_validity") {
  Cls1Thresholds thr;
  REQUIRE_FALSE(cls1_validity(text_stats(""), thr));

  // Clean synthetic pages are almost always valid.
  auto docs = corpus::synth_corpus(200, corpus::SynthProfile{}, 3);
  std::size_t valid = 0;
  for (const auto& d : docs)
    valid += cls1_validity(text_stats(d.pages[0]), thr);
  REQUIRE(static_cast<double>(valid) / 200.0 >= 0.99);

  // Heavily scrambled pages are not: garbage glyphs crush the alpha ratio
  // and pile up replacement characters.
  std::size_t still_valid = 0;
  for (const auto& d : docs) {
    corpus::PerturbationSpec spec{corpus::PerturbMode::char_scramble, 0.8, 911};
    still_valid +=
        cls1_validity(text_stats(corpus::perturb(d.pages[0], spec)), thr);
  }
  REQUIRE(still_valid == 0);
}

TEST_CASE("cls2_improvement") {
  corpus::DocumentMetadata meta;
  meta.authoring_tool = "legacy-ocr";
  meta.year = 1990;
  meta.page_count = 3;
  meta.publisher = "aurora-press";
  meta.category = "physics";
  meta.format_version = "1.2";

  SECTION("all-zero weights never predict improvement") {
    Cls2Model zero;
    zero.tool_vocab = {{"legacy-ocr", 0}};
    zero.weights.assign(zero.feature_count(), 0.0);
    REQUIRE(zero.score(meta) == 0.5);
    REQUIRE_FALSE(cls2_improvement(meta, zero));
  }

  SECTION("a +10 weight on the authoring tool triggers routing") {
    Cls2Model m;
    m.tool_vocab = {{"legacy-ocr", 0}};
    m.weights.assign(m.feature_count(), 0.0);
    m.weights[3 + 1] = 10.0;  // one-hot slot for legacy-ocr (0 is OOV)
    REQUIRE(cls2_improvement(meta, m));
    meta.authoring_tool = "textpress-3";  // unseen: lands in OOV, no error
    REQUIRE_FALSE(cls2_improvement(meta, m));
  }
}

TEST_CASE("embed") {
  EmbeddingConfig cfg;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 4;
  auto model = init_model(cfg, {"a", "b"}, 42);

  SECTION("empty text embeds to zero") {
    const auto e = embed(model, "");
    for (double v : e) REQUIRE(v == 0.0);
  }

  SECTION("deterministic") {
    REQUIRE(embed(model, "some text") == embed(model, "some text"));
  }

  SECTION("bag property: unigram order never matters") {
    EmbeddingConfig uni = cfg;
    uni.ngram_min = uni.ngram_max = 1;
    auto m1 = init_model(uni, {"a"}, 7);
    REQUIRE(embed(m1, "alpha beta gamma") == embed(m1, "gamma alpha beta"));
  }

  SECTION("config validation") {
    EmbeddingConfig bad = cfg;
    bad.bucket_count = 1000;  // not a power of two
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.ngram_min = 3;
    bad.ngram_max = 2;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("predict_accuracy") {
  EmbeddingConfig cfg;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 4;
  auto model = init_model(cfg, {"p0", "p1", "p2"}, 9);

  SECTION("zero-weight head returns the clamped bias") {
    model.head_b = {0.25, 1.75, -0.5};
    const auto pred = predict_accuracy(model, "whatever text");
    REQUIRE(pred == std::vector<double>{0.25, 1.0, 0.0});
  }

  SECTION("pure function of (model, text)") {
    const auto a = predict_accuracy(model, "some page text");
    const auto b = predict_accuracy(model, "some page text");
    REQUIRE(a == b);
  }
}

TEST_CASE("weight file round trip is bit-exact") {
  namespace fs = std::filesystem;
  EmbeddingConfig cfg;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 3;
  auto model = init_model(cfg, {"x", "y"}, 123, 0.5);
  model.stage = 1;
  model.pref_b = 0.125;

  const auto dir = fs::temp_directory_path() / "adaparse_test_weights";
  fs::create_directories(dir);
  const auto p1 = (dir / "m1.bin").string();
  const auto p2 = (dir / "m2.bin").string();
  save_model(model, p1);
  const auto loaded = load_model(p1);
  REQUIRE(loaded.stage == 1);
  REQUIRE(loaded.m == 2);
  REQUIRE(loaded.parser_ids == model.parser_ids);
  REQUIRE(loaded.embedding == model.embedding);
  REQUIRE(loaded.head_w == model.head_w);
  REQUIRE(loaded.pref_b == model.pref_b);
  save_model(loaded, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  REQUIRE(b1 == b2);

  REQUIRE_THROWS_AS(load_model((dir / "missing.bin").string()),
                    std::runtime_error);
}

TEST_CASE("route_ft") {
  corpus::DocumentRecord doc;
  doc.doc_id = "d1";
  doc.pages = {valid_page()};
  doc.metadata.authoring_tool = "legacy-ocr";
  ParserRoles roles{"cheap", "heavy"};
  Cls1Thresholds cls1;
  Cls2Model cls2;
  cls2.tool_vocab = {{"legacy-ocr", 0}};
  cls2.weights.assign(cls2.feature_count(), 0.0);

  SECTION("empty extraction goes heavy at CLS I") {
    const auto d = route_ft(doc, text_stats(""), cls1, cls2, roles);
    REQUIRE(d.stage == RouteStage::cls1_invalid);
    REQUIRE(d.chosen_parser == "heavy");
  }

  SECTION("clean text, no improvement: default accepted") {
    const auto d = route_ft(doc, text_stats(valid_page()), cls1, cls2, roles);
    REQUIRE(d.stage == RouteStage::cls2_accept);
    REQUIRE(d.chosen_parser == "cheap");
  }

  SECTION("clean text, improvement likely: heavy") {
    cls2.weights[3 + 1] = 10.0;
    const auto d = route_ft(doc, text_stats(valid_page()), cls1, cls2, roles);
    REQUIRE(d.stage == RouteStage::cls3_routed);
    REQUIRE(d.chosen_parser == "heavy");
  }
}

TEST_CASE("route_batch hand example") {
  // k=4, alpha=0.5 (2 slots), improvements {0.3, 0.2, -0.1, 0.4}:
  // documents 0 and 3 go heavy.
  auto docs = routing_docs(4);
  std::vector<std::array<double, 2>> acc = {
      {0.5, 0.8}, {0.5, 0.7}, {0.5, 0.4}, {0.5, 0.9}};
  ParserRoles roles{"cheap", "heavy"};
  const auto decisions =
      route_batch(items_for(docs, acc), 0, 1, 0.5, Cls1Thresholds{}, roles);
  REQUIRE(decisions.size() == 4);
  REQUIRE(decisions[0].chosen_parser == "heavy");
  REQUIRE(decisions[1].chosen_parser == "cheap");
  REQUIRE(decisions[2].chosen_parser == "cheap");
  REQUIRE(decisions[3].chosen_parser == "heavy");
}

TEST_CASE("route_batch degenerate budgets and negative improvements") {
  auto docs = routing_docs(6);
  std::vector<std::array<double, 2>> positive(6, {0.4, 0.9});
  ParserRoles roles{"cheap", "heavy"};

  // alpha = 0: nothing goes heavy no matter the predictions.
  for (const auto& d : route_batch(items_for(docs, positive), 0, 1, 0.0,
                                   Cls1Thresholds{}, roles))
    REQUIRE(d.chosen_parser == "cheap");

  // All improvements negative: nothing goes heavy despite free slots.
  std::vector<std::array<double, 2>> negative(6, {0.9, 0.4});
  for (const auto& d : route_batch(items_for(docs, negative), 0, 1, 1.0,
                                   Cls1Thresholds{}, roles))
    REQUIRE(d.chosen_parser == "cheap");

  REQUIRE_THROWS_AS(route_batch(items_for(docs, positive), 0, 1, 1.5,
                                Cls1Thresholds{}, roles),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      route_batch({}, 0, 1, 0.5, Cls1Thresholds{}, ParserRoles{"c", "h"}),
      std::invalid_argument);
}

TEST_CASE("route_batch is invariant to input order") {
  Rng rng(0x5e1ec7ULL);
  auto docs = routing_docs(16);
  std::vector<std::array<double, 2>> acc(16);
  for (auto& a : acc) a = {rng.uniform(), rng.uniform()};
  ParserRoles roles{"cheap", "heavy"};
  const auto base =
      route_batch(items_for(docs, acc), 0, 1, 0.3, Cls1Thresholds{}, roles);
  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    auto items = items_for(docs, acc);
    rng.shuffle(items);
    const auto again =
        route_batch(std::move(items), 0, 1, 0.3, Cls1Thresholds{}, roles);
    REQUIRE(again.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      REQUIRE(again[i].doc_id == base[i].doc_id);
      REQUIRE(again[i].chosen_parser == base[i].chosen_parser);
      REQUIRE(again[i].stage == base[i].stage);
    }
  }
}

TEST_CASE("invalid documents consume budget slots first") {
  auto docs = routing_docs(4);
  docs[2].pages = {""};  // CLS I invalid
  std::vector<std::array<double, 2>> acc(4, {0.2, 0.9});
  ParserRoles roles{"cheap", "heavy"};
  // One slot total: the invalid doc takes it; the best improvement stays cheap.
  auto items = items_for(docs, acc);
  items[2].first_page_text = "";
  items[2].predicted.clear();
  const auto decisions =
      route_batch(std::move(items), 0, 1, 0.25, Cls1Thresholds{}, roles);
  std::size_t heavy = 0;
  for (const auto& d : decisions) {
    if (d.doc_id == "d002") {
      REQUIRE(d.stage == RouteStage::cls1_invalid);
      REQUIRE(d.chosen_parser == "heavy");
    } else {
      REQUIRE(d.chosen_parser == "cheap");
    }
    heavy += d.chosen_parser == "heavy";
  }
  REQUIRE(heavy == 1);

  // More invalid docs than slots: the cap still binds.
  docs[0].pages = {""};
  docs[1].pages = {""};
  auto items2 = items_for(docs, acc);
  for (std::size_t i : {0u, 1u, 2u}) {
    items2[i].first_page_text = "";
    items2[i].predicted.clear();
  }
  const auto capped =
      route_batch(std::move(items2), 0, 1, 0.25, Cls1Thresholds{}, roles);
  std::size_t heavy2 = 0;
  for (const auto& d : capped) heavy2 += d.chosen_parser == "heavy";
  REQUIRE(heavy2 == 1);
}

TEST_CASE("budget invariant holds for random batches") {
  Rng rng(0xa110cULL);
  ParserRoles roles{"cheap", "heavy"};
  for (int iter = 0; iter < 50; ++iter) {
    const std::size_t k = 1 + rng.bounded(24);
    const double alpha = rng.uniform();
    auto docs = routing_docs(k);
    std::vector<std::array<double, 2>> acc(k);
    for (auto& a : acc) a = {rng.uniform(), rng.uniform()};
    const auto decisions = route_batch(items_for(docs, acc), 0, 1, alpha,
                                       Cls1Thresholds{}, roles);
    std::size_t heavy = 0;
    for (const auto& d : decisions) heavy += d.chosen_parser == "heavy";
    REQUIRE(heavy <= static_cast<std::size_t>(alpha * static_cast<double>(k)));
  }
}

TEST_CASE("route_batch matches the brute-force optimum for k <= 8") {
  // Predictions on a 1/1024 grid keep every sum exactly representable, so
  // the comparison against the enumeration oracle is exact.
  Rng rng(0x0b57ac1eULL);
  ParserRoles roles{"cheap", "heavy"};
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t k = 1 + rng.bounded(8);
    const double alpha = rng.uniform();
    const auto cap = static_cast<std::size_t>(alpha * static_cast<double>(k));
    auto docs = routing_docs(k);
    std::vector<std::array<double, 2>> acc(k);
    for (auto& a : acc)
      a = {static_cast<double>(rng.bounded(1025)) / 1024.0,
           static_cast<double>(rng.bounded(1025)) / 1024.0};
    const auto decisions = route_batch(items_for(docs, acc), 0, 1, alpha,
                                       Cls1Thresholds{}, roles);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      total += acc[i][decisions[i].chosen_parser == "heavy" ? 1 : 0];
    const auto best = brute_force_best(acc, cap);
    REQUIRE(total == best.total);
  }
}

TEST_CASE("route_llm wires CLS I, prediction, and the cap together") {
  EmbeddingConfig cfg;
  cfg.bucket_count = 1u << 12;
  cfg.dim = 4;
  auto model = init_model(cfg, {"cheap", "heavy"}, 5);
  model.head_b = {0.9, 0.2};  // improvement is negative everywhere
  auto docs = routing_docs(8);
  docs[1].pages = {""};  // invalid: bypasses prediction, goes heavy
  std::vector<std::pair<const corpus::DocumentRecord*, std::string>> batch;
  for (const auto& d : docs) batch.emplace_back(&d, d.pages[0]);
  const auto decisions = route_llm(std::move(batch), model, 0.5,
                                   Cls1Thresholds{}, {"cheap", "heavy"});
  REQUIRE(decisions.size() == 8);
  for (const auto& d : decisions) {
    if (d.doc_id == docs[1].doc_id) {
      REQUIRE(d.stage == RouteStage::cls1_invalid);
      REQUIRE(d.chosen_parser == "heavy");
      REQUIRE(d.predicted_accuracy.empty());
    } else {
      REQUIRE(d.chosen_parser == "cheap");
      REQUIRE(d.predicted_accuracy.size() == 2);
    }
  }
}
