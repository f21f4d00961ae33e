#pragma once

#include <sys/types.h>
#include <sys/wait.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/detail.hpp"
#include "adaparse/tokenize.hpp"

// Uniform parser interface: deterministic mock parsers with configurable
// error models, the built-in text-layer extractor, and an adapter for
// external command-line parsers.

namespace adaparse::parsers {

enum class ParserKind { extractor, ocr, vit, mock, external };

inline const char* to_string(ParserKind k) {
  switch (k) {
    case ParserKind::extractor: return "extractor";
    case ParserKind::ocr: return "ocr";
    case ParserKind::vit: return "vit";
    case ParserKind::mock: return "mock";
    case ParserKind::external: return "external";
  }
  return "?";
}

inline ParserKind parser_kind_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ParserKind::external); ++i)
    if (s == to_string(static_cast<ParserKind>(i)))
      return static_cast<ParserKind>(i);
  throw std::invalid_argument("unknown parser kind: " + std::string(s));
}

enum class ParseStatus { ok, partial, failed, timeout };

inline const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::partial: return "partial";
    case ParseStatus::failed: return "failed";
    case ParseStatus::timeout: return "timeout";
  }
  return "?";
}

// Error model for mock parsers. Perturbations carry base rates; the
// sensitivities raise those rates on LaTeX-dense or long documents, which
// is what makes "which parser is best" vary across a corpus. Rates are
// Bernoulli-rounded per document, so a 3% page-drop means one page on ~9%
// of three-page documents rather than one page always.
struct MockErrorModel {
  std::vector<corpus::PerturbationSpec> perturbations;
  double latex_sensitivity = 0.0;    // rate += sensitivity * backslash/word ratio
  double identifier_sensitivity = 0.0;  // rate += sensitivity * identifier ratio
  double length_sensitivity = 0.0;   // rate += sensitivity * (pages-1)/10
  bool reads_text_layer = true;      // false: re-reads page images (groundtruth)
  double crash_rate = 0.0;           // deterministic per (parser, doc)
  std::uint64_t seed = 0;
};

struct ParserProfile {
  std::string parser_id;
  ParserKind kind = ParserKind::mock;
  double avg_cost_seconds = 0.1;  // mean per-document cost, used by the planner
  std::size_t page_batch_size = 1;
  bool warm_start = false;
  double init_ms = 0.0;           // simulated model-load cost per initialization
  double spin_ms_per_page = 0.0;  // real CPU work per page, for throughput benches
  double timeout_seconds = 120.0;
  std::string command_template;  // external kind: uses {input} and {output}
  MockErrorModel error_model;

  void validate() const {
    if (avg_cost_seconds <= 0.0)
      throw std::invalid_argument(parser_id + ": avg_cost_seconds must be > 0");
    if (page_batch_size < 1)
      throw std::invalid_argument(parser_id + ": page_batch_size must be >= 1");
  }
};

struct ParseResult {
  std::string doc_id;
  std::string parser_id;
  std::string text;
  std::size_t pages_emitted = 0;
  double wall_seconds = 0.0;
  ParseStatus status = ParseStatus::ok;
};

// Thrown by mock parsers whose error model says "crash on this document";
// the worker pool turns it into one retry and then a failed result.
class ParserCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
// Costs are simulated relative to a nominal page count so that a profile's
// avg_cost_seconds stays the corpus mean and manifests are reproducible.
inline constexpr double kNominalPages = 2.5;
}  // namespace detail

inline double simulated_seconds(const ParserProfile& p, std::size_t pages) {
  return p.avg_cost_seconds *
         static_cast<double>(std::max<std::size_t>(1, pages)) /
         detail::kNominalPages;
}

// The selector's probe: one page through the default extractor.
inline double probe_seconds(const ParserProfile& p) {
  return p.avg_cost_seconds / detail::kNominalPages;
}

namespace detail {

inline double hash01(std::string_view a, std::string_view b,
                     std::string_view tag, std::uint64_t seed) {
  const std::uint64_t h =
      mix64(fnv1a64(a) ^ mix64(fnv1a64(b)) ^ fnv1a64(tag) ^ mix64(seed));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double latex_ratio(const std::vector<std::string>& pages) {
  std::size_t backslashes = 0, words = 0;
  for (const auto& p : pages) {
    for (char c : p)
      if (c == '\\') ++backslashes;
    words += corpus::detail::word_spans(p).size();
  }
  if (words == 0) return 0.0;
  return std::min(1.0, static_cast<double>(backslashes) /
                           static_cast<double>(words));
}

inline double identifier_ratio(const std::vector<std::string>& pages) {
  std::size_t ids = 0, words = 0;
  for (const auto& p : pages) {
    for (const auto& span : corpus::detail::word_spans(p)) {
      ++words;
      ids += corpus::detail::looks_like_identifier(
          std::string_view(p.data() + span.start, span.len));
    }
  }
  if (words == 0) return 0.0;
  return static_cast<double>(ids) / static_cast<double>(words);
}

// Bernoulli rounding: k = floor(rate*units) + Bern(frac), returned as an
// exact fraction of units so corpus::perturb applies exactly k units.
inline double realized_rate(double rate, std::size_t units, double u01) {
  if (units == 0 || rate <= 0.0) return 0.0;
  const double expect = std::min(rate, 1.0) * static_cast<double>(units);
  double k = std::floor(expect);
  if (u01 < expect - k) k += 1.0;
  return k / static_cast<double>(units);
}

// Fixed amount of hashing work per requested millisecond; wall time then
// scales with core contention, which is what a scaling bench measures.
inline void spin_for(double ms) {
  volatile std::uint64_t h = 0x9e3779b97f4a7c15ull;
  const std::uint64_t iters = static_cast<std::uint64_t>(ms * 120000.0);
  for (std::uint64_t i = 0; i < iters; ++i) h = mix64(h ^ i);
}

struct ResolvedModel {
  std::vector<corpus::PerturbationSpec> specs;
  bool crash = false;
};

// LaTeX flattening is the mode extraction-style failures concentrate in.
// Whitespace slots outnumber words roughly five to one, so that mode takes
// the sensitivities at a far smaller weight; other modes at a quarter.
inline double sensitivity_weight(const corpus::PerturbationSpec& spec) {
  switch (spec.mode) {
    case corpus::PerturbMode::latex_flatten: return 1.0;
    case corpus::PerturbMode::whitespace_injection: return 0.02;
    default: return 0.25;
  }
}

inline ResolvedModel resolve_model(const ParserProfile& parser,
                                   const corpus::DocumentRecord& doc,
                                   const std::vector<std::string>& source) {
  const auto& m = parser.error_model;
  ResolvedModel out;
  if (m.crash_rate > 0.0 &&
      hash01(doc.doc_id, parser.parser_id, "crash", m.seed) < m.crash_rate)
    out.crash = true;
  // Difficulty features come from the opening page: document-level quality
  // conditioned on page-1 content is the regime the whole selection
  // pipeline operates in, and page sampling noise would otherwise swamp
  // the signal at desk scale.
  const std::vector<std::string> page_one = {source.empty() ? std::string()
                                                            : source.front()};
  const double latex = latex_ratio(page_one);
  const double ids =
      m.identifier_sensitivity > 0.0 ? identifier_ratio(page_one) : 0.0;
  const double length = source.size() > 1
                            ? (static_cast<double>(source.size()) - 1.0) / 10.0
                            : 0.0;
  for (std::size_t s = 0; s < m.perturbations.size(); ++s) {
    corpus::PerturbationSpec spec = m.perturbations[s];
    double rate = std::clamp(
        spec.rate + (m.latex_sensitivity * latex +
                     m.identifier_sensitivity * ids +
                     m.length_sensitivity * length) *
                        sensitivity_weight(spec),
        0.0, 1.0);
    if (spec.mode == corpus::PerturbMode::page_drop) {
      // Page counts are tiny; Bernoulli-round so low rates stay low.
      const double u = hash01(doc.doc_id, parser.parser_id,
                              corpus::to_string(spec.mode), m.seed + s);
      rate = realized_rate(rate, source.size(), u);
    }
    spec.rate = rate;
    spec.seed = mix64(m.seed ^ fnv1a64(doc.doc_id) ^
                      fnv1a64(parser.parser_id) ^ mix64(s + 1));
    if (spec.rate > 0.0) out.specs.push_back(spec);
  }
  return out;
}

inline const std::vector<std::string>& source_pages(
    const ParserProfile& parser, const corpus::DocumentRecord& doc,
    std::vector<std::string>& gt_storage) {
  if (!parser.error_model.reads_text_layer && doc.groundtruth) {
    gt_storage = split_pages(*doc.groundtruth);
    return gt_storage;
  }
  return doc.pages;
}

inline ParseResult mock_parse(const ParserProfile& parser,
                              const corpus::DocumentRecord& doc) {
  ParseResult r;
  r.doc_id = doc.doc_id;
  r.parser_id = parser.parser_id;
  std::vector<std::string> gt_storage;
  const auto& source = source_pages(parser, doc, gt_storage);
  const auto model = resolve_model(parser, doc, source);
  if (model.crash)
    throw ParserCrash(parser.parser_id + " crashed on " + doc.doc_id);
  std::vector<std::string> pages = source;
  for (const auto& spec : model.specs)
    pages = corpus::perturb_pages(pages, spec);
  if (parser.spin_ms_per_page > 0.0)
    spin_for(parser.spin_ms_per_page * static_cast<double>(pages.size()));
  r.pages_emitted = pages.size();
  r.text = join_pages(pages);
  r.wall_seconds = simulated_seconds(parser, source.size());
  if (pages.empty()) {
    r.status = ParseStatus::failed;
  } else if (pages.size() < source.size()) {
    r.status = ParseStatus::partial;
  } else {
    r.status = ParseStatus::ok;
  }
  return r;
}

struct CommandOutcome {
  int exit_code = -1;
  bool timed_out = false;
};

// /bin/sh -c <cmd> with a kill-on-deadline watchdog; file-based I/O only.
inline CommandOutcome run_command(const std::string& cmd, double timeout_s) {
  CommandOutcome out;
  const pid_t pid = ::fork();
  if (pid < 0) return out;
  if (pid == 0) {
    ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_s);
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) return out;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      out.timed_out = true;
      return out;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

inline ParseResult external_parse(const ParserProfile& parser,
                                  const corpus::DocumentRecord& doc) {
  namespace fs = std::filesystem;
  ParseResult r;
  r.doc_id = doc.doc_id;
  r.parser_id = parser.parser_id;
  const auto t0 = std::chrono::steady_clock::now();

  const fs::path dir =
      fs::temp_directory_path() /
      ("adaparse_ext_" + std::to_string(::getpid()) + "_" +
       std::to_string(mix64(fnv1a64(doc.doc_id)) & 0xffffff));
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path input = dir / (doc.doc_id + ".json");
  const fs::path output = dir / (doc.doc_id + ".txt");
  {
    std::ofstream in_file(input, std::ios::binary | std::ios::trunc);
    in_file << corpus::to_json(doc).dump(2) << '\n';
  }
  std::string cmd = parser.command_template;
  for (const auto& [key, value] :
       {std::pair<std::string, std::string>{"{input}", input.string()},
        {"{output}", output.string()}}) {
    for (std::size_t pos = cmd.find(key); pos != std::string::npos;
         pos = cmd.find(key, pos)) {
      cmd.replace(pos, key.size(), value);
      pos += value.size();
    }
  }

  const auto outcome = run_command(cmd, parser.timeout_seconds);
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (outcome.timed_out) {
    r.status = ParseStatus::timeout;
  } else if (outcome.exit_code != 0 || !fs::exists(output)) {
    r.status = ParseStatus::failed;
  } else {
    std::ifstream out_file(output, std::ios::binary);
    r.text.assign(std::istreambuf_iterator<char>(out_file),
                  std::istreambuf_iterator<char>());
    r.pages_emitted = split_pages(r.text).size();
    r.status = r.text.empty() ? ParseStatus::failed : ParseStatus::ok;
  }
  fs::remove_all(dir, ec);
  return r;
}

}  // namespace detail

// One deterministic parse (mock/extractor kinds). Never throws on
// malformed content; ParserCrash is the one deliberate exception, raised
// only by mock error models with crash_rate > 0 so pools can exercise
// their retry path.
inline ParseResult parse(const ParserProfile& parser,
                         const corpus::DocumentRecord& doc) {
  if (parser.kind == ParserKind::external)
    return detail::external_parse(parser, doc);
  return detail::mock_parse(parser, doc);
}

// Page-1 text only, from the designated default extractor. Agrees byte for
// byte with the full parse's rendering of page 1, and is empty when the
// error model dropped that page.
inline std::string parse_first_page(const ParserProfile& parser,
                                    const corpus::DocumentRecord& doc) {
  std::vector<std::string> gt_storage;
  const auto& source = detail::source_pages(parser, doc, gt_storage);
  if (source.empty()) return "";
  const auto model = detail::resolve_model(parser, doc, source);
  for (const auto& spec : model.specs) {
    if (spec.mode == corpus::PerturbMode::page_drop) {
      const auto dropped = corpus::detail::pages_to_drop(source.size(), spec);
      if (!dropped.empty() && dropped.front() == 0) return "";
    }
  }
  std::string page = source[0];
  for (const auto& spec : model.specs) page = corpus::perturb_page(page, spec, 0);
  return page;
}

// --- Reference parser set ---------------------------------------------------

// Six mocks with crossing quality profiles: the text-layer extractors are
// near-perfect on clean low-LaTeX documents and fall apart on dense ones,
// the image-based parsers hold steady everywhere but carry their own noise
// (including rare page drops for the best one). No parser dominates.
inline std::vector<ParserProfile> reference_parsers(std::uint64_t seed = 0) {
  using corpus::PerturbMode;
  std::vector<ParserProfile> set;

  ParserProfile fastext;
  fastext.parser_id = "fastext";
  fastext.kind = ParserKind::extractor;
  fastext.avg_cost_seconds = 0.01;
  fastext.error_model.reads_text_layer = true;
  fastext.error_model.perturbations = {
      {PerturbMode::latex_flatten, 0.0, 0},
      {PerturbMode::whitespace_injection, 0.0002, 0}};
  fastext.error_model.latex_sensitivity = 1.2;
  fastext.error_model.seed = mix64(seed ^ 0x01);
  set.push_back(fastext);

  ParserProfile purepdf;
  purepdf.parser_id = "purepdf";
  purepdf.kind = ParserKind::extractor;
  purepdf.avg_cost_seconds = 0.05;
  purepdf.error_model.reads_text_layer = true;
  purepdf.error_model.perturbations = {
      {PerturbMode::latex_flatten, 0.03, 0},
      {PerturbMode::whitespace_injection, 0.002, 0},
      {PerturbMode::char_substitution, 0.002, 0}};
  purepdf.error_model.latex_sensitivity = 1.5;
  purepdf.error_model.seed = mix64(seed ^ 0x02);
  set.push_back(purepdf);

  ParserProfile ocrus;
  ocrus.parser_id = "ocrus";
  ocrus.kind = ParserKind::ocr;
  ocrus.avg_cost_seconds = 0.5;
  ocrus.error_model.reads_text_layer = false;
  ocrus.error_model.perturbations = {
      {PerturbMode::char_substitution, 0.012, 0},
      {PerturbMode::char_scramble, 0.002, 0}};
  ocrus.error_model.latex_sensitivity = 0.3;
  ocrus.error_model.seed = mix64(seed ^ 0x03);
  set.push_back(ocrus);

  ParserProfile gridbot;
  gridbot.parser_id = "gridbot";
  gridbot.kind = ParserKind::ocr;
  gridbot.avg_cost_seconds = 0.3;
  gridbot.error_model.reads_text_layer = false;
  gridbot.error_model.perturbations = {
      {PerturbMode::page_drop, 0.15, 0},
      {PerturbMode::word_substitution, 0.02, 0}};
  gridbot.error_model.latex_sensitivity = 0.4;
  gridbot.error_model.seed = mix64(seed ^ 0x04);
  set.push_back(gridbot);

  ParserProfile markdown;
  markdown.parser_id = "markdown";
  markdown.kind = ParserKind::vit;
  markdown.avg_cost_seconds = 0.8;
  markdown.page_batch_size = 4;
  markdown.warm_start = true;
  markdown.error_model.reads_text_layer = false;
  markdown.error_model.perturbations = {
      {PerturbMode::word_substitution, 0.02, 0},
      {PerturbMode::identifier_corruption, 0.3, 0}};
  markdown.error_model.latex_sensitivity = 0.1;
  markdown.error_model.seed = mix64(seed ^ 0x05);
  set.push_back(markdown);

  ParserProfile visionparse;
  visionparse.parser_id = "visionparse";
  visionparse.kind = ParserKind::vit;
  visionparse.avg_cost_seconds = 1.0;
  visionparse.page_batch_size = 10;
  visionparse.warm_start = true;
  // Near-flat on LaTeX (its strength over the extractors) but bad at
  // chemistry-style identifiers, a weakness the selector can read off the
  // extracted text.
  visionparse.error_model.reads_text_layer = false;
  visionparse.error_model.perturbations = {
      {PerturbMode::char_substitution, 0.003, 0},
      {PerturbMode::page_drop, 0.002, 0}};
  visionparse.error_model.latex_sensitivity = 0.02;
  visionparse.error_model.identifier_sensitivity = 3.5;
  visionparse.error_model.seed = mix64(seed ^ 0x06);
  set.push_back(visionparse);

  return set;
}

// An error-free mock reading the page images: output equals groundtruth.
inline ParserProfile perfect_mock(const std::string& id = "perfect-mock") {
  ParserProfile p;
  p.parser_id = id;
  p.kind = ParserKind::mock;
  p.avg_cost_seconds = 0.02;
  p.error_model.reads_text_layer = false;
  return p;
}

inline const ParserProfile& find_parser(const std::vector<ParserProfile>& set,
                                        std::string_view id) {
  for (const auto& p : set)
    if (p.parser_id == id) return p;
  throw std::invalid_argument("unknown parser id: " + std::string(id));
}

}  // namespace adaparse::parsers
