#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaparse/detail.hpp"
#include "adaparse/metrics.hpp"
#include "adaparse/selector.hpp"

// Campaign configuration file. The core key structure is
//
//   pdf_dir: <input documents>
//   out_dir: <output directory>
//   parser_settings:
//     name: <parser id>
//
// plus this tool's extended keys. Unknown keys warn and are ignored;
// missing required keys fail by name.

namespace adaparse::cli {

struct CampaignConfig {
  std::string pdf_dir;
  std::string out_dir;
  std::string parser_name = "fastext";
  // Extra parser_settings entries, echoed back on dump. An external
  // command-line parser is declared with `command` (and optionally
  // `timeout_seconds`) here.
  std::map<std::string, std::string> parser_options;
  std::string strategy;  // defaults to single:<parser_name>
  double alpha = 0.05;
  std::size_t batch_size = 256;
  std::size_t default_workers = 2;
  std::map<std::string, std::size_t> workers;
  std::string default_parser = "fastext";
  std::string heavy_parser = "visionparse";
  std::string model_path;  // predictor weights for adaparse_llm
  metrics::MetricConfig metric;
  selector::Cls1Thresholds cls1;
  std::uint64_t seed = 0;

  std::string effective_strategy() const {
    return strategy.empty() ? "single:" + parser_name : strategy;
  }

  void validate() const {
    if (pdf_dir.empty())
      throw std::invalid_argument("config: missing required key 'pdf_dir'");
    if (out_dir.empty())
      throw std::invalid_argument("config: missing required key 'out_dir'");
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("config: alpha must be in [0,1]");
    if (batch_size == 0)
      throw std::invalid_argument("config: batch_size must be >= 1");
    metric.validate();
  }
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "pdf_dir",    "out_dir",        "parser_settings", "strategy",
      "alpha",      "batch_size",     "workers",         "default_workers",
      "roles",      "model_path",     "metric",          "seed",
      "cls1"};
  return keys;
}

inline metrics::MetricConfig parse_metric(const YAML::Node& node) {
  metrics::MetricConfig m;
  if (!node) return m;
  if (node["bleu_max_ngram"]) m.bleu_max_ngram = node["bleu_max_ngram"].as<int>();
  if (node["bleu_smoothing"]) {
    const auto s = node["bleu_smoothing"].as<std::string>();
    if (s == "none")
      m.bleu_smoothing = metrics::MetricConfig::BleuSmoothing::none;
    else if (s == "add_one")
      m.bleu_smoothing = metrics::MetricConfig::BleuSmoothing::add_one;
    else
      throw std::invalid_argument("config: bleu_smoothing must be none|add_one");
  }
  if (node["rouge_variant"]) {
    const auto s = node["rouge_variant"].as<std::string>();
    if (s == "rouge1_f")
      m.rouge_variant = metrics::MetricConfig::RougeVariant::rouge1_f;
    else if (s == "rougeL_f")
      m.rouge_variant = metrics::MetricConfig::RougeVariant::rougeL_f;
    else
      throw std::invalid_argument(
          "config: rouge_variant must be rouge1_f|rougeL_f");
  }
  if (node["car_band_width"]) m.car_band_width = node["car_band_width"].as<int>();
  if (node["at_threshold"]) m.at_threshold = node["at_threshold"].as<double>();
  return m;
}

}  // namespace detail

inline CampaignConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("config: cannot read " + path + ": " + e.what());
  }
  if (!root.IsMap())
    throw std::invalid_argument("config: top level must be a mapping");

  CampaignConfig cfg;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!detail::known_keys().count(key))
      log_note("config: unknown key '" + key + "' ignored");
  }

  if (root["pdf_dir"]) cfg.pdf_dir = root["pdf_dir"].as<std::string>();
  if (root["out_dir"]) cfg.out_dir = root["out_dir"].as<std::string>();
  if (root["parser_settings"]) {
    const auto& ps = root["parser_settings"];
    if (!ps.IsMap())
      throw std::invalid_argument("config: parser_settings must be a mapping");
    if (!ps["name"])
      throw std::invalid_argument(
          "config: missing required key 'parser_settings.name'");
    for (const auto& kv : ps) {
      const auto key = kv.first.as<std::string>();
      if (key == "name")
        cfg.parser_name = kv.second.as<std::string>();
      else
        cfg.parser_options[key] = kv.second.as<std::string>();
    }
  }
  if (root["strategy"]) cfg.strategy = root["strategy"].as<std::string>();
  if (root["alpha"]) cfg.alpha = root["alpha"].as<double>();
  if (root["batch_size"]) cfg.batch_size = root["batch_size"].as<std::size_t>();
  if (root["default_workers"])
    cfg.default_workers = root["default_workers"].as<std::size_t>();
  if (root["workers"]) {
    const auto& w = root["workers"];
    if (w.IsScalar()) {
      cfg.default_workers = w.as<std::size_t>();
    } else if (w.IsMap()) {
      for (const auto& kv : w)
        cfg.workers[kv.first.as<std::string>()] = kv.second.as<std::size_t>();
    } else {
      throw std::invalid_argument(
          "config: workers must be a count or a parser->count mapping");
    }
  }
  if (root["roles"]) {
    const auto& r = root["roles"];
    if (r["default"]) cfg.default_parser = r["default"].as<std::string>();
    if (r["heavy"]) cfg.heavy_parser = r["heavy"].as<std::string>();
  }
  if (root["model_path"]) cfg.model_path = root["model_path"].as<std::string>();
  cfg.metric = detail::parse_metric(root["metric"]);
  if (root["cls1"]) {
    const auto& c = root["cls1"];
    if (c["min_chars_per_page"])
      cfg.cls1.min_chars_per_page = c["min_chars_per_page"].as<std::size_t>();
    if (c["min_alpha_ratio"])
      cfg.cls1.min_alpha_ratio = c["min_alpha_ratio"].as<double>();
    if (c["max_replacement_chars"])
      cfg.cls1.max_replacement_chars =
          c["max_replacement_chars"].as<std::size_t>();
  }
  if (root["seed"]) cfg.seed = root["seed"].as<std::uint64_t>();

  // Path overrides from the environment.
  if (const char* env = std::getenv("ADAPARSE_PDF_DIR")) cfg.pdf_dir = env;
  if (const char* env = std::getenv("ADAPARSE_OUT_DIR")) cfg.out_dir = env;

  cfg.validate();
  return cfg;
}

// Effective configuration with every default filled in; reloadable.
inline std::string dump_config(const CampaignConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "pdf_dir" << YAML::Value << cfg.pdf_dir;
  out << YAML::Key << "out_dir" << YAML::Value << cfg.out_dir;
  out << YAML::Key << "parser_settings" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.parser_name;
  for (const auto& [k, v] : cfg.parser_options)
    out << YAML::Key << k << YAML::Value << v;
  out << YAML::EndMap;
  out << YAML::Key << "strategy" << YAML::Value << cfg.effective_strategy();
  out << YAML::Key << "alpha" << YAML::Value << cfg.alpha;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.batch_size;
  out << YAML::Key << "default_workers" << YAML::Value << cfg.default_workers;
  if (!cfg.workers.empty()) {
    out << YAML::Key << "workers" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : cfg.workers) out << YAML::Key << k << YAML::Value << v;
    out << YAML::EndMap;
  }
  out << YAML::Key << "roles" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "default" << YAML::Value << cfg.default_parser;
  out << YAML::Key << "heavy" << YAML::Value << cfg.heavy_parser;
  out << YAML::EndMap;
  if (!cfg.model_path.empty())
    out << YAML::Key << "model_path" << YAML::Value << cfg.model_path;
  out << YAML::Key << "metric" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "bleu_max_ngram" << YAML::Value << cfg.metric.bleu_max_ngram;
  out << YAML::Key << "bleu_smoothing" << YAML::Value
      << (cfg.metric.bleu_smoothing == metrics::MetricConfig::BleuSmoothing::none
              ? "none"
              : "add_one");
  out << YAML::Key << "rouge_variant" << YAML::Value
      << (cfg.metric.rouge_variant == metrics::MetricConfig::RougeVariant::rougeL_f
              ? "rougeL_f"
              : "rouge1_f");
  out << YAML::Key << "car_band_width" << YAML::Value << cfg.metric.car_band_width;
  out << YAML::Key << "at_threshold" << YAML::Value << cfg.metric.at_threshold;
  out << YAML::EndMap;
  out << YAML::Key << "cls1" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "min_chars_per_page" << YAML::Value
      << cfg.cls1.min_chars_per_page;
  out << YAML::Key << "min_alpha_ratio" << YAML::Value << cfg.cls1.min_alpha_ratio;
  out << YAML::Key << "max_replacement_chars" << YAML::Value
      << cfg.cls1.max_replacement_chars;
  out << YAML::EndMap;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace adaparse::cli
