#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adaparse/corpus.hpp"
#include "adaparse/metrics.hpp"
#include "adaparse/selector.hpp"

// Three-step alignment pipeline for the accuracy predictor: supervised
// regression on per-parser accuracy targets, DPO post-training on human
// preference pairs against a frozen reference scorer, then a final
// regression pass at a lowered learning rate. Full-batch gradient descent,
// single-threaded, bit-deterministic.

namespace adaparse::training {

struct RegressionExample {
  std::string input_text;       // default-parser extraction
  std::vector<double> targets;  // per-parser accuracy, [0,1]^m
};

struct PreferencePair {
  std::string preferred_text;
  std::string rejected_text;
  std::string page_id;
};

struct TrainConfig {
  double lr_stage1 = 1e-2;
  double lr_dpo = 5e-2;
  double lr_stage3 = 1e-3;
  double dpo_beta = 0.1;
  std::size_t epochs_stage1 = 60;
  std::size_t epochs_dpo = 80;
  std::size_t epochs_stage3 = 30;
  // Ridge shrinkage on weights (not biases) during the regression stages;
  // 0 keeps the plain least-squares objective.
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0: full batch
  // Evaluates the DPO objective exactly as printed in its source, where the
  // temperature multiplies only the preferred log-ratio. Off by default;
  // the standard form multiplies the difference of log-ratios.
  bool printed_dpo_form = false;

  void validate() const {
    if (!(lr_stage3 < lr_stage1))
      throw std::invalid_argument("lr_stage3 must be below lr_stage1");
    if (dpo_beta <= 0.0) throw std::invalid_argument("dpo_beta must be > 0");
  }
};

// Gradients for every trainable block; fields a loss does not touch stay 0.
struct ModelGrads {
  std::vector<double> embedding;
  std::vector<double> head_w;
  std::vector<double> head_b;
  std::vector<double> pref_w;
  double pref_b = 0.0;

  static ModelGrads zeros(const selector::PredictorModel& model) {
    ModelGrads g;
    g.embedding.assign(model.embedding.size(), 0.0);
    g.head_w.assign(model.head_w.size(), 0.0);
    g.head_b.assign(model.head_b.size(), 0.0);
    g.pref_w.assign(model.pref_w.size(), 0.0);
    return g;
  }
};

namespace detail {

using selector::detail::SparseFeatures;

inline std::vector<double> embed_sparse(const selector::PredictorModel& model,
                                        const SparseFeatures& features) {
  std::vector<double> e(model.embedding_cfg.dim, 0.0);
  for (const auto& [bucket, w] : features.items) {
    const double* row =
        model.embedding.data() + bucket * model.embedding_cfg.dim;
    for (std::size_t j = 0; j < e.size(); ++j) e[j] += w * row[j];
  }
  return e;
}

struct CachedRegression {
  SparseFeatures features;
  const std::vector<double>* targets;
};

inline std::vector<CachedRegression> cache_regression(
    const selector::PredictorModel& model,
    const std::vector<RegressionExample>& data) {
  std::vector<CachedRegression> cached;
  cached.reserve(data.size());
  for (const auto& ex : data) {
    if (ex.targets.size() != model.m)
      throw std::invalid_argument("target dimension does not match model.m");
    cached.push_back(
        {selector::detail::feature_counts(ex.input_text, model.embedding_cfg),
         &ex.targets});
  }
  return cached;
}

inline ModelGrads regression_gradients_cached(
    const selector::PredictorModel& model,
    const std::vector<CachedRegression>& cached) {
  const std::size_t dim = model.embedding_cfg.dim;
  ModelGrads g = ModelGrads::zeros(model);
  const double inv_n = 1.0 / static_cast<double>(cached.size());
  std::vector<double> err(model.m), d_e(dim);
  for (const auto& ex : cached) {
    const auto e = embed_sparse(model, ex.features);
    for (std::size_t j = 0; j < model.m; ++j) {
      double v = model.head_b[j];
      const double* w = model.head_w.data() + j * dim;
      for (std::size_t k = 0; k < dim; ++k) v += w[k] * e[k];
      err[j] = 2.0 * inv_n * (v - (*ex.targets)[j]);
    }
    std::fill(d_e.begin(), d_e.end(), 0.0);
    for (std::size_t j = 0; j < model.m; ++j) {
      const double* w = model.head_w.data() + j * dim;
      double* gw = g.head_w.data() + j * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        gw[k] += err[j] * e[k];
        d_e[k] += err[j] * w[k];
      }
      g.head_b[j] += err[j];
    }
    for (const auto& [bucket, weight] : ex.features.items) {
      double* row = g.embedding.data() + bucket * dim;
      for (std::size_t k = 0; k < dim; ++k) row[k] += weight * d_e[k];
    }
  }
  return g;
}

inline void apply(selector::PredictorModel& model, const ModelGrads& g,
                  double lr, bool update_head, bool update_pref) {
  for (std::size_t i = 0; i < model.embedding.size(); ++i)
    model.embedding[i] -= lr * g.embedding[i];
  if (update_head) {
    for (std::size_t i = 0; i < model.head_w.size(); ++i)
      model.head_w[i] -= lr * g.head_w[i];
    for (std::size_t i = 0; i < model.head_b.size(); ++i)
      model.head_b[i] -= lr * g.head_b[i];
  }
  if (update_pref) {
    for (std::size_t i = 0; i < model.pref_w.size(); ++i)
      model.pref_w[i] -= lr * g.pref_w[i];
    model.pref_b -= lr * g.pref_b;
  }
}

inline selector::PredictorModel run_regression(
    selector::PredictorModel model, const std::vector<RegressionExample>& data,
    double lr, std::size_t epochs, double weight_decay, int result_stage) {
  if (data.empty()) throw std::invalid_argument("train_regression: no data");
  const auto cached = cache_regression(model, data);
  const double shrink = 1.0 - lr * weight_decay;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto g = regression_gradients_cached(model, cached);
    apply(model, g, lr, /*update_head=*/true, /*update_pref=*/false);
    if (weight_decay > 0.0) {
      for (auto& w : model.head_w) w *= shrink;
      for (auto& w : model.embedding) w *= shrink;
    }
  }
  model.stage = result_stage;
  return model;
}

}  // namespace detail

// --- Regression -----------------------------------------------------------------

// Mean squared error of the unclamped head over the dataset.
inline double regression_loss(const selector::PredictorModel& model,
                              const std::vector<RegressionExample>& data) {
  if (data.empty()) throw std::invalid_argument("regression_loss: no data");
  const std::size_t dim = model.embedding_cfg.dim;
  double loss = 0.0;
  for (const auto& ex : data) {
    const auto e = selector::embed(model, ex.input_text);
    for (std::size_t j = 0; j < model.m; ++j) {
      double v = model.head_b[j];
      const double* w = model.head_w.data() + j * dim;
      for (std::size_t k = 0; k < dim; ++k) v += w[k] * e[k];
      const double err = v - ex.targets[j];
      loss += err * err;
    }
  }
  return loss / static_cast<double>(data.size());
}

inline ModelGrads regression_gradients(
    const selector::PredictorModel& model,
    const std::vector<RegressionExample>& data) {
  if (data.empty()) throw std::invalid_argument("regression_gradients: no data");
  return detail::regression_gradients_cached(model,
                                             detail::cache_regression(model, data));
}

// Step 1: supervised fine-tuning on pagewise accuracy targets.
inline selector::PredictorModel train_regression(
    selector::PredictorModel model, const std::vector<RegressionExample>& data,
    const TrainConfig& cfg) {
  cfg.validate();
  return detail::run_regression(std::move(model), data, cfg.lr_stage1,
                                cfg.epochs_stage1, cfg.weight_decay, 1);
}

// --- DPO -------------------------------------------------------------------------

// Scalar preference score, sigma of the preference head on the shared
// embedding; strictly inside (0,1) so its log-ratio is finite.
inline double preference_score(const selector::PredictorModel& model,
                               std::string_view text) {
  const auto e = selector::embed(model, text);
  double u = model.pref_b;
  for (std::size_t k = 0; k < e.size(); ++k) u += model.pref_w[k] * e[k];
  const double g = 1.0 / (1.0 + std::exp(-u));
  if (!(g > 0.0 && g < 1.0))
    throw std::domain_error(
        "preference score left (0,1); scorer violated its precondition");
  return g;
}

// -log sigma(beta * [(log g/g_ref)(x+) - (log g/g_ref)(x-)]).
// The printed variant applies beta to the preferred log-ratio only.
inline double dpo_loss(const selector::PredictorModel& scorer,
                       const selector::PredictorModel& ref_scorer,
                       const PreferencePair& pair, double beta,
                       bool printed_form = false) {
  if (beta <= 0.0) throw std::invalid_argument("dpo beta must be > 0");
  const double h_pos =
      std::log(preference_score(scorer, pair.preferred_text)) -
      std::log(preference_score(ref_scorer, pair.preferred_text));
  const double h_neg =
      std::log(preference_score(scorer, pair.rejected_text)) -
      std::log(preference_score(ref_scorer, pair.rejected_text));
  const double z = printed_form ? beta * h_pos - h_neg : beta * (h_pos - h_neg);
  // softplus(-z), stable at both tails
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

inline double mean_dpo_loss(const selector::PredictorModel& scorer,
                            const selector::PredictorModel& ref_scorer,
                            const std::vector<PreferencePair>& pairs,
                            double beta, bool printed_form = false) {
  if (pairs.empty()) throw std::invalid_argument("mean_dpo_loss: no pairs");
  double sum = 0.0;
  for (const auto& p : pairs)
    sum += dpo_loss(scorer, ref_scorer, p, beta, printed_form);
  return sum / static_cast<double>(pairs.size());
}

namespace detail {

struct CachedPair {
  SparseFeatures pos, neg;
  double ref_log_pos = 0.0;
  double ref_log_neg = 0.0;
};

inline std::vector<CachedPair> cache_pairs(
    const selector::PredictorModel& scorer,
    const selector::PredictorModel& ref_scorer,
    const std::vector<PreferencePair>& pairs) {
  std::vector<CachedPair> cached;
  cached.reserve(pairs.size());
  for (const auto& p : pairs) {
    CachedPair c;
    c.pos = selector::detail::feature_counts(p.preferred_text,
                                             scorer.embedding_cfg);
    c.neg = selector::detail::feature_counts(p.rejected_text,
                                             scorer.embedding_cfg);
    c.ref_log_pos = std::log(preference_score(ref_scorer, p.preferred_text));
    c.ref_log_neg = std::log(preference_score(ref_scorer, p.rejected_text));
    cached.push_back(std::move(c));
  }
  return cached;
}

inline ModelGrads dpo_gradients_cached(const selector::PredictorModel& scorer,
                                       const std::vector<CachedPair>& cached,
                                       double beta, bool printed_form) {
  const std::size_t dim = scorer.embedding_cfg.dim;
  ModelGrads g = ModelGrads::zeros(scorer);
  const double inv_n = 1.0 / static_cast<double>(cached.size());

  for (const auto& pair : cached) {
    const auto e_pos = embed_sparse(scorer, pair.pos);
    const auto e_neg = embed_sparse(scorer, pair.neg);
    auto logit = [&](const std::vector<double>& e) {
      double u = scorer.pref_b;
      for (std::size_t k = 0; k < dim; ++k) u += scorer.pref_w[k] * e[k];
      return u;
    };
    const double s_pos = 1.0 / (1.0 + std::exp(-logit(e_pos)));
    const double s_neg = 1.0 / (1.0 + std::exp(-logit(e_neg)));
    const double h_pos = std::log(s_pos) - pair.ref_log_pos;
    const double h_neg = std::log(s_neg) - pair.ref_log_neg;
    const double z =
        printed_form ? beta * h_pos - h_neg : beta * (h_pos - h_neg);
    const double dz = -1.0 / (1.0 + std::exp(z));  // dL/dz = -sigma(-z)
    const double coeff_pos = dz * beta;
    const double coeff_neg = printed_form ? -dz : -dz * beta;

    struct Side {
      const SparseFeatures* f;
      const std::vector<double>* e;
      double score;
      double coeff;
    };
    for (const Side side : {Side{&pair.pos, &e_pos, s_pos, coeff_pos},
                            Side{&pair.neg, &e_neg, s_neg, coeff_neg}}) {
      // h = log sigma(u) - const, so dh/du = 1 - sigma(u).
      const double du = side.coeff * (1.0 - side.score) * inv_n;
      for (std::size_t k = 0; k < dim; ++k) g.pref_w[k] += du * (*side.e)[k];
      g.pref_b += du;
      for (const auto& [bucket, weight] : side.f->items) {
        double* row = g.embedding.data() + bucket * dim;
        for (std::size_t k = 0; k < dim; ++k)
          row[k] += du * weight * scorer.pref_w[k];
      }
    }
  }
  return g;
}

}  // namespace detail

inline ModelGrads dpo_gradients(const selector::PredictorModel& scorer,
                                const selector::PredictorModel& ref_scorer,
                                const std::vector<PreferencePair>& pairs,
                                double beta, bool printed_form = false) {
  if (pairs.empty()) throw std::invalid_argument("dpo_gradients: no pairs");
  return detail::dpo_gradients_cached(
      scorer, detail::cache_pairs(scorer, ref_scorer, pairs), beta, printed_form);
}

// Step 2: DPO against the frozen stage-1 reference. Updates the encoder
// and the preference head; the regression head is untouched.
inline selector::PredictorModel train_dpo(
    selector::PredictorModel model, const std::vector<PreferencePair>& pairs,
    const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty())
    throw std::invalid_argument("train_dpo: no preference pairs");
  if (model.stage != 1)
    throw std::invalid_argument(
        "train_dpo: expected a stage-1 model, got stage " +
        std::to_string(model.stage));
  for (const auto& p : pairs)
    if (p.preferred_text == p.rejected_text)
      throw std::invalid_argument("preference pair with identical sides: " +
                                  p.page_id);
  const selector::PredictorModel reference = model;  // frozen
  const auto cached = detail::cache_pairs(model, reference, pairs);
  for (std::size_t epoch = 0; epoch < cfg.epochs_dpo; ++epoch) {
    const auto g = detail::dpo_gradients_cached(model, cached, cfg.dpo_beta,
                                                cfg.printed_dpo_form);
    detail::apply(model, g, cfg.lr_dpo, /*update_head=*/false,
                  /*update_pref=*/true);
  }
  model.stage = 2;
  return model;
}

// Step 3: regression at the lowered learning rate on document-level targets.
inline selector::PredictorModel train_final(
    selector::PredictorModel model, const std::vector<RegressionExample>& data,
    const TrainConfig& cfg) {
  cfg.validate();
  if (model.stage != 2)
    throw std::invalid_argument(
        "train_final: expected a stage-2 model, got stage " +
        std::to_string(model.stage));
  return detail::run_regression(std::move(model), data, cfg.lr_stage3,
                                cfg.epochs_stage3, cfg.weight_decay, 3);
}

// --- Evaluation helpers ---------------------------------------------------------

// Per-output-column coefficient of determination.
inline std::vector<double> r2_columns(const selector::PredictorModel& model,
                                      const std::vector<RegressionExample>& data) {
  if (data.empty()) throw std::invalid_argument("r2_columns: no data");
  std::vector<double> mean(model.m, 0.0);
  for (const auto& ex : data)
    for (std::size_t j = 0; j < model.m; ++j) mean[j] += ex.targets[j];
  for (auto& v : mean) v /= static_cast<double>(data.size());
  std::vector<double> ss_res(model.m, 0.0), ss_tot(model.m, 0.0);
  for (const auto& ex : data) {
    const auto pred = selector::predict_accuracy(model, ex.input_text);
    for (std::size_t j = 0; j < model.m; ++j) {
      ss_res[j] += (pred[j] - ex.targets[j]) * (pred[j] - ex.targets[j]);
      ss_tot[j] += (ex.targets[j] - mean[j]) * (ex.targets[j] - mean[j]);
    }
  }
  std::vector<double> r2(model.m);
  for (std::size_t j = 0; j < model.m; ++j)
    r2[j] = ss_tot[j] > 0.0 ? 1.0 - ss_res[j] / ss_tot[j] : 0.0;
  return r2;
}

// Fraction of pairs the scorer ranks correctly.
inline double ranking_accuracy(const selector::PredictorModel& model,
                               const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("ranking_accuracy: no pairs");
  std::size_t correct = 0;
  for (const auto& p : pairs)
    if (preference_score(model, p.preferred_text) >
        preference_score(model, p.rejected_text))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// --- CLS II training --------------------------------------------------------------

struct Cls2Example {
  corpus::DocumentMetadata metadata;
  bool improvement = false;
};

// Logistic regression over the metadata feature map; vocabularies come
// from the training split, everything else lands in the OOV bucket.
inline selector::Cls2Model train_cls2(const std::vector<Cls2Example>& data,
                                      double lr = 0.5,
                                      std::size_t epochs = 200) {
  if (data.empty()) throw std::invalid_argument("train_cls2: no data");
  selector::Cls2Model model;
  for (const auto& ex : data) {
    auto add = [](std::map<std::string, std::size_t>& vocab,
                  const std::string& v) {
      if (!vocab.count(v)) {
        const std::size_t idx = vocab.size();
        vocab.emplace(v, idx);
      }
    };
    add(model.tool_vocab, ex.metadata.authoring_tool);
    add(model.publisher_vocab, ex.metadata.publisher);
    add(model.category_vocab, ex.metadata.category);
    add(model.format_vocab, ex.metadata.format_version);
  }
  model.weights.assign(model.feature_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<double> grad(model.weights.size(), 0.0);
    for (const auto& ex : data) {
      const double err =
          model.score(ex.metadata) - (ex.improvement ? 1.0 : 0.0);
      model.for_each_feature(ex.metadata, [&](std::size_t idx, double value) {
        grad[idx] += err * value * inv_n;
      });
    }
    for (std::size_t i = 0; i < model.weights.size(); ++i)
      model.weights[i] -= lr * grad[i];
  }
  return model;
}

// --- Dataset files -----------------------------------------------------------------

// JSON-lines {"text": ..., "targets": [m floats]}.
inline std::vector<RegressionExample> load_regression_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open regression file: " + path);
  std::vector<RegressionExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    RegressionExample ex;
    ex.input_text = j.at("text").get<std::string>();
    ex.targets = j.at("targets").get<std::vector<double>>();
    out.push_back(std::move(ex));
  }
  return out;
}

inline void save_regression_file(const std::string& path,
                                 const std::vector<RegressionExample>& data) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& ex : data) {
    nlohmann::json j = {{"text", ex.input_text}, {"targets", ex.targets}};
    out << j.dump() << '\n';
  }
}

// JSON-lines {"page_id": ..., "preferred": ..., "rejected": ...}.
inline std::vector<PreferencePair> load_preference_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preference file: " + path);
  std::vector<PreferencePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    PreferencePair p;
    p.page_id = j.value("page_id", std::string());
    p.preferred_text = j.at("preferred").get<std::string>();
    p.rejected_text = j.at("rejected").get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

inline void save_preference_file(const std::string& path,
                                 const std::vector<PreferencePair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& p : pairs) {
    nlohmann::json j = {{"page_id", p.page_id},
                        {"preferred", p.preferred_text},
                        {"rejected", p.rejected_text}};
    out << j.dump() << '\n';
  }
}

// Raw judgment export, JSON-lines {"page_id", "winner", "loser",
// "annotator_id"}; "NEITHER" marks indifference. Feeds win-rate reporting;
// indifference records never become training pairs.
inline std::vector<metrics::PreferenceRecord> load_preference_records(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preference records: " + path);
  std::vector<metrics::PreferenceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    metrics::PreferenceRecord r;
    r.page_id = j.at("page_id").get<std::string>();
    r.winner_parser = j.at("winner").get<std::string>();
    r.loser_parser = j.at("loser").get<std::string>();
    r.annotator_id = j.value("annotator_id", std::string("anonymous"));
    out.push_back(std::move(r));
  }
  return out;
}

inline void save_preference_records(
    const std::string& path,
    const std::vector<metrics::PreferenceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : records) {
    nlohmann::json j = {{"page_id", r.page_id},
                        {"winner", r.winner_parser},
                        {"loser", r.loser_parser},
                        {"annotator_id", r.annotator_id}};
    out << j.dump() << '\n';
  }
}

}  // namespace adaparse::training
