#include "vlora/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>

namespace vlora {

std::vector<TokenId> derive_caption(const SyntheticImage& image) {
  std::vector<TokenId> caption{kBosToken};
  for (auto s : image.cells) caption.push_back(kSymbolTokenOffset + s);
  return caption;
}

TokenId text_prefix_token(const VisionConfig& vision) {
  return kSymbolTokenOffset + static_cast<TokenId>(vision.alphabet);
}

std::vector<TokenId> derive_doubled_text(const SyntheticImage& image, const VisionConfig& vision) {
  std::vector<TokenId> text{text_prefix_token(vision)};
  for (auto s : image.cells) text.insert(text.end(), 2, kSymbolTokenOffset + s);
  return text;
}

Corpus parse_corpus(std::string_view name) {
  if (name == "captions") return Corpus::Captions;
  if (name == "warmup") return Corpus::Warmup;
  throw ContractError("unknown corpus '" + std::string(name) + "' (expected captions|warmup)");
}

std::string_view corpus_name(Corpus corpus) { return corpus == Corpus::Captions ? "captions" : "warmup"; }

std::vector<SyntheticPair> make_dataset(const VisionConfig& vision, Rng& rng, std::size_t n, Corpus corpus) {
  vision.validate();
  if (n == 0) throw ContractError("make_dataset: n must be >= 1");
  std::vector<SyntheticPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto image = random_image(vision, rng);
    auto caption = corpus == Corpus::Warmup && i % 2 == 1 ? derive_doubled_text(image, vision) : derive_caption(image);
    pairs.push_back({std::move(image), std::move(caption)});
  }
  return pairs;
}

DatasetSplit make_splits(const VisionConfig& vision, std::uint64_t seed, std::size_t train_n, std::size_t eval_n,
                         Corpus corpus) {
  Rng rng(seed);
  DatasetSplit split;
  split.train = make_dataset(vision, rng, train_n, corpus);
  split.eval = make_dataset(vision, rng, eval_n, corpus);
  return split;
}

Stage parse_stage(std::string_view name) {
  if (name == "pretrain") return Stage::Pretrain;
  if (name == "finetune") return Stage::Finetune;
  throw ContractError("unknown stage '" + std::string(name) + "' (expected pretrain|finetune)");
}

std::string_view stage_name(Stage stage) { return stage == Stage::Pretrain ? "pretrain" : "finetune"; }

// ---- AdamW -----------------------------------------------------------------

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto g = p.grad();
    auto values = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double gj = g[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps) + config_.weight_decay * values[j];
      values[j] = static_cast<T>(static_cast<double>(values[j]) - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double span = static_cast<double>(std::max<std::size_t>(1, total - std::min(total, warmup)));
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
  const double floor = peak * min_ratio;
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- Trainer ---------------------------------------------------------------

template <typename T>
std::vector<Tensor<T>> Trainer<T>::select(VloraModel<T>& model, FreezePolicy policy, std::vector<std::string>& names) {
  std::vector<Tensor<T>> params;
  model.visit([&](const std::string& name, Tensor<T>& t) {
    bool trainable = false;
    if (name.rfind("llm.", 0) == 0) trainable = policy.llm_trainable();
    else if (name.rfind("vision.", 0) == 0) trainable = policy.vision_trainable();
    else if (name.rfind("pwg.", 0) == 0) trainable = policy.generator_trainable();
    t.set_requires_grad(trainable);
    if (trainable) {
      params.push_back(t);
      names.push_back(name);
    }
  });
  return params;
}

template <typename T>
Trainer<T>::Trainer(VloraModel<T>& model, FreezePolicy policy, const TrainConfig& config)
    : model_(model),
      policy_(policy),
      image_blind_(config.image_blind),
      optimizer_(select(model, policy, names_), config.adam) {}

template <typename T>
Tensor<T> pair_loss(const VloraModel<T>& model, const SyntheticPair& pair, bool image_blind) {
  if (image_blind) return next_token_loss(model.llm, std::span<const TokenId>(pair.caption));
  const auto deltas = perceive(model, pair.image);
  return next_token_loss<T>(model.llm, pair.caption, deltas);
}

template <typename T>
double Trainer<T>::step(std::span<const SyntheticPair> batch, double lr) {
  if (batch.empty()) throw ContractError("train step: empty batch");
  optimizer_.zero_grad();
  double total = 0.0;
  const T weight = T(1) / static_cast<T>(batch.size());
  for (const auto& pair : batch) {
    Tensor<T> loss;
    try {
      loss = pair_loss(model_, pair, image_blind_);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("train step " + std::to_string(optimizer_.steps_taken()) + " (stage " +
                           std::string(stage_name(policy_.stage)) + ", lr " + std::to_string(lr) +
                           "): " + e.what());
    }
    total += static_cast<double>(loss.item());
    backward(batch.size() == 1 ? loss : scale(loss, weight));
  }
  optimizer_.step(lr);
  return total / static_cast<double>(batch.size());
}

// ---- loop ------------------------------------------------------------------

double TrainResult::initial_loss() const {
  if (log.empty()) throw ContractError("training log is empty");
  return log.front().loss;
}

double TrainResult::final_mean_loss(std::size_t window) const {
  if (log.empty()) throw ContractError("training log is empty");
  const std::size_t n = std::min(window, log.size());
  double total = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) total += log[i].loss;
  return total / static_cast<double>(n);
}

std::string format_step_record(const StepRecord& record) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "{\"step\":%zu,\"lr\":%.9g,\"loss\":%.9g}", record.step, record.lr, record.loss);
  return buf;
}

template <typename T>
TrainResult train_loop(VloraModel<T>& model, std::span<const SyntheticPair> dataset, const TrainConfig& config,
                       std::ostream* metrics) {
  if (dataset.empty()) throw ContractError("train_loop: empty dataset");
  if (config.batch == 0 || config.batch > 32) throw ContractError("train_loop: batch size must be in [1, 32]");
  for (const auto& pair : dataset)
    if (pair.caption.size() < 2 || pair.caption.size() - 1 > model.config.llm.max_seq)
      throw ContractError("train_loop: text of " + std::to_string(pair.caption.size()) +
                          " tokens does not fit max_seq " + std::to_string(model.config.llm.max_seq));
  Trainer<T> trainer(model, FreezePolicy{config.stage}, config);
  const LrSchedule schedule{config.lr, config.warmup, config.steps, config.min_lr_ratio};
  Rng shuffle(config.shuffle_seed);

  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::vector<SyntheticPair> batch;
  TrainResult result;
  for (std::size_t step = 0; step < config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    const double lr = schedule.at(step);
    const StepRecord record{step, lr, trainer.step(batch, lr)};
    result.log.push_back(record);
    if (metrics) *metrics << format_step_record(record) << '\n';
  }
  if (metrics) metrics->flush();
  if (!config.checkpoint_dir.empty()) save_model(model, config.checkpoint_dir);
  return result;
}

template <typename T>
double eval_perplexity(const VloraModel<T>& model, std::span<const SyntheticPair> pairs, EvalMode mode) {
  if (pairs.empty()) throw ContractError("eval_perplexity: no pairs");
  if (mode == EvalMode::ShuffledPairing && pairs.size() < 2)
    throw ContractError("eval_perplexity: shuffled pairing needs at least two pairs");
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& caption = pairs[i].caption;
    const auto& image = mode == EvalMode::ShuffledPairing ? pairs[(i + 1) % pairs.size()].image : pairs[i].image;
    const SyntheticPair probe{image, caption};
    const auto loss = pair_loss(model, probe, mode == EvalMode::ImageBlind);
    const std::size_t n = caption.size() - 1;
    total += static_cast<double>(loss.item()) * static_cast<double>(n);
    tokens += n;
  }
  return std::exp(total / static_cast<double>(tokens));
}

#define VLORA_INSTANTIATE(T)                                                                                 \
  template class AdamW<T>;                                                                                   \
  template class Trainer<T>;                                                                                 \
  template Tensor<T> pair_loss(const VloraModel<T>&, const SyntheticPair&, bool);                            \
  template TrainResult train_loop(VloraModel<T>&, std::span<const SyntheticPair>, const TrainConfig&,        \
                                  std::ostream*);                                                            \
  template double eval_perplexity(const VloraModel<T>&, std::span<const SyntheticPair>, EvalMode);

VLORA_INSTANTIATE(float)
VLORA_INSTANTIATE(double)

}  // namespace vlora
