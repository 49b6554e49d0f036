#pragma once

// Synthetic captioning data, freeze policies, AdamW and the training loop.
//
// Caption derivation: token 0 is BOS, and the symbol in cell i (row-major)
// becomes token 1 + symbol. The caption therefore reads the grid out cell by
// cell, and a model that cannot see the image can do no better than the
// symbol marginal.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlora/model.hpp"

namespace vlora {

inline constexpr TokenId kBosToken = 0;
inline constexpr TokenId kSymbolTokenOffset = 1;

struct SyntheticPair {
  SyntheticImage image;
  std::vector<TokenId> caption;
};

// Caption: BOS, then each cell symbol in row-major order shifted by
// kSymbolTokenOffset.
std::vector<TokenId> derive_caption(const SyntheticImage& image);

// Text-only language data for warming up the LM before perceptual training.
// The prefix token (one past the last symbol token) marks it as text; after
// it every cell symbol is written twice. The repeats are predictable, so the
// LM learns a sharp symbol head.
TokenId text_prefix_token(const VisionConfig& vision);
std::vector<TokenId> derive_doubled_text(const SyntheticImage& image, const VisionConfig& vision);

// Captions: every pair is a caption. Warmup: even pairs are captions, odd
// pairs are doubled text, which keeps the LM's caption prior uniform while
// sharpening its head. Warmup needs max_seq >= 2 * cells and
// vocab >= alphabet + 2.
enum class Corpus { Captions, Warmup };
Corpus parse_corpus(std::string_view name);
std::string_view corpus_name(Corpus corpus);

std::vector<SyntheticPair> make_dataset(const VisionConfig& vision, Rng& rng, std::size_t n,
                                        Corpus corpus = Corpus::Captions);

// Training pairs followed by held-out pairs, both drawn from one stream
// seeded with `seed`.
struct DatasetSplit {
  std::vector<SyntheticPair> train;
  std::vector<SyntheticPair> eval;
};
DatasetSplit make_splits(const VisionConfig& vision, std::uint64_t seed, std::size_t train_n, std::size_t eval_n,
                         Corpus corpus = Corpus::Captions);

enum class Stage { Pretrain, Finetune };

Stage parse_stage(std::string_view name);
std::string_view stage_name(Stage stage);

// Pretrain: generators only. Finetune: generators and LM. The vision stub is
// frozen in both.
struct FreezePolicy {
  Stage stage = Stage::Pretrain;

  bool generator_trainable() const { return true; }
  bool llm_trainable() const { return stage == Stage::Finetune; }
  bool vision_trainable() const { return false; }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWConfig config);

  // Applies one update from the current gradients. lr == 0 leaves every
  // parameter bit-identical.
  void step(double lr);
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig config_;
  std::size_t t_ = 0;
};

// Linear warm-up to `peak` over `warmup` steps, then cosine decay towards
// peak * min_ratio at step `total`.
struct LrSchedule {
  double peak = 1e-3;
  std::size_t warmup = 0;
  std::size_t total = 1;
  double min_ratio = 0.0;

  double at(std::size_t step) const;
};

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 5e-5;
  std::size_t warmup = 100;
  double min_lr_ratio = 0.0;
  std::size_t batch = 1;
  Stage stage = Stage::Pretrain;
  bool image_blind = false;  // deltas forced to zero throughout
  AdamWConfig adam;
  std::uint64_t shuffle_seed = 0;
  std::filesystem::path checkpoint_dir;  // written at the end when non-empty
};

// Owns the optimizer over the policy's trainable set. Frozen parameters have
// requires_grad switched off, so they are constants to the autodiff graph.
template <typename T>
class Trainer {
 public:
  Trainer(VloraModel<T>& model, FreezePolicy policy, const TrainConfig& config);

  // One optimizer step on the mean loss over `batch`: encode the image,
  // generate deltas, branch-form forward, next-token cross-entropy, backward,
  // update. Returns the mean loss before the update.
  double step(std::span<const SyntheticPair> batch, double lr);

  const std::vector<std::string>& trainable_names() const { return names_; }
  std::size_t steps_taken() const { return optimizer_.steps_taken(); }

 private:
  static std::vector<Tensor<T>> select(VloraModel<T>& model, FreezePolicy policy, std::vector<std::string>& names);

  VloraModel<T>& model_;
  FreezePolicy policy_;
  bool image_blind_;
  std::vector<std::string> names_;
  AdamW<T> optimizer_;
};

// Differentiable per-pair loss (used by training and gradient checks).
template <typename T>
Tensor<T> pair_loss(const VloraModel<T>& model, const SyntheticPair& pair, bool image_blind);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> log;

  double initial_loss() const;
  // Mean loss over the last `window` steps.
  double final_mean_loss(std::size_t window) const;
};

// Formats one metrics line: {"step":N,"lr":X,"loss":Y}
std::string format_step_record(const StepRecord& record);

template <typename T>
TrainResult train_loop(VloraModel<T>& model, std::span<const SyntheticPair> dataset, const TrainConfig& config,
                       std::ostream* metrics = nullptr);

enum class EvalMode {
  Matched,          // each caption with its own image
  ImageBlind,       // deltas forced to zero
  ShuffledPairing,  // caption i scored with the image of pair (i + 1) mod n
};

// Teacher-forced perplexity exp(mean token cross-entropy).
template <typename T>
double eval_perplexity(const VloraModel<T>& model, std::span<const SyntheticPair> pairs, EvalMode mode);

}  // namespace vlora
