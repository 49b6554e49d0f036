#pragma once

// A complete toy VLoRA model: frozen vision stub, toy LM, and one perceptual
// weights generator per weight kind in the injection plan.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vlora/generator.hpp"
#include "vlora/injection.hpp"
#include "vlora/llm.hpp"
#include "vlora/vision.hpp"

namespace vlora {

struct GeneratorSettings {
  std::size_t h_p = 512;
  std::size_t blocks = 8;
  std::size_t queries = 8;
  std::size_t rank = 64;
  std::size_t n_heads = 8;
  std::size_t ffn_mult = 4;
  double init_std = 0.02;
};

struct ModelConfig {
  LlmConfig llm;
  VisionConfig vision;
  GeneratorSettings generator;
  std::vector<WeightKind> kinds{kAllWeightKinds.begin(), kAllWeightKinds.end()};

  GeneratorConfig generator_config(WeightKind kind) const;
  void validate() const;
};

template <typename T>
struct VloraModel {
  ModelConfig config;
  InjectionPlan plan;
  LlmWeights<T> llm;
  VisionWeights<T> vision;
  std::vector<GeneratorWeights<T>> generators;  // parallel to plan.kinds

  template <typename Fn>
  void visit(Fn&& fn) {
    llm.visit(fn);
    vision.visit(fn);
    for (auto& g : generators) g.visit(fn);
  }
};

// The LM, the vision stub and each generator draw from independent streams
// forked off `seed` in that order, so changing the generator set leaves the
// LM initialization unchanged.
template <typename T>
VloraModel<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Encodes the image and runs every generator: k deltas per weight kind.
template <typename T>
std::vector<LowRankDelta<T>> perceive(const VloraModel<T>& model, const SyntheticImage& image);

enum class ApplyMode {
  Branch,  // x·W + (x·down)·up
  Merged,  // x·(W + down·up)
  Blind,   // no deltas at all
};

template <typename T>
Tensor<T> vlora_logits(const VloraModel<T>& model, const SyntheticImage& image, std::span<const TokenId> tokens,
                       ApplyMode mode);

// Directory layout: config.json, llm.ckpt, vision.ckpt, generator.ckpt.
template <typename T>
void save_model(const VloraModel<T>& model, const std::filesystem::path& dir);
template <typename T>
VloraModel<T> load_model(const std::filesystem::path& dir);

}  // namespace vlora
