#pragma once

#include <span>
#include <vector>

#include "vlora/delta.hpp"
#include "vlora/llm.hpp"

namespace vlora {

// Which LM blocks receive the k deltas of each generator, and which weight
// kinds get a generator at all.
struct InjectionPlan {
  std::vector<std::size_t> target_blocks;  // strictly increasing, one per perceptual query
  std::vector<WeightKind> kinds;

  std::size_t k() const { return target_blocks.size(); }
  std::size_t deltas_per_image() const { return target_blocks.size() * kinds.size(); }
  void validate(std::size_t d_blocks) const;
};

// Blocks {0, s, 2s, ...} with stride s = d_blocks / k. d_blocks must be a
// multiple of k.
InjectionPlan build_plan(std::size_t d_blocks, std::size_t k, std::vector<WeightKind> kinds);

// W_hat = W + down · up for every delta. The result is a fresh set of
// tensors; `base` is left untouched.
template <typename T>
LlmWeights<T> merge(const LlmWeights<T>& base, std::span<const LowRankDelta<T>> deltas);

// Branch-form forward: every targeted matrix acts as x·W + (x·down)·up.
template <typename T>
Tensor<T> branch_forward(const LlmWeights<T>& weights, std::span<const LowRankDelta<T>> deltas,
                         std::span<const TokenId> tokens);

// Keeps a pristine copy of the base weights so that swapping images never
// accumulates rounding drift: every apply() merges into the stored base.
template <typename T>
class WeightMerger {
 public:
  explicit WeightMerger(const LlmWeights<T>& base) : base_(base.clone()), current_(base_.clone()) {}

  const LlmWeights<T>& apply(std::span<const LowRankDelta<T>> deltas) {
    current_ = merge(base_, deltas);
    return current_;
  }
  const LlmWeights<T>& restore() {
    current_ = base_.clone();
    return current_;
  }

  const LlmWeights<T>& base() const { return base_; }
  const LlmWeights<T>& current() const { return current_; }

 private:
  LlmWeights<T> base_;
  LlmWeights<T> current_;
};

}  // namespace vlora
