#include "vlora/injection.hpp"

#include <algorithm>

namespace vlora {

void InjectionPlan::validate(std::size_t d_blocks) const {
  if (target_blocks.empty()) throw ContractError("injection plan: no target blocks");
  for (std::size_t i = 0; i < target_blocks.size(); ++i) {
    if (target_blocks[i] >= d_blocks)
      throw ContractError("injection plan: block " + std::to_string(target_blocks[i]) + " out of range");
    if (i > 0 && target_blocks[i] <= target_blocks[i - 1])
      throw ContractError("injection plan: target blocks must be strictly increasing");
  }
  if (kinds.empty()) throw ContractError("injection plan: no weight kinds");
  for (std::size_t i = 0; i < kinds.size(); ++i)
    for (std::size_t j = i + 1; j < kinds.size(); ++j)
      if (kinds[i] == kinds[j]) throw ContractError("injection plan: duplicate weight kind");
}

InjectionPlan build_plan(std::size_t d_blocks, std::size_t k, std::vector<WeightKind> kinds) {
  if (k == 0) throw ContractError("build_plan: k must be >= 1");
  if (d_blocks % k != 0)
    throw ContractError("build_plan: d_blocks (" + std::to_string(d_blocks) + ") is not divisible by k (" +
                        std::to_string(k) + ")");
  InjectionPlan plan;
  const std::size_t stride = d_blocks / k;
  for (std::size_t i = 0; i < k; ++i) plan.target_blocks.push_back(i * stride);
  plan.kinds = std::move(kinds);
  plan.validate(d_blocks);
  return plan;
}

template <typename T>
LlmWeights<T> merge(const LlmWeights<T>& base, std::span<const LowRankDelta<T>> deltas) {
  const auto table = resolve_deltas<T>(base.config, deltas);
  NoGradGuard no_grad;
  auto merged = base.clone();
  for (std::size_t b = 0; b < table.size(); ++b) {
    for (auto kind : kAllWeightKinds) {
      const auto* d = table[b][kind_index(kind)];
      if (d == nullptr) continue;
      auto& w = merged.blocks[b].matrix(kind);
      const bool grad = w.requires_grad();
      w = add(w, d->effective());
      w.set_requires_grad(grad);
    }
  }
  return merged;
}

template <typename T>
Tensor<T> branch_forward(const LlmWeights<T>& weights, std::span<const LowRankDelta<T>> deltas,
                         std::span<const TokenId> tokens) {
  return llm_forward(weights, tokens, deltas);
}

template LlmWeights<float> merge(const LlmWeights<float>&, std::span<const LowRankDelta<float>>);
template LlmWeights<double> merge(const LlmWeights<double>&, std::span<const LowRankDelta<double>>);
template Tensor<float> branch_forward(const LlmWeights<float>&, std::span<const LowRankDelta<float>>,
                                      std::span<const TokenId>);
template Tensor<double> branch_forward(const LlmWeights<double>&, std::span<const LowRankDelta<double>>,
                                       std::span<const TokenId>);

}  // namespace vlora
