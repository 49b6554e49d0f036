#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vlora/tensor.hpp"

namespace vlora {

// The six decoder-block matrices a perceptual delta can target.
enum class WeightKind { Q, K, V, O, FfnUp, FfnDown };

inline constexpr std::array<WeightKind, 6> kAllWeightKinds = {
    WeightKind::Q, WeightKind::K, WeightKind::V, WeightKind::O, WeightKind::FfnUp, WeightKind::FfnDown};
inline constexpr std::size_t kWeightKindCount = kAllWeightKinds.size();

constexpr std::size_t kind_index(WeightKind kind) { return static_cast<std::size_t>(kind); }

// Stable short name used in checkpoint entry names: q, k, v, o, ffn_up, ffn_down.
std::string_view kind_name(WeightKind kind);
WeightKind kind_from_name(std::string_view name);

struct TargetShape {
  std::size_t in = 0;
  std::size_t out = 0;
  bool operator==(const TargetShape&) const = default;
};

// Q, K, V, O are h x h; FfnUp is h x h_ff; FfnDown is h_ff x h.
TargetShape target_shape(WeightKind kind, std::size_t h, std::size_t h_ff);

// Expands an ablation label from the qkvom taxonomy into weight kinds.
// "m" names the whole FFN and therefore expands to {FfnUp, FfnDown}.
// Accepted labels: qkvom, qkvm, qkv, qko, qk.
std::vector<WeightKind> parse_kind_set(std::string_view label);
const std::vector<std::string>& kind_set_labels();

// delta = down · up, applied to one matrix of one decoder block.
template <typename T>
struct LowRankDelta {
  Tensor<T> down;  // [h_in x r]
  Tensor<T> up;    // [r x h_out]
  WeightKind target = WeightKind::Q;
  std::size_t block_index = 0;

  std::size_t rank() const { return down.cols(); }
  TargetShape shape() const { return {down.rows(), up.cols()}; }
  // Materialized down · up.
  Tensor<T> effective() const { return matmul(down, up); }
};

}  // namespace vlora
