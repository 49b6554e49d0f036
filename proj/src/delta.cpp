#include "vlora/delta.hpp"

namespace vlora {

std::string_view kind_name(WeightKind kind) {
  switch (kind) {
    case WeightKind::Q: return "q";
    case WeightKind::K: return "k";
    case WeightKind::V: return "v";
    case WeightKind::O: return "o";
    case WeightKind::FfnUp: return "ffn_up";
    case WeightKind::FfnDown: return "ffn_down";
  }
  throw ContractError("unknown weight kind");
}

WeightKind kind_from_name(std::string_view name) {
  for (auto kind : kAllWeightKinds)
    if (kind_name(kind) == name) return kind;
  throw ContractError("unknown weight kind '" + std::string(name) + "'");
}

TargetShape target_shape(WeightKind kind, std::size_t h, std::size_t h_ff) {
  switch (kind) {
    case WeightKind::FfnUp: return {h, h_ff};
    case WeightKind::FfnDown: return {h_ff, h};
    default: return {h, h};
  }
}

const std::vector<std::string>& kind_set_labels() {
  static const std::vector<std::string> labels = {"qkvom", "qkvm", "qkv", "qko", "qk"};
  return labels;
}

std::vector<WeightKind> parse_kind_set(std::string_view label) {
  bool known = false;
  for (const auto& l : kind_set_labels()) known = known || l == label;
  if (!known) throw ContractError("unknown weight-kind set '" + std::string(label) + "' (expected qkvom|qkvm|qkv|qko|qk)");
  std::vector<WeightKind> kinds;
  for (char c : label) {
    switch (c) {
      case 'q': kinds.push_back(WeightKind::Q); break;
      case 'k': kinds.push_back(WeightKind::K); break;
      case 'v': kinds.push_back(WeightKind::V); break;
      case 'o': kinds.push_back(WeightKind::O); break;
      case 'm':
        kinds.push_back(WeightKind::FfnUp);
        kinds.push_back(WeightKind::FfnDown);
        break;
    }
  }
  return kinds;
}

}  // namespace vlora
