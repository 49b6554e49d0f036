#pragma once

// Run configuration: a JSON document with the sections llm, vision,
// generator, injection, train and cost. Every section and key is optional;
// missing keys keep their defaults, unknown keys are rejected, and the
// resulting configuration is validated as a whole.
//
//   {
//     "llm":       {"d_blocks": 8, "h": 64, "n_heads": 4, "h_ff": 256, "vocab": 64, "max_seq": 32,
//                   "init_std": 0.02, "norm_eps": 1e-6},
//     "vision":    {"grid": 4, "alphabet": 16, "d_v": 32, "init_std": 0.02},
//     "generator": {"h_p": 512, "blocks": 8, "queries": 8, "rank": 64, "n_heads": 8, "ffn_mult": 4,
//                   "init_std": 0.02},
//     "injection": {"kinds": "qkvom"},
//     "train":     {"steps": 2000, "lr": 5e-5, "warmup": 100, "min_lr_ratio": 0.0, "batch": 1,
//                   "stage": "pretrain", "image_blind": false, "beta1": 0.9, "beta2": 0.999,
//                   "adam_eps": 1e-8, "weight_decay": 0.0, "dataset_size": 512, "eval_size": 64},
//     "cost":      {"d_blocks": 32, "h": 4096, "C": 32, "k": 8, "r": 64}
//   }

#include <filesystem>
#include <string>
#include <string_view>

#include "vlora/cost_model.hpp"
#include "vlora/model.hpp"
#include "vlora/train.hpp"

namespace vlora {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  ModelConfig model;
  std::string kinds_label = "qkvom";
  TrainConfig train;
  std::size_t dataset_size = 512;
  std::size_t eval_size = 64;
  CostParams cost;

  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

// Model shape only, as stored next to checkpoints.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view json_text);

}  // namespace vlora
