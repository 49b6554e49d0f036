#include "vlora/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "json.hpp"

namespace vlora {

using nlohmann::json;

namespace {

// Reads known keys of one section; anything left over is an error.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError("config section '" + name + "' must be an object");
  }

  template <typename V>
  Section& read(const std::string& key, V& out) {
    seen_.push_back(key);
    if (!node_ || !node_->contains(key)) return *this;
    const auto& value = node_->at(key);
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!value.is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_unsigned_v<V>) {
        if (!value.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!value.is_number()) throw ConfigError("expected a number");
      } else {
        if (!value.is_string()) throw ConfigError("expected a string");
      }
      out = value.get<V>();
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
    return *this;
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::vector<std::string> seen_;
};

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void read_llm(const json& root, LlmConfig& c) {
  Section(root, "llm")
      .read("d_blocks", c.d_blocks)
      .read("h", c.h)
      .read("n_heads", c.n_heads)
      .read("h_ff", c.h_ff)
      .read("vocab", c.vocab)
      .read("max_seq", c.max_seq)
      .read("init_std", c.init_std)
      .read("norm_eps", c.norm_eps)
      .finish();
}

void read_vision(const json& root, VisionConfig& c) {
  Section(root, "vision")
      .read("grid", c.grid)
      .read("alphabet", c.alphabet)
      .read("d_v", c.d_v)
      .read("init_std", c.init_std)
      .finish();
}

void read_generator(const json& root, GeneratorSettings& c) {
  Section(root, "generator")
      .read("h_p", c.h_p)
      .read("blocks", c.blocks)
      .read("queries", c.queries)
      .read("rank", c.rank)
      .read("n_heads", c.n_heads)
      .read("ffn_mult", c.ffn_mult)
      .read("init_std", c.init_std)
      .finish();
}

json llm_json(const LlmConfig& c) {
  return {{"d_blocks", c.d_blocks}, {"h", c.h},         {"n_heads", c.n_heads},   {"h_ff", c.h_ff},
          {"vocab", c.vocab},       {"max_seq", c.max_seq}, {"init_std", c.init_std}, {"norm_eps", c.norm_eps}};
}

json vision_json(const VisionConfig& c) {
  return {{"grid", c.grid}, {"alphabet", c.alphabet}, {"d_v", c.d_v}, {"init_std", c.init_std}};
}

json generator_json(const GeneratorSettings& c) {
  return {{"h_p", c.h_p},         {"blocks", c.blocks},   {"queries", c.queries},  {"rank", c.rank},
          {"n_heads", c.n_heads}, {"ffn_mult", c.ffn_mult}, {"init_std", c.init_std}};
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (train.batch == 0 || train.batch > 32) throw ConfigError("train.batch must be in [1, 32]");
  if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (dataset_size == 0 || eval_size == 0) throw ConfigError("train.dataset_size and train.eval_size must be >= 1");
  if (cost.d_blocks == 0 || cost.h == 0) throw ConfigError("cost.d_blocks and cost.h must be >= 1");
}

RunConfig parse_run_config(std::string_view json_text) {
  const auto root = parse_json(json_text);
  if (!root.is_object()) throw ConfigError("config root must be an object");
  static const std::vector<std::string> sections = {"llm", "vision", "generator", "injection", "train", "cost"};
  for (const auto& [key, _] : root.items())
    if (std::find(sections.begin(), sections.end(), key) == sections.end())
      throw ConfigError("unknown config section '" + key + "'");

  RunConfig c;
  read_llm(root, c.model.llm);
  read_vision(root, c.model.vision);
  read_generator(root, c.model.generator);
  Section(root, "injection").read("kinds", c.kinds_label).finish();
  try {
    c.model.kinds = parse_kind_set(c.kinds_label);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("injection.kinds: ") + e.what());
  }

  std::string stage = std::string(stage_name(c.train.stage));
  auto& t = c.train;
  Section(root, "train")
      .read("steps", t.steps)
      .read("lr", t.lr)
      .read("warmup", t.warmup)
      .read("min_lr_ratio", t.min_lr_ratio)
      .read("batch", t.batch)
      .read("stage", stage)
      .read("image_blind", t.image_blind)
      .read("beta1", t.adam.beta1)
      .read("beta2", t.adam.beta2)
      .read("adam_eps", t.adam.eps)
      .read("weight_decay", t.adam.weight_decay)
      .read("dataset_size", c.dataset_size)
      .read("eval_size", c.eval_size)
      .finish();
  try {
    t.stage = parse_stage(stage);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("train.stage: ") + e.what());
  }

  std::uint64_t d = c.cost.d_blocks, h = c.cost.h, C = c.cost.C, k = c.cost.k, r = c.cost.r;
  Section(root, "cost").read("d_blocks", d).read("h", h).read("C", C).read("k", k).read("r", r).finish();
  c.cost = CostParams{d, h, C, 0, k, r};

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  json root = {
      {"llm", llm_json(c.model.llm)},
      {"vision", vision_json(c.model.vision)},
      {"generator", generator_json(c.model.generator)},
      {"injection", {{"kinds", c.kinds_label}}},
      {"train",
       {{"steps", t.steps},
        {"lr", t.lr},
        {"warmup", t.warmup},
        {"min_lr_ratio", t.min_lr_ratio},
        {"batch", t.batch},
        {"stage", std::string(stage_name(t.stage))},
        {"image_blind", t.image_blind},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"adam_eps", t.adam.eps},
        {"weight_decay", t.adam.weight_decay},
        {"dataset_size", c.dataset_size},
        {"eval_size", c.eval_size}}},
      {"cost", {{"d_blocks", c.cost.d_blocks}, {"h", c.cost.h}, {"C", c.cost.C}, {"k", c.cost.k}, {"r", c.cost.r}}},
  };
  return root.dump(2);
}

std::string model_config_to_json(const ModelConfig& c) {
  json kinds = json::array();
  for (auto kind : c.kinds) kinds.push_back(std::string(kind_name(kind)));
  json root = {{"llm", llm_json(c.llm)},
               {"vision", vision_json(c.vision)},
               {"generator", generator_json(c.generator)},
               {"kinds", kinds}};
  return root.dump(2);
}

ModelConfig model_config_from_json(std::string_view json_text) {
  const auto root = parse_json(json_text);
  ModelConfig c;
  read_llm(root, c.llm);
  read_vision(root, c.vision);
  read_generator(root, c.generator);
  if (!root.contains("kinds") || !root.at("kinds").is_array()) throw ConfigError("model config: missing kinds");
  c.kinds.clear();
  for (const auto& k : root.at("kinds")) c.kinds.push_back(kind_from_name(k.get<std::string>()));
  c.validate();
  return c;
}

}  // namespace vlora
