#include "vlora/model.hpp"

#include <fstream>

#include "vlora/checkpoint.hpp"
#include "vlora/config.hpp"

namespace vlora {

GeneratorConfig ModelConfig::generator_config(WeightKind kind) const {
  GeneratorConfig g;
  g.h_p = generator.h_p;
  g.blocks = generator.blocks;
  g.queries = generator.queries;
  g.rank = generator.rank;
  g.n_heads = generator.n_heads;
  g.ffn_mult = generator.ffn_mult;
  g.init_std = generator.init_std;
  g.norm_eps = llm.norm_eps;
  g.target = kind;
  return g;
}

void ModelConfig::validate() const {
  llm.validate();
  vision.validate();
  if (kinds.empty()) throw ContractError("model config: no weight kinds selected");
  for (auto kind : kinds) generator_config(kind).validate();
  build_plan(llm.d_blocks, generator.queries, kinds);
  if (llm.vocab < vision.alphabet + 1)
    throw ContractError("model config: vocab must hold the BOS token plus one token per symbol");
  if (llm.max_seq < vision.cells())
    throw ContractError("model config: max_seq is shorter than a caption");
}

template <typename T>
VloraModel<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng root(seed);
  Rng llm_rng = root.fork();
  Rng vision_rng = root.fork();
  VloraModel<T> m;
  m.config = config;
  m.plan = build_plan(config.llm.d_blocks, config.generator.queries, config.kinds);
  m.llm = init_llm<T>(config.llm, llm_rng);
  m.vision = init_vision<T>(config.vision, vision_rng);
  for (auto kind : config.kinds) {
    Rng gen_rng = root.fork();
    m.generators.push_back(init_generator<T>(config.generator_config(kind),
                                             target_shape(kind, config.llm.h, config.llm.h_ff), config.vision.d_v,
                                             gen_rng));
  }
  return m;
}

template <typename T>
std::vector<LowRankDelta<T>> perceive(const VloraModel<T>& model, const SyntheticImage& image) {
  const auto z = encode_image(image, model.vision);
  std::vector<LowRankDelta<T>> all;
  for (const auto& g : model.generators) {
    auto deltas = generate_deltas(z, g, model.plan);
    std::move(deltas.begin(), deltas.end(), std::back_inserter(all));
  }
  return all;
}

template <typename T>
Tensor<T> vlora_logits(const VloraModel<T>& model, const SyntheticImage& image, std::span<const TokenId> tokens,
                       ApplyMode mode) {
  switch (mode) {
    case ApplyMode::Blind: return llm_forward(model.llm, tokens);
    case ApplyMode::Branch: {
      const auto deltas = perceive(model, image);
      return branch_forward<T>(model.llm, deltas, tokens);
    }
    case ApplyMode::Merged: {
      const auto deltas = perceive(model, image);
      const auto merged = merge<T>(model.llm, deltas);
      return llm_forward(merged, tokens);
    }
  }
  throw ContractError("unknown apply mode");
}

namespace {

template <typename Weights>
Checkpoint to_checkpoint(const Weights& w) {
  Checkpoint ckpt;
  w.visit([&ckpt](const std::string& name, const auto& t) { ckpt.put(name, t); });
  return ckpt;
}

template <typename T, typename Weights>
void from_checkpoint(const Checkpoint& ckpt, Weights& w) {
  w.visit([&ckpt](const std::string& name, Tensor<T>& t) {
    auto loaded = ckpt.template get<T>(name);
    if (loaded.shape() != t.shape())
      throw Error("checkpoint entry '" + name + "' has shape " + shape_string(loaded.shape()) + ", expected " +
                  shape_string(t.shape()));
    t = loaded;
  });
}

}  // namespace

template <typename T>
void save_model(const VloraModel<T>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create checkpoint directory '" + dir.string() + "': " + ec.message());
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw Error("cannot write '" + (dir / "config.json").string() + "'");
    out << model_config_to_json(model.config) << "\n";
  }
  to_checkpoint(model.llm).save(dir / "llm.ckpt");
  to_checkpoint(model.vision).save(dir / "vision.ckpt");
  Checkpoint gen;
  for (const auto& g : model.generators)
    g.visit([&gen](const std::string& name, const Tensor<T>& t) { gen.put(name, t); });
  gen.save(dir / "generator.ckpt");
}

template <typename T>
VloraModel<T> load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw Error("cannot read '" + (dir / "config.json").string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto model = init_model<T>(model_config_from_json(text), 0);
  from_checkpoint<T>(Checkpoint::load(dir / "llm.ckpt"), model.llm);
  from_checkpoint<T>(Checkpoint::load(dir / "vision.ckpt"), model.vision);
  const auto gen = Checkpoint::load(dir / "generator.ckpt");
  for (auto& g : model.generators) from_checkpoint<T>(gen, g);
  return model;
}

#define VLORA_INSTANTIATE(T)                                                                             \
  template VloraModel<T> init_model<T>(const ModelConfig&, std::uint64_t);                               \
  template std::vector<LowRankDelta<T>> perceive(const VloraModel<T>&, const SyntheticImage&);           \
  template Tensor<T> vlora_logits(const VloraModel<T>&, const SyntheticImage&, std::span<const TokenId>, \
                                  ApplyMode);                                                            \
  template void save_model(const VloraModel<T>&, const std::filesystem::path&);                          \
  template VloraModel<T> load_model<T>(const std::filesystem::path&);

VLORA_INSTANTIATE(float)
VLORA_INSTANTIATE(double)

}  // namespace vlora
