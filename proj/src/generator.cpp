#include "vlora/generator.hpp"

#include "vlora/llm.hpp"

namespace vlora {

void GeneratorConfig::validate() const {
  if (h_p == 0 || blocks == 0 || queries == 0 || rank == 0 || n_heads == 0 || ffn_mult == 0)
    throw ContractError("generator config: all extents must be >= 1");
  if (h_p % n_heads != 0)
    throw ContractError("generator config: h_p (" + std::to_string(h_p) + ") is not divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
  if (!(init_std > 0.0)) throw ContractError("generator config: init_std must be positive");
}

GeneratorParameterCounts count_generator_parameters(const GeneratorConfig& config, TargetShape target,
                                                    std::size_t d_v) {
  const auto hp = config.h_p;
  const auto hf = config.ffn_mult * hp;
  const std::size_t per_block = 3 * hp + d_v      // norms
                                + 6 * hp * hp     // self q/k/v/o, cross q/o
                                + 2 * d_v * hp    // cross k/v
                                + 2 * hp * hf;    // ffn
  GeneratorParameterCounts c;
  c.queries = config.queries * hp;
  c.blocks = config.blocks * per_block;
  c.out_norm = hp;
  c.w_share = hp * target.in * config.rank;
  c.w_s = config.queries * config.rank * target.out;
  return c;
}

template <typename T>
std::size_t GeneratorWeights<T>::parameter_count() const {
  std::size_t total = 0;
  visit([&total](const std::string&, const Tensor<T>& t) { total += t.numel(); });
  return total;
}

template <typename T>
GeneratorWeights<T> init_generator(const GeneratorConfig& config, TargetShape target, std::size_t d_v, Rng& rng) {
  config.validate();
  if (target.in == 0 || target.out == 0 || d_v == 0) throw ContractError("init_generator: empty target or features");
  const double s = config.init_std;
  const auto hp = config.h_p;
  const auto hf = config.ffn_mult * hp;
  GeneratorWeights<T> w;
  w.config = config;
  w.target = target;
  w.d_v = d_v;
  w.queries = Tensor<T>::randn({config.queries, hp}, s, rng);
  for (std::size_t i = 0; i < config.blocks; ++i) {
    GeneratorBlockWeights<T> b;
    b.self_norm = Tensor<T>::full({hp}, T(1));
    b.self_wq = Tensor<T>::randn({hp, hp}, s, rng);
    b.self_wk = Tensor<T>::randn({hp, hp}, s, rng);
    b.self_wv = Tensor<T>::randn({hp, hp}, s, rng);
    b.self_wo = Tensor<T>::randn({hp, hp}, s, rng);
    b.cross_norm = Tensor<T>::full({hp}, T(1));
    b.cross_wq = Tensor<T>::randn({hp, hp}, s, rng);
    b.feature_norm = Tensor<T>::full({d_v}, T(1));
    b.cross_wk = Tensor<T>::randn({d_v, hp}, s, rng);
    b.cross_wv = Tensor<T>::randn({d_v, hp}, s, rng);
    b.cross_wo = Tensor<T>::randn({hp, hp}, s, rng);
    b.ffn_norm = Tensor<T>::full({hp}, T(1));
    b.ffn_w1 = Tensor<T>::randn({hp, hf}, s, rng);
    b.ffn_w2 = Tensor<T>::randn({hf, hp}, s, rng);
    w.blocks.push_back(std::move(b));
  }
  w.out_norm = Tensor<T>::full({hp}, T(1));
  w.w_share = Tensor<T>::randn({hp, target.in * config.rank}, s, rng);
  for (std::size_t i = 0; i < config.queries; ++i) w.w_s.push_back(Tensor<T>::zeros({config.rank, target.out}));
  return w;
}

template <typename T>
Tensor<T> generator_blocks_forward(const Tensor<T>& queries, const Tensor<T>& features,
                                   const GeneratorWeights<T>& weights) {
  const auto& cfg = weights.config;
  if (features.rank() != 2 || features.cols() != weights.d_v)
    throw ShapeError("generator: visual features " + shape_string(features.shape()) + " do not match d_v " +
                     std::to_string(weights.d_v));
  if (queries.rank() != 2 || queries.cols() != cfg.h_p)
    throw ShapeError("generator: queries " + shape_string(queries.shape()) + " do not match h_p");
  const T eps = static_cast<T>(cfg.norm_eps);
  auto x = queries;
  for (const auto& b : weights.blocks) {
    const auto s = rms_norm(x, b.self_norm, eps);
    const auto self = attention(matmul(s, b.self_wq), matmul(s, b.self_wk), matmul(s, b.self_wv), cfg.n_heads,
                                /*causal=*/false);
    x = add(x, matmul(self, b.self_wo));

    const auto c = rms_norm(x, b.cross_norm, eps);
    const auto z = rms_norm(features, b.feature_norm, eps);
    const auto cross = attention(matmul(c, b.cross_wq), matmul(z, b.cross_wk), matmul(z, b.cross_wv), cfg.n_heads,
                                 /*causal=*/false);
    x = add(x, matmul(cross, b.cross_wo));

    x = add(x, ffn_forward(rms_norm(x, b.ffn_norm, eps), b.ffn_w1, b.ffn_w2));
  }
  return rms_norm(x, weights.out_norm, eps);
}

template <typename T>
std::vector<LowRankDelta<T>> generate_deltas(const Tensor<T>& features, const GeneratorWeights<T>& weights,
                                             const InjectionPlan& plan) {
  const auto& cfg = weights.config;
  if (plan.k() != cfg.queries)
    throw ContractError("generate_deltas: plan has " + std::to_string(plan.k()) + " target blocks but the generator has " +
                        std::to_string(cfg.queries) + " queries");
  const auto p_v = generator_blocks_forward(weights.queries, features, weights);
  // Row i of visual is p_v[i] · W_share; entry (a, b) of down_i is visual[i][a * r + b].
  const auto visual = matmul(p_v, weights.w_share);
  std::vector<LowRankDelta<T>> deltas;
  deltas.reserve(cfg.queries);
  for (std::size_t i = 0; i < cfg.queries; ++i) {
    LowRankDelta<T> d;
    d.down = reshape(slice_rows(visual, i, 1), {weights.target.in, cfg.rank});
    d.up = weights.w_s[i];
    d.target = cfg.target;
    d.block_index = plan.target_blocks[i];
    deltas.push_back(std::move(d));
  }
  return deltas;
}

#define VLORA_INSTANTIATE(T)                                                                                      \
  template std::size_t GeneratorWeights<T>::parameter_count() const;                                              \
  template GeneratorWeights<T> init_generator<T>(const GeneratorConfig&, TargetShape, std::size_t, Rng&);         \
  template Tensor<T> generator_blocks_forward(const Tensor<T>&, const Tensor<T>&, const GeneratorWeights<T>&);    \
  template std::vector<LowRankDelta<T>> generate_deltas(const Tensor<T>&, const GeneratorWeights<T>&,             \
                                                        const InjectionPlan&);

VLORA_INSTANTIATE(float)
VLORA_INSTANTIATE(double)

}  // namespace vlora
