#pragma once

// Perceptual weights generator: k learnable queries run through N pre-norm
// blocks (self-attention, cross-attention over the visual features, FFN).
// Each resulting query vector p_i is mapped by a shared linear layer to
// h_in * r values, reshaped into the down factor [h_in x r], and paired with
// an independent, zero-initialized up factor [r x h_out]. One generator
// serves one WeightKind.

#include <span>
#include <string>
#include <vector>

#include "vlora/delta.hpp"
#include "vlora/injection.hpp"
#include "vlora/tensor.hpp"

namespace vlora {

struct GeneratorConfig {
  std::size_t h_p = 512;
  std::size_t blocks = 8;
  std::size_t queries = 8;  // k
  std::size_t rank = 64;    // r
  std::size_t n_heads = 8;
  std::size_t ffn_mult = 4;
  WeightKind target = WeightKind::Q;
  double init_std = 0.02;
  double norm_eps = 1e-6;

  void validate() const;
};

template <typename T>
struct GeneratorBlockWeights {
  Tensor<T> self_norm, self_wq, self_wk, self_wv, self_wo;  // [h_p], [h_p x h_p] x4
  Tensor<T> cross_norm, cross_wq, cross_wo;                 // [h_p], [h_p x h_p] x2
  Tensor<T> feature_norm;                                   // [d_v], applied to z before k/v
  Tensor<T> cross_wk, cross_wv;                             // [d_v x h_p]
  Tensor<T> ffn_norm, ffn_w1, ffn_w2;                       // [h_p], [h_p x m*h_p], [m*h_p x h_p]
};

template <typename T>
struct GeneratorWeights {
  GeneratorConfig config;
  TargetShape target;
  std::size_t d_v = 0;
  Tensor<T> queries;  // [k x h_p]
  std::vector<GeneratorBlockWeights<T>> blocks;
  Tensor<T> out_norm;        // [h_p]
  Tensor<T> w_share;         // [h_p x h_in*r]
  std::vector<Tensor<T>> w_s;  // k x [r x h_out], zero at init

  // Names follow pwg.{kind}.queries, pwg.{kind}.block{i}.*, pwg.{kind}.w_share,
  // pwg.{kind}.w_s{i}.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  std::size_t parameter_count() const;
};

// Entry counts per parameter group, computed from shapes alone (no allocation).
struct GeneratorParameterCounts {
  std::size_t queries = 0;
  std::size_t blocks = 0;
  std::size_t out_norm = 0;
  std::size_t w_share = 0;
  std::size_t w_s = 0;
  std::size_t total() const { return queries + blocks + out_norm + w_share + w_s; }
};
GeneratorParameterCounts count_generator_parameters(const GeneratorConfig& config, TargetShape target, std::size_t d_v);

template <typename T>
GeneratorWeights<T> init_generator(const GeneratorConfig& config, TargetShape target, std::size_t d_v, Rng& rng);

// p_v [k x h_p] after all generator blocks and the output norm.
template <typename T>
Tensor<T> generator_blocks_forward(const Tensor<T>& queries, const Tensor<T>& features,
                                   const GeneratorWeights<T>& weights);

// One delta per query, bound to plan.target_blocks[i].
template <typename T>
std::vector<LowRankDelta<T>> generate_deltas(const Tensor<T>& features, const GeneratorWeights<T>& weights,
                                             const InjectionPlan& plan);

// ---- template members ------------------------------------------------------

template <typename T>
template <typename Fn>
void GeneratorWeights<T>::visit(Fn&& fn) {
  const std::string root = "pwg." + std::string(kind_name(config.target)) + ".";
  fn(root + "queries", queries);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = root + "block" + std::to_string(i) + ".";
    auto& b = blocks[i];
    fn(p + "self_norm", b.self_norm);
    fn(p + "self_wq", b.self_wq);
    fn(p + "self_wk", b.self_wk);
    fn(p + "self_wv", b.self_wv);
    fn(p + "self_wo", b.self_wo);
    fn(p + "cross_norm", b.cross_norm);
    fn(p + "feature_norm", b.feature_norm);
    fn(p + "cross_wq", b.cross_wq);
    fn(p + "cross_wk", b.cross_wk);
    fn(p + "cross_wv", b.cross_wv);
    fn(p + "cross_wo", b.cross_wo);
    fn(p + "ffn_norm", b.ffn_norm);
    fn(p + "ffn_w1", b.ffn_w1);
    fn(p + "ffn_w2", b.ffn_w2);
  }
  fn(root + "out_norm", out_norm);
  fn(root + "w_share", w_share);
  for (std::size_t i = 0; i < w_s.size(); ++i) fn(root + "w_s" + std::to_string(i), w_s[i]);
}

template <typename T>
template <typename Fn>
void GeneratorWeights<T>::visit(Fn&& fn) const {
  const_cast<GeneratorWeights*>(this)->visit(
      [&fn](const std::string& name, Tensor<T>& t) { fn(name, static_cast<const Tensor<T>&>(t)); });
}

}  // namespace vlora
