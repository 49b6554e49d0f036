#pragma once

// Toy decoder-only language model: token + learned absolute position
// embedding, d_blocks pre-norm blocks (multi-head causal self-attention and a
// two-layer SiLU FFN, no biases), final RMS norm and an untied LM head.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "vlora/delta.hpp"
#include "vlora/tensor.hpp"

namespace vlora {

struct LlmConfig {
  std::size_t d_blocks = 8;
  std::size_t h = 64;
  std::size_t n_heads = 4;
  std::size_t h_ff = 256;
  std::size_t vocab = 64;
  std::size_t max_seq = 32;
  double init_std = 0.02;
  double norm_eps = 1e-6;

  std::size_t head_dim() const { return h / n_heads; }
  void validate() const;
};

template <typename T>
struct DecoderBlockWeights {
  Tensor<T> wq, wk, wv, wo;  // [h x h]; head j owns columns [j*head_dim, (j+1)*head_dim)
  Tensor<T> w1;              // [h x h_ff]
  Tensor<T> w2;              // [h_ff x h]
  Tensor<T> norm1, norm2;    // [h]

  Tensor<T>& matrix(WeightKind kind);
  const Tensor<T>& matrix(WeightKind kind) const;
};

template <typename T>
struct LlmWeights {
  LlmConfig config;
  Tensor<T> tok_emb;  // [vocab x h]
  Tensor<T> pos_emb;  // [max_seq x h]
  std::vector<DecoderBlockWeights<T>> blocks;
  Tensor<T> final_norm;  // [h]
  Tensor<T> lm_head;     // [h x vocab]

  // Calls fn(name, tensor) for every parameter in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  // Deep copy; every tensor is a fresh leaf that keeps requires_grad.
  LlmWeights clone() const;
};

template <typename T>
LlmWeights<T> init_llm(const LlmConfig& config, Rng& rng);

// Per-block lookup of deltas by WeightKind; nullptr means no delta.
template <typename T>
using BlockDeltas = std::array<const LowRankDelta<T>*, kWeightKindCount>;

// Groups deltas by target block, validating block index, shape and
// uniqueness of (block, kind).
template <typename T>
std::vector<BlockDeltas<T>> resolve_deltas(const LlmConfig& config, std::span<const LowRankDelta<T>> deltas);

// Multi-head scaled dot-product attention over already-projected inputs.
// q is [n x h]; k and v are [m x h]. Heads are concatenated; W_O is the
// caller's job. max_seq = 0 disables the length check.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t n_heads,
                    bool causal, std::size_t max_seq = 0);

// silu(x · w1) · w2
template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& w2);

// x · w, plus the branch (x · down) · up when a delta is given.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const LowRankDelta<T>* delta);

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const DecoderBlockWeights<T>& block, const BlockDeltas<T>& deltas,
                        const LlmConfig& config);

// Logits [n x vocab] for a text-only token sequence. Deltas, if any, are
// applied in branch form.
template <typename T>
Tensor<T> llm_forward(const LlmWeights<T>& weights, std::span<const TokenId> tokens,
                      std::span<const LowRankDelta<T>> deltas = {});

// Mean cross-entropy of predicting sequence[1..] from sequence[..n-1].
template <typename T>
Tensor<T> next_token_loss(const LlmWeights<T>& weights, std::span<const TokenId> sequence,
                          std::span<const LowRankDelta<T>> deltas = {});

// ---- template members ------------------------------------------------------

template <typename T>
template <typename Fn>
void LlmWeights<T>::visit(Fn&& fn) {
  fn(std::string("llm.tok_emb"), tok_emb);
  fn(std::string("llm.pos_emb"), pos_emb);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "llm.block" + std::to_string(i) + ".";
    auto& b = blocks[i];
    fn(p + "wq", b.wq);
    fn(p + "wk", b.wk);
    fn(p + "wv", b.wv);
    fn(p + "wo", b.wo);
    fn(p + "w1", b.w1);
    fn(p + "w2", b.w2);
    fn(p + "norm1", b.norm1);
    fn(p + "norm2", b.norm2);
  }
  fn(std::string("llm.final_norm"), final_norm);
  fn(std::string("llm.lm_head"), lm_head);
}

template <typename T>
template <typename Fn>
void LlmWeights<T>::visit(Fn&& fn) const {
  const_cast<LlmWeights*>(this)->visit(
      [&fn](const std::string& name, Tensor<T>& t) { fn(name, static_cast<const Tensor<T>&>(t)); });
}

}  // namespace vlora
