#include "vlora/llm.hpp"

#include <cmath>

namespace vlora {

void LlmConfig::validate() const {
  if (d_blocks == 0 || h == 0 || n_heads == 0 || h_ff == 0 || vocab == 0 || max_seq == 0)
    throw ContractError("llm config: all extents must be >= 1");
  if (h % n_heads != 0)
    throw ContractError("llm config: h (" + std::to_string(h) + ") is not divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
  if (!(init_std > 0.0)) throw ContractError("llm config: init_std must be positive");
  if (!(norm_eps >= 0.0)) throw ContractError("llm config: norm_eps must be non-negative");
}

template <typename T>
Tensor<T>& DecoderBlockWeights<T>::matrix(WeightKind kind) {
  switch (kind) {
    case WeightKind::Q: return wq;
    case WeightKind::K: return wk;
    case WeightKind::V: return wv;
    case WeightKind::O: return wo;
    case WeightKind::FfnUp: return w1;
    case WeightKind::FfnDown: return w2;
  }
  throw ContractError("unknown weight kind");
}

template <typename T>
const Tensor<T>& DecoderBlockWeights<T>::matrix(WeightKind kind) const {
  return const_cast<DecoderBlockWeights*>(this)->matrix(kind);
}

template <typename T>
LlmWeights<T> LlmWeights<T>::clone() const {
  LlmWeights out = *this;
  out.visit([](const std::string&, Tensor<T>& t) {
    const bool grad = t.requires_grad();
    t = t.clone();
    t.set_requires_grad(grad);
  });
  return out;
}

template <typename T>
LlmWeights<T> init_llm(const LlmConfig& config, Rng& rng) {
  config.validate();
  const double s = config.init_std;
  const auto h = config.h;
  LlmWeights<T> w;
  w.config = config;
  w.tok_emb = Tensor<T>::randn({config.vocab, h}, s, rng);
  w.pos_emb = Tensor<T>::randn({config.max_seq, h}, s, rng);
  for (std::size_t i = 0; i < config.d_blocks; ++i) {
    DecoderBlockWeights<T> b;
    b.wq = Tensor<T>::randn({h, h}, s, rng);
    b.wk = Tensor<T>::randn({h, h}, s, rng);
    b.wv = Tensor<T>::randn({h, h}, s, rng);
    b.wo = Tensor<T>::randn({h, h}, s, rng);
    b.w1 = Tensor<T>::randn({h, config.h_ff}, s, rng);
    b.w2 = Tensor<T>::randn({config.h_ff, h}, s, rng);
    b.norm1 = Tensor<T>::full({h}, T(1));
    b.norm2 = Tensor<T>::full({h}, T(1));
    w.blocks.push_back(std::move(b));
  }
  w.final_norm = Tensor<T>::full({h}, T(1));
  w.lm_head = Tensor<T>::randn({h, config.vocab}, s, rng);
  return w;
}

template <typename T>
std::vector<BlockDeltas<T>> resolve_deltas(const LlmConfig& config, std::span<const LowRankDelta<T>> deltas) {
  std::vector<BlockDeltas<T>> table(config.d_blocks);
  for (auto& slots : table) slots.fill(nullptr);
  for (const auto& d : deltas) {
    if (d.block_index >= config.d_blocks)
      throw ContractError("delta targets block " + std::to_string(d.block_index) + " but the model has " +
                          std::to_string(config.d_blocks));
    const auto expected = target_shape(d.target, config.h, config.h_ff);
    if (d.down.rank() != 2 || d.up.rank() != 2 || d.down.cols() != d.up.rows() || d.shape() != expected)
      throw ShapeError("delta for " + std::string(kind_name(d.target)) + " in block " + std::to_string(d.block_index) +
                       " has factors " + shape_string(d.down.shape()) + " x " + shape_string(d.up.shape()) +
                       ", expected effective shape [" + std::to_string(expected.in) + "x" +
                       std::to_string(expected.out) + "]");
    auto& slot = table[d.block_index][kind_index(d.target)];
    if (slot != nullptr)
      throw ContractError("two deltas target " + std::string(kind_name(d.target)) + " in block " +
                          std::to_string(d.block_index));
    slot = &d;
  }
  return table;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t n_heads, bool causal,
                    std::size_t max_seq) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("attention: inputs must be rank 2");
  const std::size_t n = q.rows(), m = k.rows(), h = q.cols();
  if (k.cols() != h || v.cols() != h || v.rows() != m)
    throw ShapeError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                     shape_string(v.shape()) + " do not agree");
  if (n_heads == 0 || h % n_heads != 0) throw ShapeError("attention: width not divisible by head count");
  if (causal && n != m) throw ShapeError("attention: causal attention needs equal query and key lengths");
  if (max_seq != 0 && (n > max_seq || m > max_seq))
    throw ContractError("attention: sequence length exceeds max_seq " + std::to_string(max_seq));
  const std::size_t head_dim = h / n_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t j = 0; j < n_heads; ++j) {
    const auto qh = slice_cols(q, j * head_dim, head_dim);
    const auto kh = slice_cols(k, j * head_dim, head_dim);
    const auto vh = slice_cols(v, j * head_dim, head_dim);
    const auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    heads.push_back(matmul(softmax_rows(scores, causal), vh));
  }
  if (n_heads == 1) return heads.front();
  return concat_cols<T>(heads);
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& w2) {
  return matmul(silu(matmul(x, w1)), w2);
}

template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const LowRankDelta<T>* delta) {
  auto out = matmul(x, w);
  if (delta == nullptr) return out;
  return add(out, matmul(matmul(x, delta->down), delta->up));
}

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const DecoderBlockWeights<T>& block, const BlockDeltas<T>& deltas,
                        const LlmConfig& config) {
  const T eps = static_cast<T>(config.norm_eps);
  const auto at = [&deltas](WeightKind kind) { return deltas[kind_index(kind)]; };

  const auto a = rms_norm(x, block.norm1, eps);
  const auto q = project(a, block.wq, at(WeightKind::Q));
  const auto k = project(a, block.wk, at(WeightKind::K));
  const auto v = project(a, block.wv, at(WeightKind::V));
  const auto attn = attention(q, k, v, config.n_heads, /*causal=*/true, config.max_seq);
  const auto x1 = add(x, project(attn, block.wo, at(WeightKind::O)));

  const auto f = rms_norm(x1, block.norm2, eps);
  const auto hidden = silu(project(f, block.w1, at(WeightKind::FfnUp)));
  return add(x1, project(hidden, block.w2, at(WeightKind::FfnDown)));
}

template <typename T>
Tensor<T> llm_forward(const LlmWeights<T>& weights, std::span<const TokenId> tokens,
                      std::span<const LowRankDelta<T>> deltas) {
  const auto& cfg = weights.config;
  if (tokens.empty()) throw ContractError("llm_forward: empty token sequence");
  if (tokens.size() > cfg.max_seq)
    throw ContractError("llm_forward: sequence length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                        std::to_string(cfg.max_seq));
  for (auto t : tokens)
    if (t >= cfg.vocab) throw ContractError("llm_forward: token id " + std::to_string(t) + " out of range");
  const auto table = resolve_deltas<T>(cfg, deltas);

  auto x = add(gather_rows(weights.tok_emb, tokens), slice_rows(weights.pos_emb, 0, tokens.size()));
  for (std::size_t i = 0; i < weights.blocks.size(); ++i) x = block_forward(x, weights.blocks[i], table[i], cfg);
  return matmul(rms_norm(x, weights.final_norm, static_cast<T>(cfg.norm_eps)), weights.lm_head);
}

template <typename T>
Tensor<T> next_token_loss(const LlmWeights<T>& weights, std::span<const TokenId> sequence,
                          std::span<const LowRankDelta<T>> deltas) {
  if (sequence.size() < 2) throw ContractError("next_token_loss: need at least two tokens");
  const auto logits = llm_forward(weights, sequence.first(sequence.size() - 1), deltas);
  return cross_entropy(logits, sequence.subspan(1));
}

#define VLORA_INSTANTIATE(T)                                                                                     \
  template struct DecoderBlockWeights<T>;                                                                        \
  template LlmWeights<T> LlmWeights<T>::clone() const;                                                           \
  template LlmWeights<T> init_llm<T>(const LlmConfig&, Rng&);                                                    \
  template std::vector<BlockDeltas<T>> resolve_deltas<T>(const LlmConfig&, std::span<const LowRankDelta<T>>);    \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, bool,          \
                               std::size_t);                                                                     \
  template Tensor<T> ffn_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> project(const Tensor<T>&, const Tensor<T>&, const LowRankDelta<T>*);                        \
  template Tensor<T> block_forward(const Tensor<T>&, const DecoderBlockWeights<T>&, const BlockDeltas<T>&,       \
                                   const LlmConfig&);                                                            \
  template Tensor<T> llm_forward(const LlmWeights<T>&, std::span<const TokenId>,                                 \
                                 std::span<const LowRankDelta<T>>);                                              \
  template Tensor<T> next_token_loss(const LlmWeights<T>&, std::span<const TokenId>,                             \
                                     std::span<const LowRankDelta<T>>);

VLORA_INSTANTIATE(float)
VLORA_INSTANTIATE(double)

}  // namespace vlora
