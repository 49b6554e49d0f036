#include <cmath>
#include <cstring>

#include "doctest.h"
#include "vlora/llm.hpp"

using namespace vlora;
using TD = Tensor<double>;

namespace {

LlmConfig small_llm() { return LlmConfig{2, 8, 2, 16, 11, 6, 0.5, 1e-6}; }

bool same_bytes(const TD& a, const TD& b, std::size_t count) {
  return std::memcmp(a.data().data(), b.data().data(), count * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = small_llm();
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_llm();
  c.vocab = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  CHECK(LlmConfig{}.head_dim() == 16);
}

TEST_CASE("attention of a single token returns its value") {
  const TD q({1, 4}, {0.3, -1.0, 2.0, 0.1});
  const TD v({1, 4}, {5.0, 6.0, 7.0, 8.0});
  const auto out = attention(q, q, v, 2, true);
  for (std::size_t j = 0; j < 4; ++j) CHECK(out.data()[j] == v.data()[j]);
}

TEST_CASE("attention hand-computed two-token case") {
  // One head, head_dim 2. Row 1 attends to rows 0 and 1 with scores
  // q1.k0/sqrt2 and q1.k1/sqrt2.
  const TD q({2, 2}, {1.0, 0.0, 0.5, 1.0});
  const TD k({2, 2}, {1.0, 2.0, 0.0, -1.0});
  const TD v({2, 2}, {1.0, 3.0, -2.0, 4.0});
  const auto out = attention(q, k, v, 1, true);
  CHECK(std::abs(out.at(0, 0) - 1.0) < 1e-10);
  CHECK(std::abs(out.at(0, 1) - 3.0) < 1e-10);
  const double s0 = (0.5 * 1.0 + 1.0 * 2.0) / std::sqrt(2.0);
  const double s1 = (0.5 * 0.0 + 1.0 * -1.0) / std::sqrt(2.0);
  const double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
  const double w1 = 1.0 - w0;
  CHECK(std::abs(out.at(1, 0) - (w0 * 1.0 + w1 * -2.0)) < 1e-10);
  CHECK(std::abs(out.at(1, 1) - (w0 * 3.0 + w1 * 4.0)) < 1e-10);
}

TEST_CASE("one head equals the unsplit formula") {
  Rng rng(2);
  const auto q = TD::randn({3, 4}, 1.0, rng), k = TD::randn({3, 4}, 1.0, rng), v = TD::randn({3, 4}, 1.0, rng);
  const auto direct = matmul(softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(4.0)), true), v);
  const auto out = attention(q, k, v, 1, true);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.data()[i] - direct.data()[i]) < 1e-12);
}

TEST_CASE("attention errors") {
  const auto x = TD::zeros({3, 4});
  CHECK_THROWS_AS(attention(x, x, x, 3, true), ShapeError);
  CHECK_THROWS_AS(attention(x, x, x, 2, true, 2), ContractError);
  CHECK_THROWS_AS(attention(x, TD::zeros({2, 4}), TD::zeros({2, 4}), 2, true), ShapeError);
}

TEST_CASE("causal attention ignores later tokens") {
  Rng rng(4);
  auto k = TD::randn({2, 4}, 1.0, rng);
  auto v = TD::randn({2, 4}, 1.0, rng);
  const auto q = TD::randn({2, 4}, 1.0, rng);
  const auto before = attention(q, k, v, 2, true);
  k.mutable_data()[5] += 3.0;
  v.mutable_data()[6] -= 2.0;
  const auto after = attention(q, k, v, 2, true);
  CHECK(same_bytes(before, after, 4));
}

TEST_CASE("ffn") {
  const auto y = ffn_forward(TD({1, 1}, {1.0}), TD({1, 1}, {1.0}), TD({1, 1}, {2.0}));
  CHECK(std::abs(y.item() - 1.462117) < 1e-6);
  Rng rng(1);
  const auto x = TD::randn({3, 4}, 1.0, rng), w2 = TD::randn({8, 4}, 1.0, rng);
  const auto zero = ffn_forward(x, TD::zeros({4, 8}), w2);
  for (auto v : zero.data()) CHECK(v == 0.0);
  const auto w1 = TD::randn({4, 8}, 1.0, rng);
  const auto once = ffn_forward(x, w1, w2);
  const auto twice = ffn_forward(x, w1, scale(w2, 2.0));
  for (std::size_t i = 0; i < once.numel(); ++i) CHECK(twice.data()[i] == doctest::Approx(2.0 * once.data()[i]));
}

TEST_CASE("llm forward shapes, range checks and causality") {
  Rng rng(9);
  const auto w = init_llm<double>(small_llm(), rng);
  const std::vector<TokenId> one = {3};
  CHECK(llm_forward(w, std::span<const TokenId>(one)).shape() == Shape{1, 11});

  const std::vector<TokenId> bad = {3, 11};
  CHECK_THROWS_AS(llm_forward(w, std::span<const TokenId>(bad)), ContractError);
  const std::vector<TokenId> long_seq(7, 1);
  CHECK_THROWS_AS(llm_forward(w, std::span<const TokenId>(long_seq)), ContractError);
  CHECK_THROWS_AS(llm_forward(w, std::span<const TokenId>()), ContractError);

  std::vector<TokenId> tokens = {1, 4, 2, 7, 0, 9};
  const auto base = llm_forward(w, std::span<const TokenId>(tokens));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto changed = tokens;
    changed[t] = (changed[t] + 5) % 11;
    const auto out = llm_forward(w, std::span<const TokenId>(changed));
    CHECK(same_bytes(base, out, t * 11));
    CHECK_FALSE(same_bytes(base, out, (t + 1) * 11));
  }
}

TEST_CASE("zero-gain norms silence the blocks") {
  Rng rng(9);
  auto w = init_llm<double>(small_llm(), rng);
  const std::vector<TokenId> tokens = {1, 2, 3};
  const auto x = add(gather_rows(w.tok_emb, std::span<const TokenId>(tokens)), slice_rows(w.pos_emb, 0, 3));
  auto& b = w.blocks[0];
  b.norm1 = TD::zeros({8});
  b.norm2 = TD::zeros({8});
  const auto table = resolve_deltas<double>(w.config, {});
  const auto y = block_forward(x, b, table[0], w.config);
  CHECK(same_bytes(x, y, x.numel()));
}

TEST_CASE("zero deltas leave the forward bitwise unchanged") {
  Rng rng(9);
  const auto w = init_llm<double>(small_llm(), rng);
  std::vector<LowRankDelta<double>> deltas;
  for (auto kind : kAllWeightKinds) {
    const auto s = target_shape(kind, 8, 16);
    deltas.push_back({TD::randn({s.in, 2}, 1.0, rng), TD::zeros({2, s.out}), kind, 1});
  }
  const std::vector<TokenId> tokens = {1, 2, 3, 4};
  const auto plain = llm_forward(w, std::span<const TokenId>(tokens));
  const auto with = llm_forward<double>(w, tokens, deltas);
  CHECK(same_bytes(plain, with, plain.numel()));
}

TEST_CASE("delta validation") {
  Rng rng(9);
  const auto w = init_llm<double>(small_llm(), rng);
  const std::vector<TokenId> tokens = {1, 2};
  std::vector<LowRankDelta<double>> wrong_shape = {{TD::zeros({8, 2}), TD::zeros({2, 8}), WeightKind::FfnUp, 0}};
  CHECK_THROWS_AS(llm_forward<double>(w, tokens, wrong_shape), ShapeError);
  std::vector<LowRankDelta<double>> bad_block = {{TD::zeros({8, 2}), TD::zeros({2, 8}), WeightKind::Q, 2}};
  CHECK_THROWS_AS(llm_forward<double>(w, tokens, bad_block), ContractError);
  std::vector<LowRankDelta<double>> twice = {{TD::zeros({8, 2}), TD::zeros({2, 8}), WeightKind::Q, 0},
                                             {TD::zeros({8, 2}), TD::zeros({2, 8}), WeightKind::Q, 0}};
  CHECK_THROWS_AS(llm_forward<double>(w, tokens, twice), ContractError);
}

TEST_CASE("next-token loss of uniform logits is ln V") {
  Rng rng(9);
  auto w = init_llm<double>(small_llm(), rng);
  w.lm_head = TD::zeros({8, 11});
  const std::vector<TokenId> seq = {1, 2, 3, 4};
  CHECK(std::abs(next_token_loss(w, std::span<const TokenId>(seq)).item() - std::log(11.0)) < 1e-12);
  const std::vector<TokenId> single = {1};
  CHECK_THROWS_AS(next_token_loss(w, std::span<const TokenId>(single)), ContractError);
}

TEST_CASE("weights visit in a stable order and clone deeply") {
  Rng rng(9);
  auto w = init_llm<double>(small_llm(), rng);
  std::vector<std::string> names;
  w.visit([&](const std::string& name, TD&) { names.push_back(name); });
  CHECK(names.front() == "llm.tok_emb");
  CHECK(names[1] == "llm.pos_emb");
  CHECK(names[2] == "llm.block0.wq");
  CHECK(names.back() == "llm.lm_head");
  CHECK(names.size() == 2 + 2 * 8 + 2);
  auto copy = w.clone();
  copy.blocks[0].wq.mutable_data()[0] += 1.0;
  CHECK(copy.blocks[0].wq.data()[0] != w.blocks[0].wq.data()[0]);
}
