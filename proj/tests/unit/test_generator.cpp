#include <cstring>

#include "doctest.h"
#include "vlora/generator.hpp"
#include "vlora/injection.hpp"
#include "vlora/model.hpp"
#include "vlora/verify.hpp"

using namespace vlora;
using TD = Tensor<double>;

namespace {

GeneratorConfig small_generator(WeightKind kind) {
  GeneratorConfig c;
  c.h_p = 8;
  c.blocks = 2;
  c.queries = 2;
  c.rank = 3;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.target = kind;
  return c;
}

}  // namespace

TEST_CASE("weight kinds and ablation sets") {
  CHECK(kind_name(WeightKind::FfnUp) == "ffn_up");
  for (auto kind : kAllWeightKinds) CHECK(kind_from_name(kind_name(kind)) == kind);
  CHECK_THROWS(kind_from_name("w3"));

  CHECK(target_shape(WeightKind::Q, 16, 64).in == 16);
  CHECK(target_shape(WeightKind::FfnUp, 16, 64).out == 64);
  CHECK(target_shape(WeightKind::FfnDown, 16, 64).in == 64);

  CHECK(parse_kind_set("qkvom").size() == 6);
  CHECK(parse_kind_set("qkvm").size() == 5);
  CHECK(parse_kind_set("qkv").size() == 3);
  CHECK(parse_kind_set("qko").size() == 3);
  CHECK(parse_kind_set("qk") == std::vector<WeightKind>{WeightKind::Q, WeightKind::K});
  CHECK(kind_set_labels() == std::vector<std::string>{"qkvom", "qkvm", "qkv", "qko", "qk"});
  for (const char* bad : {"", "q", "kq", "qkvo", "qkvomm", "QK", "m"}) CHECK_THROWS(parse_kind_set(bad));
}

TEST_CASE("generator init: zero up-maps, determinism, config checks") {
  Rng a(5), b(5);
  const auto cfg = small_generator(WeightKind::V);
  const auto g1 = init_generator<double>(cfg, {8, 8}, 6, a);
  const auto g2 = init_generator<double>(cfg, {8, 8}, 6, b);
  for (const auto& w : g1.w_s)
    for (auto v : w.data()) CHECK(v == 0.0);
  std::vector<const TD*> lhs, rhs;
  g1.visit([&](const std::string&, const TD& t) { lhs.push_back(&t); });
  g2.visit([&](const std::string&, const TD& t) { rhs.push_back(&t); });
  REQUIRE(lhs.size() == rhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(std::memcmp(lhs[i]->data().data(), rhs[i]->data().data(), lhs[i]->numel() * sizeof(double)) == 0);

  auto bad = cfg;
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = cfg;
  bad.rank = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("W_share size at the default generator settings") {
  GeneratorConfig cfg;
  const auto counts = count_generator_parameters(cfg, target_shape(WeightKind::Q, 4096, 16384), 1024);
  CHECK(counts.w_share == 134217728);
  CHECK(counts.w_s == 8 * 64 * 4096);

  Rng rng(0);
  const auto small = small_generator(WeightKind::FfnDown);
  const auto g = init_generator<double>(small, {16, 8}, 6, rng);
  CHECK(g.parameter_count() == count_generator_parameters(small, {16, 8}, 6).total());
}

TEST_CASE("generator forward shapes and single-query self-attention") {
  Rng rng(5);
  auto cfg = small_generator(WeightKind::Q);
  const auto g = init_generator<double>(cfg, {8, 8}, 6, rng);
  for (std::size_t c : {1, 3, 7}) {
    const auto z = TD::randn({c, 6}, 1.0, rng);
    CHECK(generator_blocks_forward(g.queries, z, g).shape() == Shape{2, 8});
  }
  CHECK_THROWS_AS(generator_blocks_forward(g.queries, TD::zeros({3, 5}), g), ShapeError);

  cfg.queries = 1;
  const auto one = init_generator<double>(cfg, {8, 8}, 6, rng);
  const auto s = rms_norm(one.queries, one.blocks[0].self_norm, 1e-6);
  const auto self = attention(matmul(s, one.blocks[0].self_wq), matmul(s, one.blocks[0].self_wk),
                              matmul(s, one.blocks[0].self_wv), 2, false);
  const auto v = matmul(s, one.blocks[0].self_wv);
  for (std::size_t i = 0; i < v.numel(); ++i) CHECK(self.data()[i] == v.data()[i]);
}

TEST_CASE("generated deltas: reshape layout, binding and zero effect at init") {
  Rng rng(5);
  const auto cfg = small_generator(WeightKind::FfnUp);
  auto g = init_generator<double>(cfg, {8, 16}, 6, rng);
  const auto plan = build_plan(4, 2, {WeightKind::FfnUp});
  const auto z = TD::randn({4, 6}, 1.0, rng);
  const auto deltas = generate_deltas(z, g, plan);
  REQUIRE(deltas.size() == 2);
  CHECK(deltas[0].block_index == 0);
  CHECK(deltas[1].block_index == 2);
  for (const auto& d : deltas) {
    CHECK(d.target == WeightKind::FfnUp);
    CHECK(d.down.shape() == Shape{8, 3});
    CHECK(d.up.shape() == Shape{3, 16});
    const auto effective = d.effective();
    for (auto v : effective.data()) CHECK(v == 0.0);
  }

  const auto p = generator_blocks_forward(g.queries, z, g);
  const auto flat = matmul(slice_rows(p, 1, 1), g.w_share);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 3; ++b) CHECK(deltas[1].down.at(a, b) == flat.data()[a * 3 + b]);

  CHECK_THROWS(generate_deltas(z, g, build_plan(4, 4, {WeightKind::FfnUp})));
}

TEST_CASE("one training step makes the up-maps nonzero") {
  Rng rng(5);
  auto g = init_generator<double>(small_generator(WeightKind::Q), {8, 8}, 6, rng);
  for (auto& w : g.w_s) w.set_requires_grad(true);
  const auto z = TD::randn({4, 6}, 1.0, rng);
  const auto deltas = generate_deltas(z, g, build_plan(2, 2, {WeightKind::Q}));
  const auto x = TD::randn({3, 8}, 1.0, rng);
  const auto target = TD::randn({3, 8}, 1.0, rng);
  auto diff = add(project(x, TD::zeros({8, 8}), &deltas[0]), scale(target, -1.0));
  backward(sum(mul(diff, diff)));
  double norm = 0.0;
  for (auto v : g.w_s[0].grad()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("generated deltas have rank at most r") {
  Rng rng(8);
  auto g = init_generator<double>(small_generator(WeightKind::O), {8, 8}, 6, rng);
  for (auto& w : g.w_s)
    for (auto& v : w.mutable_data()) v = rng.normal();
  const auto deltas = generate_deltas(TD::randn({5, 6}, 1.0, rng), g, build_plan(4, 2, {WeightKind::O}));
  for (const auto& d : deltas) {
    const auto s = singular_values(d.effective());
    REQUIRE(s.size() == 8);
    CHECK(s[0] > 0.0);
    for (std::size_t i = 3; i < s.size(); ++i) CHECK(s[i] < 1e-6 * s[0]);
  }
}
