#include <cstring>

#include "doctest.h"
#include "vlora/injection.hpp"
#include "vlora/model.hpp"
#include "vlora/verify.hpp"

using namespace vlora;
using TD = Tensor<double>;

namespace {

template <typename T>
bool same_weights(const LlmWeights<T>& a, const LlmWeights<T>& b) {
  std::vector<const Tensor<T>*> lhs, rhs;
  a.visit([&](const std::string&, const Tensor<T>& t) { lhs.push_back(&t); });
  b.visit([&](const std::string&, const Tensor<T>& t) { rhs.push_back(&t); });
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i)
    if (lhs[i]->shape() != rhs[i]->shape() ||
        std::memcmp(lhs[i]->data().data(), rhs[i]->data().data(), lhs[i]->numel() * sizeof(T)) != 0)
      return false;
  return true;
}

std::vector<LowRankDelta<double>> random_deltas(const LlmConfig& c, const InjectionPlan& plan, Rng& rng) {
  std::vector<LowRankDelta<double>> out;
  for (auto kind : plan.kinds)
    for (auto block : plan.target_blocks) {
      const auto s = target_shape(kind, c.h, c.h_ff);
      out.push_back({TD::randn({s.in, 2}, 0.3, rng), TD::randn({2, s.out}, 0.3, rng), kind, block});
    }
  return out;
}

}  // namespace

TEST_CASE("injection plan placement") {
  const auto p = build_plan(32, 8, {WeightKind::Q});
  CHECK(p.target_blocks == std::vector<std::size_t>{0, 4, 8, 12, 16, 20, 24, 28});
  CHECK(build_plan(8, 8, {WeightKind::Q}).target_blocks == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(build_plan(8, 3, {WeightKind::Q}), ContractError);
  CHECK_THROWS(build_plan(8, 0, {WeightKind::Q}));
  CHECK_THROWS(build_plan(8, 2, {}));
  CHECK(build_plan(8, 4, parse_kind_set("qkvm")).deltas_per_image() == 4 * 5);

  InjectionPlan bad{{0, 0}, {WeightKind::Q}};
  CHECK_THROWS(bad.validate(8));
  InjectionPlan out_of_range{{0, 8}, {WeightKind::Q}};
  CHECK_THROWS(out_of_range.validate(8));
}

TEST_CASE("merge with zero deltas is bitwise the base") {
  const auto model = init_model<double>(tiny_model_config(), 3);
  Rng rng(1);
  const auto deltas = perceive(model, random_image(model.config.vision, rng));
  CHECK(same_weights(merge<double>(model.llm, deltas), model.llm));
}

TEST_CASE("merged forward equals branch forward") {
  const auto cfg = tiny_model_config();
  Rng rng(12);
  const auto w = init_llm<double>(cfg.llm, rng);
  const auto plan = build_plan(cfg.llm.d_blocks, 2, std::vector<WeightKind>(kAllWeightKinds.begin(), kAllWeightKinds.end()));
  const auto deltas = random_deltas(cfg.llm, plan, rng);
  const std::vector<TokenId> tokens = {0, 3, 1, 4, 1, 5};
  const auto branch = branch_forward<double>(w, deltas, tokens);
  const auto merged = llm_forward(merge<double>(w, deltas), std::span<const TokenId>(tokens));
  CHECK(max_relative_difference(merged, branch) <= 1e-10);
  CHECK(max_relative_difference(merged, llm_forward(w, std::span<const TokenId>(tokens))) > 1e-6);

  Rng rng_f(12);
  const auto wf = init_llm<float>(cfg.llm, rng_f);
  std::vector<LowRankDelta<float>> df;
  for (const auto& d : deltas) {
    std::vector<float> down(d.down.data().begin(), d.down.data().end()), up(d.up.data().begin(), d.up.data().end());
    df.push_back({Tensor<float>(d.down.shape(), down), Tensor<float>(d.up.shape(), up), d.target, d.block_index});
  }
  CHECK(max_relative_difference(llm_forward(merge<float>(wf, df), std::span<const TokenId>(tokens)),
                                branch_forward<float>(wf, df, tokens)) <= 1e-5);
}

TEST_CASE("merge leaves the base untouched and the merger restores exactly") {
  const auto cfg = tiny_model_config();
  Rng rng(13);
  const auto w = init_llm<double>(cfg.llm, rng);
  const auto pristine = w.clone();
  const auto plan = build_plan(cfg.llm.d_blocks, 2, {WeightKind::V, WeightKind::FfnDown});
  const auto a = random_deltas(cfg.llm, plan, rng);
  const auto b = random_deltas(cfg.llm, plan, rng);

  WeightMerger<double> merger(w);
  merger.apply(a);
  merger.restore();
  CHECK(same_weights(merger.current(), pristine));
  const auto via_swap = merger.apply(b).clone();
  CHECK(same_weights(via_swap, merge<double>(pristine, b)));
  CHECK(same_weights(merger.apply(b), via_swap));
  CHECK(same_weights(w, pristine));
}

TEST_CASE("branch forward without deltas is the plain forward") {
  const auto cfg = tiny_model_config();
  Rng rng(14);
  const auto w = init_llm<double>(cfg.llm, rng);
  const std::vector<TokenId> tokens = {2, 7, 1};
  const auto a = branch_forward<double>(w, {}, tokens);
  const auto b = llm_forward(w, std::span<const TokenId>(tokens));
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0);
}
