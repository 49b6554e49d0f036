#include <cmath>

#include "doctest.h"
#include "vlora/cost_model.hpp"
#include "vlora/injection.hpp"
#include "vlora/model.hpp"

using namespace vlora;

namespace {

double gflops(Flops f) { return to_gflops(f); }

CostParams table_config(std::uint64_t L) {
  CostParams p;
  p.L = L;
  return p;
}

}  // namespace

TEST_CASE("block parts") {
  CHECK(flops_block_parts(0, 4096).attention == 0);
  CHECK(flops_block_parts(0, 4096).ffn == 0);
  CHECK(flops_block_parts(1, 1).attention == 12);
  CHECK(flops_block_parts(1, 1).ffn == 16);
  CostParams p = table_config(576);
  const auto parts = flops_block_parts(576 + 32, 4096);
  CHECK(flops_baseline(p) == Flops(32) * (parts.attention + parts.ffn));
}

TEST_CASE("baseline matches the 7B-class reference values") {
  CHECK(std::abs(gflops(flops_baseline(table_config(576))) - 8027.8) < 0.05);
  CHECK(std::abs(gflops(flops_baseline(table_config(32))) - 826.8) < 0.05);
  CHECK(std::abs(gflops(flops_baseline(table_config(256))) - 3754.3) < 0.05);
  for (const auto& row : reference_table()) {
    CAPTURE(row.model);
    CHECK(std::abs(row.relative_error()) <= 0.005);
  }
}

TEST_CASE("perceptual-weight costs") {
  const CostParams p = table_config(0);
  CHECK(std::abs(gflops(flops_vlora_train(p)) - 670.57) < 0.01);
  CHECK(std::abs(gflops(flops_vlora_infer(p)) - 620.62) < 0.01);

  CostParams text_only = p;
  text_only.k = 0;
  CostParams no_text = p;
  no_text.L = 0;
  text_only.L = 0;
  const Flops lm = Flops(24) * 32 * 32 * 4096 * 4096 + Flops(4) * 32 * 32 * 32 * 4096;
  CHECK(flops_vlora_train(text_only) == lm);
  CHECK(flops_vlora_infer(text_only) == lm);

  no_text.C = 0;
  CHECK(flops_vlora_train(no_text) == Flops(24) * 8 * 64 * 4096 * 4096);
}

TEST_CASE("ratios and L-independence") {
  CostParams p = table_config(576);
  const double train = gflops(flops_vlora_train(p)) / gflops(flops_baseline(p));
  const double infer = gflops(flops_vlora_infer(p)) / gflops(flops_baseline(p));
  CHECK(std::abs(train - 0.0835) < 5e-4);
  CHECK(std::abs(infer - 0.0773) < 5e-4);
  for (std::uint64_t L : {0, 32, 8737}) {
    CostParams q = p;
    q.L = L;
    CHECK(flops_vlora_train(q) == flops_vlora_train(p));
    CHECK(flops_vlora_infer(q) == flops_vlora_infer(p));
  }
}

TEST_CASE("inference is cheaper than training for any text length") {
  for (std::uint64_t C = 1; C <= 64; ++C) {
    CostParams p = table_config(0);
    p.C = C;
    CHECK(flops_vlora_infer(p) < flops_vlora_train(p));
  }
}

TEST_CASE("baseline is monotone in L and C") {
  CostParams p;
  Flops last = 0;
  for (std::uint64_t L = 0; L < 3000; L += 97) {
    p.L = L;
    CHECK(flops_baseline(p) > last);
    last = flops_baseline(p);
  }
  CostParams a, b;
  b.C = a.C + 1;
  CHECK(flops_baseline(b) > flops_baseline(a));
}

TEST_CASE("sweep rows and CSV") {
  const std::vector<std::uint64_t> L = {32, 256, 576, 2890, 8737};
  const auto rows = sweep(CostParams{}, L);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].vlora_train == rows[0].vlora_train);
    CHECK(rows[i].vlora_infer == rows[0].vlora_infer);
    CHECK(rows[i].ratio_train < rows[i - 1].ratio_train);
  }
  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind(std::string(kSweepCsvHeader) + "\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.find("\n576,32,8027830747136,") != std::string::npos);
  CHECK_THROWS(sweep(CostParams{}, {}));
}

TEST_CASE("exact decimal rendering") {
  CHECK(to_decimal(0) == "0");
  CHECK(to_decimal(Flops(1) << 80) == "1208925819614629174706176");
}

// ---- instrumented counts against the closed forms --------------------------

TEST_CASE("toy LM forward matmul tally is within 10% of the closed form") {
  LlmConfig c{4, 64, 4, 256, 64, 16, 0.02, 1e-6};
  Rng rng(1);
  const auto w = init_llm<float>(c, rng);
  std::vector<TokenId> tokens(16);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<TokenId>(i * 3 % 64);
  FlopCounter counter;
  {
    NoGradGuard no_grad;
    llm_forward(w, std::span<const TokenId>(tokens));
  }
  const double closed = 24.0 * 16 * 4 * 64 * 64 + 4.0 * 16 * 16 * 4 * 64;
  const double counted = static_cast<double>(counter.tally().matmul);
  CAPTURE(counted);
  CHECK(std::abs(counted - closed) / closed <= 0.10);
}

TEST_CASE("merge tally equals 24krh^2 + 12kh^2 when h_ff = 4h") {
  const std::size_t h = 32, r = 4, k = 2;
  LlmConfig c{4, h, 4, 4 * h, 16, 8, 0.02, 1e-6};
  Rng rng(2);
  const auto w = init_llm<float>(c, rng);
  const auto plan = build_plan(4, k, std::vector<WeightKind>(kAllWeightKinds.begin(), kAllWeightKinds.end()));
  std::vector<LowRankDelta<float>> deltas;
  for (auto kind : plan.kinds)
    for (auto b : plan.target_blocks) {
      const auto s = target_shape(kind, h, 4 * h);
      deltas.push_back({Tensor<float>::randn({s.in, r}, 1.0, rng), Tensor<float>::randn({r, s.out}, 1.0, rng), kind, b});
    }
  FlopCounter counter;
  merge<float>(w, deltas);
  CHECK(counter.tally().matmul == 24 * k * r * h * h);
  CHECK(counter.tally().elementwise == 12 * k * h * h);
}

TEST_CASE("branch-mode extra tally equals 12Ckh^2 on the matched config") {
  // h_ff = h and r = h/2: each of the six branches costs 2Cr(h_in + h_out) = 2Ch^2.
  const std::size_t h = 16, C = 8, k = 2;
  LlmConfig c{4, h, 2, h, 16, 8, 0.02, 1e-6};
  Rng rng(3);
  const auto w = init_llm<float>(c, rng);
  const auto plan = build_plan(4, k, std::vector<WeightKind>(kAllWeightKinds.begin(), kAllWeightKinds.end()));
  std::vector<LowRankDelta<float>> deltas;
  for (auto kind : plan.kinds)
    for (auto b : plan.target_blocks)
      deltas.push_back({Tensor<float>::randn({h, h / 2}, 1.0, rng), Tensor<float>::randn({h / 2, h}, 1.0, rng), kind, b});
  std::vector<TokenId> tokens(C, 1);
  NoGradGuard no_grad;
  std::uint64_t plain = 0, branch = 0;
  {
    FlopCounter counter;
    llm_forward(w, std::span<const TokenId>(tokens));
    plain = counter.tally().matmul;
  }
  {
    FlopCounter counter;
    branch_forward<float>(w, deltas, tokens);
    branch = counter.tally().matmul;
  }
  CHECK(branch - plain == 12 * C * k * h * h);
}
