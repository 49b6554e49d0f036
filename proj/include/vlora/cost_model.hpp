#pragma once

// Closed-form LLM FLOPs for input-space alignment (visual tokens prepended
// to the text) versus weight-space alignment with low-rank perceptual
// weights. Symbols: d blocks, hidden size h, C text tokens, L visual tokens,
// k injected blocks, rank r. Per block, n tokens cost 8nh^2 + 4n^2h in
// self-attention and 16nh^2 in the FFN (h_ff = 4h).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vlora {

// Values reach ~1e13; 128 bits keeps every intermediate product exact.
__extension__ using Flops = unsigned __int128;

std::string to_decimal(Flops value);
double to_gflops(Flops value);

struct CostParams {
  std::uint64_t d_blocks = 32;
  std::uint64_t h = 4096;
  std::uint64_t C = 32;
  std::uint64_t L = 0;
  std::uint64_t k = 8;
  std::uint64_t r = 64;

  void validate() const;
};

struct BlockFlops {
  Flops attention = 0;  // 8nh^2 + 4n^2h
  Flops ffn = 0;        // 16nh^2
};

BlockFlops flops_block_parts(std::uint64_t tokens, std::uint64_t h);

// 24(L+C)dh^2 + 4(L+C)^2dh
Flops flops_baseline(const CostParams& p);
// 24Cdh^2 + 4C^2dh + 24krh^2 + 12Ckh^2 + 14Ckh
Flops flops_vlora_train(const CostParams& p);
// 24Cdh^2 + 4C^2dh + 24krh^2 + 12kh^2
Flops flops_vlora_infer(const CostParams& p);

struct SweepRow {
  std::uint64_t L = 0;
  std::uint64_t C = 0;
  Flops baseline = 0;
  Flops vlora_train = 0;
  Flops vlora_infer = 0;
  double ratio_train = 0.0;  // vlora_train / baseline
  double ratio_infer = 0.0;  // vlora_infer / baseline
};

std::vector<SweepRow> sweep(const CostParams& p, std::span<const std::uint64_t> L_values);

inline constexpr const char* kSweepCsvHeader =
    "L,C,flops_baseline,flops_vlora_train,flops_vlora_infer,ratio_train,ratio_infer";
std::string sweep_csv(std::span<const SweepRow> rows);

// 7B-class rows of the published comparison table (d=32, h=4096, C=32),
// next to the value computed from the closed forms.
struct ReferenceRow {
  std::string model;
  std::uint64_t visual_tokens = 0;
  double printed_gflops = 0.0;
  double computed_gflops = 0.0;

  double relative_error() const { return (computed_gflops - printed_gflops) / printed_gflops; }
};

std::vector<ReferenceRow> reference_table();

}  // namespace vlora
