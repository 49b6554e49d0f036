#include "vlora/cost_model.hpp"

#include <algorithm>
#include <cstdio>

#include "vlora/error.hpp"

namespace vlora {

std::string to_decimal(Flops value) {
  if (value == 0) return "0";
  std::string digits;
  while (value > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::reverse(digits.begin(), digits.end());
  return digits;
}

double to_gflops(Flops value) { return static_cast<double>(value) / 1e9; }

void CostParams::validate() const {
  if (d_blocks == 0 || h == 0) throw ContractError("cost params: d_blocks and h must be >= 1");
}

BlockFlops flops_block_parts(std::uint64_t tokens, std::uint64_t h) {
  const Flops n = tokens, hh = h;
  return {8 * n * hh * hh + 4 * n * n * hh, 16 * n * hh * hh};
}

Flops flops_baseline(const CostParams& p) {
  p.validate();
  const auto parts = flops_block_parts(p.L + p.C, p.h);
  return Flops(p.d_blocks) * (parts.attention + parts.ffn);
}

namespace {

Flops text_only(const CostParams& p) {
  const Flops C = p.C, d = p.d_blocks, h = p.h;
  return 24 * C * d * h * h + 4 * C * C * d * h;
}

}  // namespace

Flops flops_vlora_train(const CostParams& p) {
  p.validate();
  const Flops C = p.C, h = p.h, k = p.k, r = p.r;
  return text_only(p) + 24 * k * r * h * h + 12 * C * k * h * h + 14 * C * k * h;
}

Flops flops_vlora_infer(const CostParams& p) {
  p.validate();
  const Flops h = p.h, k = p.k, r = p.r;
  return text_only(p) + 24 * k * r * h * h + 12 * k * h * h;
}

std::vector<SweepRow> sweep(const CostParams& p, std::span<const std::uint64_t> L_values) {
  if (L_values.empty()) throw ContractError("sweep: no visual token counts given");
  std::vector<SweepRow> rows;
  for (auto L : L_values) {
    CostParams q = p;
    q.L = L;
    SweepRow row;
    row.L = L;
    row.C = p.C;
    row.baseline = flops_baseline(q);
    row.vlora_train = flops_vlora_train(q);
    row.vlora_infer = flops_vlora_infer(q);
    if (row.baseline == 0) throw ContractError("sweep: baseline FLOPs are zero (L + C = 0)");
    row.ratio_train = static_cast<double>(row.vlora_train) / static_cast<double>(row.baseline);
    row.ratio_infer = static_cast<double>(row.vlora_infer) / static_cast<double>(row.baseline);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  char ratios[64];
  for (const auto& r : rows) {
    std::snprintf(ratios, sizeof(ratios), "%.6f,%.6f", r.ratio_train, r.ratio_infer);
    out += std::to_string(r.L) + "," + std::to_string(r.C) + "," + to_decimal(r.baseline) + "," +
           to_decimal(r.vlora_train) + "," + to_decimal(r.vlora_infer) + "," + ratios + "\n";
  }
  return out;
}

std::vector<ReferenceRow> reference_table() {
  const CostParams base{32, 4096, 32, 0, 8, 64};
  const auto baseline = [&](std::uint64_t L) {
    CostParams p = base;
    p.L = L;
    return to_gflops(flops_baseline(p));
  };
  return {
      {"InstructBLIP", 32, 827.0, baseline(32)},
      {"MiniGPT-4-v1", 32, 827.0, baseline(32)},
      {"MiniGPT-4-v2", 256, 3754.0, baseline(256)},
      {"LLaVA-v1.5", 576, 8027.0, baseline(576)},
      {"VLoRA", 0, 619.0, to_gflops(flops_vlora_infer(base))},
  };
}

}  // namespace vlora
