#pragma once

// Self-checks bundled for the `verify` command: zero-init identity,
// merged-vs-branch equivalence, delta rank bound, causality and a
// full-pipeline gradient check, all on a tiny model.

#include <cstdint>
#include <string>
#include <vector>

#include "vlora/gradcheck.hpp"
#include "vlora/model.hpp"
#include "vlora/train.hpp"

namespace vlora {

// h=16, h_ff=32, d_blocks=4, k=2, r=2, h_p=16, N=2, vocab=16, g=2.
ModelConfig tiny_model_config();

// The tiny config with wider inits (LM 0.2, vision 1.0, generator 0.2). At the
// default 0.02 most cross-attention gradients sit below 1e-8, where the
// relative-error floor turns double roundoff into ~1e-3 "errors".
ModelConfig gradcheck_model_config();

// Up-factor std used by the gradient suite in place of the zero init.
inline constexpr double kGradcheckUpStd = 0.1;

struct VerifyOptions {
  std::uint64_t seed = 0;
  bool fp64 = false;         // run every suite in double; gradcheck tolerance 1e-6
  bool inject_fault = false; // perturb one up-factor entry at init (negative control)
  std::size_t pairs = 16;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

VerifyReport run_verify(const VerifyOptions& options);

// Central-difference check of the full per-pair loss (vision stub ->
// generator -> branch-form LM -> cross-entropy) over sampled coordinates of
// generator queries, W_share, up factors, self- and cross-attention, FFN and
// LM weights. Five-point central stencil, step 1e-3.
GradCheckReport gradcheck_pipeline(VloraModel<double>& model, const SyntheticPair& pair, Rng& rng,
                                   std::size_t samples_per_param = 6);

// Largest |a - b| divided by the largest |b|, or 0 when both are zero.
template <typename T>
double max_relative_difference(const Tensor<T>& a, const Tensor<T>& b);

// Singular values of a dense matrix, descending (one-sided Jacobi via Eigen).
std::vector<double> singular_values(const Tensor<double>& matrix);

}  // namespace vlora
