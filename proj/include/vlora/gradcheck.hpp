#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlora/tensor.hpp"

namespace vlora {

struct NamedParam {
  std::string name;
  Tensor<double> tensor;
};

struct GradCheckSample {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

// TwoPoint: (f(x+h) - f(x-h)) / 2h.
// FivePoint: Richardson extrapolation of the h and 2h central differences,
// (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h. Truncation error drops
// from O(h^2) to O(h^4), which allows a larger step and less roundoff.
enum class Stencil { TwoPoint, FivePoint };

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckSample> samples;

  const GradCheckSample& worst() const;
};

// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h at
// sampled coordinates of each parameter. The relative error of one sample is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// `loss_fn` must rebuild the graph from the current parameter values on every
// call. Gradients of `params` are zeroed first; requires_grad is switched on
// for them during the check and restored afterwards. With samples_per_param
// equal to zero every coordinate is checked.
GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<NamedParam> params, double h_step,
                                  std::size_t samples_per_param, Rng& rng,
                                  Stencil stencil = Stencil::TwoPoint);

}  // namespace vlora
