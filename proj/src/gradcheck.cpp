#include "vlora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vlora {

const GradCheckSample& GradCheckReport::worst() const {
  if (samples.empty()) throw ContractError("gradient check sampled no coordinates");
  return *std::max_element(samples.begin(), samples.end(),
                           [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

namespace {

double evaluate(const std::function<Tensor<double>()>& loss_fn) {
  NoGradGuard no_grad;
  const double value = loss_fn().item();
  if (!std::isfinite(value)) throw NonFiniteError("finite_diff_check: loss is not finite");
  return value;
}

std::vector<std::size_t> pick_coordinates(std::size_t count, std::size_t wanted, Rng& rng) {
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (wanted == 0 || wanted >= count) return all;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < wanted; ++i) std::swap(all[i], all[i + rng.below(count - i)]);
  all.resize(wanted);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<NamedParam> params, double h_step,
                                  std::size_t samples_per_param, Rng& rng, Stencil stencil) {
  if (!(h_step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  std::vector<bool> previous;
  for (auto& p : params) {
    previous.push_back(p.tensor.requires_grad());
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }

  const auto loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NonFiniteError("finite_diff_check: loss is not finite");
  backward(loss);

  GradCheckReport report;
  for (auto& p : params) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto values = p.tensor.mutable_data();
    for (auto index : pick_coordinates(values.size(), samples_per_param, rng)) {
      const double original = values[index];
      const auto central = [&](double step) {
        values[index] = original + step;
        const double plus = evaluate(loss_fn);
        values[index] = original - step;
        const double minus = evaluate(loss_fn);
        values[index] = original;
        return plus - minus;
      };

      GradCheckSample s;
      s.param = p.name;
      s.index = index;
      s.analytic = analytic[index];
      const double d1 = central(h_step);
      s.numeric = stencil == Stencil::TwoPoint ? d1 / (2.0 * h_step)
                                               : (8.0 * d1 - central(2.0 * h_step)) / (12.0 * h_step);
      s.rel_error = std::abs(s.analytic - s.numeric) /
                    std::max({std::abs(s.analytic), std::abs(s.numeric), 1e-8});
      report.max_rel_error = std::max(report.max_rel_error, s.rel_error);
      report.samples.push_back(std::move(s));
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.set_requires_grad(previous[i]);
  return report;
}

}  // namespace vlora
