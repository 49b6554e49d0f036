#include "vlora/verify.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "vlora/gradcheck.hpp"
#include "vlora/train.hpp"

namespace vlora {

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.llm = LlmConfig{4, 16, 2, 32, 16, 8, 0.02, 1e-6};
  c.vision = VisionConfig{2, 8, 8, 0.02};
  c.generator = GeneratorSettings{16, 2, 2, 2, 2, 2, 0.02};
  return c;
}

ModelConfig gradcheck_model_config() {
  auto c = tiny_model_config();
  c.llm.init_std = 0.2;
  c.vision.init_std = 1.0;
  c.generator.init_std = 0.2;
  return c;
}

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

template <typename T>
double max_relative_difference(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_relative_difference: shapes differ");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    scale = std::max(scale, std::abs(static_cast<double>(b.data()[i])));
  }
  return scale == 0.0 ? diff : diff / scale;
}

std::vector<double> singular_values(const Tensor<double>& matrix) {
  if (matrix.rank() != 2) throw ShapeError("singular_values: expected a matrix");
  Eigen::MatrixXd m(matrix.rows(), matrix.cols());
  for (std::size_t i = 0; i < matrix.rows(); ++i)
    for (std::size_t j = 0; j < matrix.cols(); ++j) m(i, j) = matrix.at(i, j);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

namespace {

std::string fmt(const char* pattern, double value) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(T)) == 0;
}

template <typename T>
void randomize_up_factors(VloraModel<T>& model, double stddev, Rng& rng) {
  for (auto& g : model.generators)
    for (auto& w : g.w_s) {
      auto values = w.mutable_data();
      for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
    }
}

template <typename T>
CheckResult check_zero_init(const VerifyOptions& opt, const std::vector<SyntheticPair>& pairs) {
  auto model = init_model<T>(tiny_model_config(), opt.seed);
  if (opt.inject_fault) model.generators.front().w_s.front().mutable_data()[0] = T(0.5);
  NoGradGuard no_grad;
  std::size_t equal = 0;
  for (const auto& p : pairs) {
    const std::span<const TokenId> tokens(p.caption.data(), p.caption.size() - 1);
    const auto with = vlora_logits(model, p.image, tokens, ApplyMode::Branch);
    const auto without = vlora_logits(model, p.image, tokens, ApplyMode::Blind);
    equal += bitwise_equal(with, without);
  }
  return {"zero-init identity", equal == pairs.size(),
          std::to_string(equal) + "/" + std::to_string(pairs.size()) + " pairs bitwise equal"};
}

template <typename T>
CheckResult check_merge_branch(const VerifyOptions& opt, const std::vector<SyntheticPair>& pairs) {
  auto model = init_model<T>(tiny_model_config(), opt.seed);
  Rng rng(opt.seed ^ 0x5eedULL);
  randomize_up_factors(model, 0.2, rng);
  NoGradGuard no_grad;
  double worst = 0.0;
  for (const auto& p : pairs) {
    const std::span<const TokenId> tokens(p.caption.data(), p.caption.size() - 1);
    worst = std::max(worst, max_relative_difference(vlora_logits(model, p.image, tokens, ApplyMode::Merged),
                                                    vlora_logits(model, p.image, tokens, ApplyMode::Branch)));
  }
  const double tol = sizeof(T) == 8 ? 1e-10 : 1e-5;
  return {"merge == branch", worst <= tol, fmt("max rel diff %.3e", worst) + fmt(" (tol %.0e)", tol)};
}

CheckResult check_rank(const VerifyOptions& opt, const std::vector<SyntheticPair>& pairs) {
  auto model = init_model<double>(tiny_model_config(), opt.seed);
  Rng rng(opt.seed ^ 0x7a11ULL);
  randomize_up_factors(model, 0.2, rng);
  NoGradGuard no_grad;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& p : pairs) {
    for (const auto& d : perceive(model, p.image)) {
      const auto s = singular_values(d.effective());
      for (std::size_t i = d.rank(); i < s.size(); ++i) worst = std::max(worst, s[i] / std::max(s[0], 1e-300));
      ++checked;
    }
  }
  return {"rank bound", worst < 1e-6,
          std::to_string(checked) + " deltas, max sigma_{r+1}/sigma_1 " + fmt("%.3e", worst)};
}

template <typename T>
CheckResult check_causality(const VerifyOptions& opt, const std::vector<SyntheticPair>& pairs) {
  auto model = init_model<T>(tiny_model_config(), opt.seed);
  Rng rng(opt.seed ^ 0xca5eULL);
  randomize_up_factors(model, 0.2, rng);
  NoGradGuard no_grad;
  const std::size_t vocab = model.config.llm.vocab;
  std::size_t violations = 0;
  for (const auto& p : pairs) {
    std::vector<TokenId> tokens(p.caption.begin(), p.caption.end() - 1);
    const auto base = vlora_logits(model, p.image, tokens, ApplyMode::Branch);
    const std::size_t t = rng.below(tokens.size());
    tokens[t] = static_cast<TokenId>((tokens[t] + 1 + rng.below(vocab - 1)) % vocab);
    const auto changed = vlora_logits(model, p.image, tokens, ApplyMode::Branch);
    violations += std::memcmp(base.data().data(), changed.data().data(), t * vocab * sizeof(T)) != 0;
  }
  return {"causality", violations == 0, std::to_string(violations) + " violations"};
}

CheckResult check_gradients(const VerifyOptions& opt, const std::vector<SyntheticPair>& pairs) {
  auto model = init_model<double>(gradcheck_model_config(), opt.seed);
  Rng rng(opt.seed ^ 0x9badULL);
  randomize_up_factors(model, kGradcheckUpStd, rng);
  const auto& pair = pairs.front();
  const auto report = gradcheck_pipeline(model, pair, rng);
  const double tol = opt.fp64 ? 1e-6 : 1e-4;
  const auto& w = report.worst();
  return {"gradient check", report.max_rel_error < tol,
          std::to_string(report.samples.size()) + " coords, max rel err " + fmt("%.3e", report.max_rel_error) +
              fmt(" (tol %.0e)", tol) + ", worst " + w.param};
}

}  // namespace

GradCheckReport gradcheck_pipeline(VloraModel<double>& model, const SyntheticPair& pair, Rng& rng,
                                   std::size_t samples_per_param) {
  const std::string g = "pwg." + std::string(kind_name(model.generators.front().config.target)) + ".";
  const std::vector<std::string> wanted = {
      g + "queries",          g + "w_share",          g + "w_s0",             g + "w_s1",
      g + "block0.cross_wq",  g + "block0.cross_wk",  g + "block1.cross_wv",  g + "block1.cross_wo",
      g + "block0.self_wq",   g + "block1.ffn_w1",    "llm.block0.wq",        "llm.block1.w1",
      "llm.block3.w2",        "llm.lm_head",          "llm.pos_emb",
  };
  std::vector<NamedParam> params;
  model.visit([&](const std::string& name, Tensor<double>& t) {
    if (std::find(wanted.begin(), wanted.end(), name) != wanted.end()) params.push_back({name, t});
  });
  return finite_diff_check([&] { return pair_loss(model, pair, false); }, params, 1e-3, samples_per_param, rng,
                           Stencil::FivePoint);
}

VerifyReport run_verify(const VerifyOptions& opt) {
  Rng data_rng(opt.seed);
  const auto pairs = make_dataset(tiny_model_config().vision, data_rng, std::max<std::size_t>(opt.pairs, 1));
  VerifyReport report;
  if (opt.fp64) {
    report.checks.push_back(check_zero_init<double>(opt, pairs));
    report.checks.push_back(check_merge_branch<double>(opt, pairs));
    report.checks.push_back(check_causality<double>(opt, pairs));
  } else {
    report.checks.push_back(check_zero_init<float>(opt, pairs));
    report.checks.push_back(check_merge_branch<float>(opt, pairs));
    report.checks.push_back(check_causality<float>(opt, pairs));
  }
  report.checks.push_back(check_rank(opt, pairs));
  report.checks.push_back(check_gradients(opt, pairs));
  return report;
}

template double max_relative_difference(const Tensor<float>&, const Tensor<float>&);
template double max_relative_difference(const Tensor<double>&, const Tensor<double>&);

}  // namespace vlora
