#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "vlora/error.hpp"
#include "vlora/gradcheck.hpp"
#include "vlora/tensor.hpp"

using namespace vlora;
using TD = Tensor<double>;

namespace {

TD naive_matmul(const TD& a, const TD& b) {
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t p = 0; p < a.cols(); ++p) out[i * b.cols() + j] += a.at(i, p) * b.at(p, j);
  return TD({a.rows(), b.cols()}, out);
}

double max_abs_diff(const TD& a, const TD& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

TEST_CASE("matmul small cases") {
  const TD eye({2, 2}, {1, 0, 0, 1});
  const TD m({2, 2}, {1, 2, 3, 4});
  CHECK(max_abs_diff(matmul(eye, m), m) == 0.0);
  CHECK(matmul(TD({1, 2}, {1, 2}), TD({2, 1}, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul matches the triple loop on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(16), k = 1 + rng.below(16), n = 1 + rng.below(16);
    const auto a = TD::randn({m, k}, 1.0, rng);
    const auto b = TD::randn({k, n}, 1.0, rng);
    const auto got = matmul(a, b);
    const auto want = naive_matmul(a, b);
    double scale = 0.0;
    for (auto v : want.data()) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(got, want) <= 1e-12 * std::max(scale, 1.0));
  }
}

TEST_CASE("softmax rows") {
  const auto s = softmax_rows(TD({1, 2}, {std::log(1.0), std::log(3.0)}));
  CHECK(std::abs(s.data()[0] - 0.25) < 1e-12);
  CHECK(std::abs(s.data()[1] - 0.75) < 1e-12);

  const auto half = softmax_rows(TD({1, 2}, {0, 0}));
  CHECK(half.data()[0] == 0.5);

  Rng rng(3);
  const auto x = TD::randn({4, 6}, 3.0, rng);
  const auto p = softmax_rows(x);
  auto shifted_values = std::vector<double>(x.data().begin(), x.data().end());
  for (std::size_t j = 0; j < 6; ++j) shifted_values[6 + j] += 17.0;
  const auto q = softmax_rows(TD({4, 6}, shifted_values));
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) total += p.at(i, j);
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  CHECK(max_abs_diff(p, q) < 1e-12);
}

TEST_CASE("causal softmax masks the future exactly") {
  Rng rng(5);
  const auto p = softmax_rows(TD::randn({4, 4}, 1.0, rng), /*causal=*/true);
  CHECK(p.at(0, 0) == 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(p.at(i, j) == 0.0);
}

TEST_CASE("fully masked row is a contract violation") {
  const std::vector<std::uint8_t> keep = {1, 0, 0, 0};
  CHECK_NOTHROW(softmax_rows_masked(TD::zeros({1, 4}), std::span(keep).first(4)));
  const std::vector<std::uint8_t> none = {0, 0, 1, 1};
  CHECK_THROWS_AS(softmax_rows_masked(TD::zeros({2, 2}), std::span<const std::uint8_t>(none)), ContractError);
}

TEST_CASE("rms norm") {
  const auto ones = rms_norm(TD::full({1, 5}, 1.0), TD::full({5}, 1.0), 0.0);
  for (auto v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  const auto y = rms_norm(TD({1, 2}, {3, 4}), TD::full({2}, 1.0), 0.0);
  CHECK(std::abs(y.data()[0] - 3.0 / std::sqrt(12.5)) < 1e-12);
  CHECK(std::abs(y.data()[1] - 4.0 / std::sqrt(12.5)) < 1e-12);

  const auto z = rms_norm(TD::zeros({2, 3}), TD::full({3}, 1.0), 1e-6);
  for (auto v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("silu") {
  const auto y = silu(TD({3}, {0.0, 20.0, 1.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(std::abs(y.data()[1] - 20.0) < 1e-6);
  CHECK(std::abs(y.data()[2] - 1.0 / (1.0 + std::exp(-1.0))) < 1e-12);
  CHECK(std::abs(y.data()[2] - 0.731059) < 1e-6);
}

TEST_CASE("non-finite forward values are rejected") {
  const TD big({1, 1}, {1e300});
  CHECK_THROWS_AS(matmul(big, big), NonFiniteError);
  CHECK_THROWS_AS(TD({1}, {std::nan("")}) + TD({1}, {1.0}), NonFiniteError);
}

TEST_CASE("gradient of a linear map has outer-product structure") {
  Rng rng(11);
  auto w = TD::randn({3, 4}, 1.0, rng).set_requires_grad(true);
  const auto x = TD::randn({1, 3}, 1.0, rng);
  auto unused = TD::randn({2, 2}, 1.0, rng).set_requires_grad(true);
  backward(sum(matmul(x, w)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(w.grad()[i * 4 + j] == x.data()[i]);
  for (auto g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("repeated backward accumulates additively on leaves") {
  auto w = TD({2}, {1.5, -2.0}).set_requires_grad(true);
  const auto loss = sum(mul(w, w));
  backward(loss);
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < 2; ++i) CHECK(w.grad()[i] == 2.0 * once[i]);
  w.zero_grad();
  for (auto g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward needs a scalar") {
  auto w = TD({2}, {1.0, 2.0}).set_requires_grad(true);
  CHECK_THROWS(backward(scale(w, 2.0)));
}

TEST_CASE("no-grad guard builds no graph") {
  auto w = TD({2}, {1.0, 2.0}).set_requires_grad(true);
  NoGradGuard guard;
  const auto y = scale(w, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("cross entropy of uniform logits is ln V") {
  const std::vector<TokenId> targets = {0, 3, 5};
  const auto loss = cross_entropy(TD::zeros({3, 7}), std::span<const TokenId>(targets));
  CHECK(std::abs(loss.item() - std::log(7.0)) < 1e-12);
  const std::vector<TokenId> bad = {7};
  CHECK_THROWS(cross_entropy(TD::zeros({1, 7}), std::span<const TokenId>(bad)));
}

TEST_CASE("every op passes the finite-difference check") {
  Rng rng(21);
  auto a = TD::randn({3, 4}, 1.0, rng);
  auto b = TD::randn({4, 5}, 1.0, rng);
  auto c = TD::randn({3, 4}, 1.0, rng);
  auto g = TD::randn({4}, 1.0, rng);
  const std::vector<TokenId> ids = {2, 0, 2};
  const std::vector<TokenId> targets = {1, 4, 0};
  std::vector<NamedParam> params = {{"a", a}, {"b", b}, {"c", c}, {"g", g}};

  const std::vector<std::pair<const char*, std::function<TD()>>> cases = {
      {"matmul", [&] { return sum(mul(matmul(a, b), matmul(a, b))); }},
      {"transpose", [&] { return sum(mul(matmul(transpose(b), transpose(a)), matmul(transpose(b), transpose(c)))); }},
      {"add/mul/scale", [&] { return sum(scale(mul(add(a, c), a), 0.7)); }},
      {"silu", [&] { return sum(mul(silu(a), c)); }},
      {"softmax", [&] { return sum(mul(softmax_rows(a), c)); }},
      {"causal softmax", [&] { return sum(mul(softmax_rows(matmul(a, transpose(c)), true), matmul(c, transpose(a)))); }},
      {"rms_norm", [&] { return sum(mul(rms_norm(a, g, 1e-6), c)); }},
      {"slices", [&] { return sum(mul(slice_cols(slice_rows(a, 1, 2), 1, 3), slice_cols(slice_rows(c, 0, 2), 0, 3))); }},
      {"concat", [&] {
         const std::vector<TD> parts = {a, c};
         const auto cat = concat_cols<double>(parts);
         return sum(mul(cat, cat));
       }},
      {"gather", [&] { return sum(mul(gather_rows(b, std::span<const TokenId>(ids)), slice_rows(b, 0, 3))); }},
      {"reshape", [&] { return sum(mul(reshape(a, {2, 6}), reshape(c, {2, 6}))); }},
      {"cross_entropy", [&] { return cross_entropy(matmul(a, b), std::span<const TokenId>(targets)); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto report = finite_diff_check(fn, params, 1e-5, 0, rng);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("finite difference oracle on closed forms") {
  Rng rng(0);
  auto theta = TD({1}, {3.0});
  std::vector<NamedParam> params = {{"theta", theta}};
  const auto report = finite_diff_check([&] { return mul(theta, theta); }, params, 1e-5, 0, rng);
  REQUIRE(report.samples.size() == 1);
  CHECK(report.samples[0].analytic == 6.0);
  CHECK(std::abs(report.samples[0].numeric - 6.0) < 1e-8);

  auto constant_report = finite_diff_check([&] { return TD::scalar(2.0); }, params, 1e-5, 0, rng);
  CHECK(constant_report.samples[0].analytic == 0.0);
  CHECK(constant_report.samples[0].numeric == 0.0);
  CHECK_FALSE(theta.requires_grad());

  CHECK_THROWS_AS(finite_diff_check([&] { return TD::scalar(std::numeric_limits<double>::infinity()); }, params,
                                    1e-5, 0, rng),
                  NonFiniteError);
}

TEST_CASE("five-point stencil tightens the estimate") {
  Rng rng(0);
  auto theta = TD({1}, {0.4});
  std::vector<NamedParam> params = {{"theta", theta}};
  const auto f = [&] { return silu(mul(theta, mul(theta, theta))); };
  const auto two = finite_diff_check(f, params, 1e-2, 0, rng, Stencil::TwoPoint);
  const auto five = finite_diff_check(f, params, 1e-2, 0, rng, Stencil::FivePoint);
  CHECK(five.max_rel_error < two.max_rel_error);
}

TEST_CASE("rng is deterministic and forks independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  auto child = c.fork();
  CHECK(child.next_u64() != Rng(42).next_u64());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) < 7);
  }
  const auto x = TD::randn({8, 8}, 0.02, b);
  Rng again(42);
  for (int i = 0; i < 100; ++i) again.next_u64();
  const auto y = TD::randn({8, 8}, 0.02, again);
  CHECK(std::memcmp(x.data().data(), y.data().data(), 64 * sizeof(double)) == 0);
}

TEST_CASE("flop counter tallies 2mkn per matmul and nests") {
  FlopCounter outer;
  {
    FlopCounter inner;
    matmul(TD::zeros({2, 2}), TD::zeros({2, 2}));
    CHECK(inner.tally().matmul == 16);
  }
  matmul(TD::zeros({3, 4}), TD::zeros({4, 5}));
  CHECK(outer.tally().matmul == 16 + 120);
}

TEST_CASE("tensor handle semantics") {
  auto a = TD({2}, {1.0, 2.0});
  auto alias = a;
  alias.mutable_data()[0] = 9.0;
  CHECK(a.data()[0] == 9.0);
  auto copy = a.clone();
  copy.mutable_data()[0] = -1.0;
  CHECK(a.data()[0] == 9.0);
  CHECK_THROWS_AS(TD({2, 2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(TD::zeros({1, 1, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(reshape(a, {3}), ShapeError);
}
