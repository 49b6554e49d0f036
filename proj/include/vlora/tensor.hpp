#pragma once

// Dense row-major tensors with a reverse-mode autodiff graph.
//
// A Tensor is a cheap handle: copies share storage and graph position, the
// same way framework tensors behave. Use clone() for an independent copy.
// Values are immutable once an op has produced them; the only sanctioned
// in-place mutation is mutable_data() on leaves (optimizer updates, tests).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vlora/error.hpp"
#include "vlora/rng.hpp"

namespace vlora {

using Shape = std::vector<std::size_t>;
using TokenId = std::uint32_t;

inline constexpr std::size_t kMaxRank = 4;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Non-empty for op outputs that take part in a graph.
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return full({1}, value); }
  // Entries drawn from N(0, std^2), in row-major order.
  static Tensor randn(Shape shape, double stddev, Rng& rng);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().data.size(); }
  std::size_t dim(std::size_t i) const;
  // Shorthand for rank-2 tensors.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const T> data() const { return node().data; }
  // In-place write access. Only valid on leaves.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t i, std::size_t j) const { return node().data[i * cols() + j]; }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return node().grad.size() == node().data.size(); }
  // Gradient buffer; zero-filled if backward never reached this tensor.
  std::span<const T> grad() const;
  void zero_grad();

  // Independent leaf holding a copy of the values.
  Tensor clone() const;
  // Leaf sharing no graph history; requires_grad is false.
  Tensor detach() const { return clone(); }

  const NodePtr& node_ptr() const { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  const detail::Node<T>& node() const;
  detail::Node<T>& node();

  NodePtr node_;
};

// Graph recording is on by default; this guard disables it for its scope
// (evaluation, finite differences, weight merging).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Tallies forward-pass FLOPs while alive. Counters nest; every live counter
// on the current thread observes each op.
//   matmul [m x k]·[k x n]    2·m·k·n               (matmul)
//   add, scale, mul           1 per output element  (elementwise)
//   silu                      4 per element         (elementwise)
//   softmax_rows              3 per element         (elementwise)
//   rms_norm                  4 per element         (elementwise)
// Gathers, slices, reshapes and backward passes are not counted.
struct FlopTally {
  std::uint64_t matmul = 0;
  std::uint64_t elementwise = 0;
  std::uint64_t total() const { return matmul + elementwise; }
};

class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  const FlopTally& tally() const { return tally_; }

  static void record_matmul(std::uint64_t flops);
  static void record_elementwise(std::uint64_t flops);

 private:
  FlopTally tally_;
  FlopCounter* outer_;
};

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> silu(const Tensor<T>& x);
// Row-wise softmax over the last axis of a rank-2 tensor. With `causal`,
// entry (i, j) is masked for j > i and comes out exactly 0.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, bool causal = false);
// General mask: keep[i * cols + j] != 0 marks a live entry. A row with no
// live entry is a contract violation.
template <typename T>
Tensor<T> softmax_rows_masked(const Tensor<T>& a, std::span<const std::uint8_t> keep);
// x / sqrt(mean(x^2) + eps) * gain along the last axis.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count);
template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const TokenId> ids);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
// Mean next-token cross-entropy of logits [n x vocab] against n targets.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets);

// Reverse pass from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed from zero each call.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}

}  // namespace vlora
