#include "vlora/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace vlora {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

thread_local bool g_grad_enabled = true;
thread_local FlopCounter* g_flop_counter = nullptr;

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank)
    throw ShapeError("tensor rank must be in [1, 4], got " + std::to_string(shape.size()));
  for (auto extent : shape)
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape));
}

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
  for (T v : values)
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite value in output");
}

// Wraps an op result into a node and wires the backward closure when any
// parent participates in differentiation.
template <typename T>
Tensor<T> finish(const char* op, Shape shape, std::vector<T> values,
                 std::vector<NodePtr<T>> parents,
                 std::function<void(const detail::Node<T>&)> backward_fn) {
  check_finite(op, values);
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  const bool track =
      g_grad_enabled &&
      std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void require_rank2(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(a.shape()));
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

// out[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  MMap<T>(out, m, n).noalias() += CMap<T>(a, m, k) * CMap<T>(b, k, n);
}

// out[m x k] += g[m x n] * b[k x n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* out, std::size_t m, std::size_t n, std::size_t k) {
  MMap<T>(out, m, k).noalias() += CMap<T>(g, m, n) * CMap<T>(b, k, n).transpose();
}

// out[k x n] += a[m x k]^T * g[m x n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* out, std::size_t m, std::size_t k, std::size_t n) {
  MMap<T>(out, k, n).noalias() += CMap<T>(a, m, k).transpose() * CMap<T>(g, m, n);
}

template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& a, const std::function<bool(std::size_t, std::size_t)>& keep) {
  require_rank2("softmax_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data();
  std::vector<T> out(m * n, T(0));
  std::vector<std::uint8_t> kept(m * n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    T row_max = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep(i, j)) continue;
      kept[i * n + j] = 1;
      any = true;
      row_max = std::max(row_max, x[i * n + j]);
    }
    if (!any) throw ContractError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (!kept[i * n + j]) continue;
      out[i * n + j] = std::exp(x[i * n + j] - row_max);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  FlopCounter::record_elementwise(3 * m * n);
  auto result = finish<T>("softmax_rows", {m, n}, std::move(out), {a.node_ptr()},
                          [m, n](const detail::Node<T>& self) {
                            auto& p = *self.parents[0];
                            auto& g = p.ensure_grad();
                            const auto& y = self.data;
                            const auto& gy = self.grad;
                            for (std::size_t i = 0; i < m; ++i) {
                              T dot = T(0);
                              for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * y[i * n + j];
                              for (std::size_t j = 0; j < n; ++j)
                                g[i * n + j] += y[i * n + j] * (gy[i * n + j] - dot);
                            }
                          });
  return result;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  check_shape(shape);
  if (vlora::numel(shape) != values.size())
    throw ShapeError("tensor " + shape_string(shape) + " needs " + std::to_string(vlora::numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  check_finite("tensor", values);
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  check_shape(shape);
  const auto count = vlora::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(count, value));
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, double stddev, Rng& rng) {
  check_shape(shape);
  std::vector<T> values(vlora::numel(shape));
  for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
  return Tensor(std::move(shape), std::move(values));
}

template <typename T>
const detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

template <typename T>
detail::Node<T>& Tensor<T>::node() {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  if (i >= rank()) throw ShapeError("dim " + std::to_string(i) + " out of range for " + shape_string(shape()));
  return shape()[i];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node().is_leaf()) throw ContractError("mutable_data: tensor is not a leaf");
  return node().data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_string(shape()) + " is not a scalar");
  return node().data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!node().is_leaf()) throw ContractError("set_requires_grad: tensor is not a leaf");
  node().requires_grad = flag;
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = node();
  n.grad.assign(n.data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), node().data);
}

// ---- grad mode / flop counting ---------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

FlopCounter::FlopCounter() : outer_(g_flop_counter) { g_flop_counter = this; }
FlopCounter::~FlopCounter() { g_flop_counter = outer_; }

void FlopCounter::record_matmul(std::uint64_t flops) {
  for (auto* c = g_flop_counter; c; c = c->outer_) c->tally_.matmul += flops;
}

void FlopCounter::record_elementwise(std::uint64_t flops) {
  for (auto* c = g_flop_counter; c; c = c->outer_) c->tally_.elementwise += flops;
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner extents differ: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  std::vector<T> out(m * n, T(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  FlopCounter::record_matmul(2 * m * k * n);
  return finish<T>("matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
                   [m, k, n](const detail::Node<T>& self) {
                     auto& pa = *self.parents[0];
                     auto& pb = *self.parents[1];
                     if (pa.requires_grad) gemm_nt(self.grad.data(), pb.data.data(), pa.ensure_grad().data(), m, n, k);
                     if (pb.requires_grad) gemm_tn(pa.data.data(), self.grad.data(), pb.ensure_grad().data(), m, k, n);
                   });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return finish<T>("transpose", {n, m}, std::move(out), {a.node_ptr()},
                   [m, n](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                   });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  FlopCounter::record_elementwise(out.size());
  return finish<T>("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                   [](const detail::Node<T>& self) {
                     for (auto& parent : self.parents) {
                       if (!parent->requires_grad) continue;
                       auto& g = parent->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     }
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  FlopCounter::record_elementwise(out.size());
  return finish<T>("mul", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                   [](const detail::Node<T>& self) {
                     auto& pa = *self.parents[0];
                     auto& pb = *self.parents[1];
                     if (pa.requires_grad) {
                       auto& g = pa.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
                     }
                     if (pb.requires_grad) {
                       auto& g = pb.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
                     }
                   });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  FlopCounter::record_elementwise(out.size());
  return finish<T>("scale", a.shape(), std::move(out), {a.node_ptr()},
                   [factor](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                   });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  const auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] / (T(1) + std::exp(-v[i]));
  FlopCounter::record_elementwise(4 * out.size());
  return finish<T>("silu", x.shape(), std::move(out), {x.node_ptr()},
                   [](const detail::Node<T>& self) {
                     auto& p = *self.parents[0];
                     auto& g = p.ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const T s = T(1) / (T(1) + std::exp(-p.data[i]));
                       g[i] += self.grad[i] * s * (T(1) + p.data[i] * (T(1) - s));
                     }
                   });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, bool causal) {
  if (causal) return softmax_impl(a, [](std::size_t i, std::size_t j) { return j <= i; });
  return softmax_impl(a, [](std::size_t, std::size_t) { return true; });
}

template <typename T>
Tensor<T> softmax_rows_masked(const Tensor<T>& a, std::span<const std::uint8_t> keep) {
  if (keep.size() != a.numel()) throw ShapeError("softmax_rows_masked: mask size does not match input");
  const std::size_t n = a.dim(a.rank() - 1);
  return softmax_impl(a, [&keep, n](std::size_t i, std::size_t j) { return keep[i * n + j] != 0; });
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
  const std::size_t h = x.shape().back();
  if (gain.shape() != Shape{h})
    throw ShapeError("rms_norm: gain " + shape_string(gain.shape()) + " does not match hidden size " + std::to_string(h));
  const std::size_t rows = x.numel() / h;
  const auto v = x.data(), gn = gain.data();
  std::vector<T> out(v.size());
  std::vector<T> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ms = T(0);
    for (std::size_t j = 0; j < h; ++j) ms += v[r * h + j] * v[r * h + j];
    ms /= static_cast<T>(h);
    const T denom = std::sqrt(ms + eps);
    inv[r] = denom > T(0) ? T(1) / denom : T(0);
    for (std::size_t j = 0; j < h; ++j) out[r * h + j] = v[r * h + j] * inv[r] * gn[j];
  }
  FlopCounter::record_elementwise(4 * out.size());
  return finish<T>("rms_norm", x.shape(), std::move(out), {x.node_ptr(), gain.node_ptr()},
                   [rows, h, inv = std::move(inv)](const detail::Node<T>& self) {
                     auto& px = *self.parents[0];
                     auto& pg = *self.parents[1];
                     const auto& gy = self.grad;
                     if (px.requires_grad) {
                       auto& g = px.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         T dot = T(0);
                         for (std::size_t j = 0; j < h; ++j) dot += gy[r * h + j] * pg.data[j] * px.data[r * h + j];
                         const T c = inv[r] * inv[r] * inv[r] * dot / static_cast<T>(h);
                         for (std::size_t j = 0; j < h; ++j)
                           g[r * h + j] += inv[r] * pg.data[j] * gy[r * h + j] - c * px.data[r * h + j];
                       }
                     }
                     if (pg.requires_grad) {
                       auto& g = pg.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < h; ++j) g[j] += gy[r * h + j] * px.data[r * h + j] * inv[r];
                     }
                   });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
  require_rank2("slice_rows", a);
  const std::size_t n = a.cols();
  if (count == 0 || start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  const auto x = a.data();
  std::vector<T> out(x.begin() + start * n, x.begin() + (start + count) * n);
  return finish<T>("slice_rows", {count, n}, std::move(out), {a.node_ptr()},
                   [start, n](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
                   });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
  require_rank2("slice_cols", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || start + count > n) throw ShapeError("slice_cols: range out of bounds");
  const auto x = a.data();
  std::vector<T> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.begin() + i * n + start, count, out.begin() + i * count);
  return finish<T>("slice_cols", {m, count}, std::move(out), {a.node_ptr()},
                   [m, n, start, count](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
                   });
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(n);
    n += p.cols();
    parents.push_back(p.node_ptr());
  }
  std::vector<T> out(m * n);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto x = parts[q].data();
    const std::size_t w = parts[q].cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(x.begin() + i * w, w, out.begin() + i * n + offsets[q]);
  }
  return finish<T>("concat_cols", {m, n}, std::move(out), std::move(parents),
                   [m, n, offsets](const detail::Node<T>& self) {
                     for (std::size_t q = 0; q < self.parents.size(); ++q) {
                       auto& parent = *self.parents[q];
                       if (!parent.requires_grad) continue;
                       auto& g = parent.ensure_grad();
                       const std::size_t w = parent.shape[1];
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * n + offsets[q] + j];
                     }
                   });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const TokenId> ids) {
  require_rank2("gather_rows", table);
  if (ids.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t vocab = table.rows(), h = table.cols();
  const auto x = table.data();
  std::vector<T> out(ids.size() * h);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab)
      throw ContractError("gather_rows: index " + std::to_string(ids[i]) + " out of range " + std::to_string(vocab));
    std::copy_n(x.begin() + ids[i] * h, h, out.begin() + i * h);
  }
  std::vector<TokenId> index(ids.begin(), ids.end());
  return finish<T>("gather_rows", {ids.size(), h}, std::move(out), {table.node_ptr()},
                   [h, index = std::move(index)](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < index.size(); ++i)
                       for (std::size_t j = 0; j < h; ++j) g[index[i] * h + j] += self.grad[i * h + j];
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check_shape(shape);
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return finish<T>("reshape", std::move(shape), std::move(out), {a.node_ptr()},
                   [](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  return finish<T>("sum", {1}, {total}, {a.node_ptr()}, [](const detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets) {
  require_rank2("cross_entropy", logits);
  const std::size_t n = logits.rows(), vocab = logits.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy: target count does not match logit rows");
  const auto x = logits.data();
  std::vector<T> probs(n * vocab);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= vocab) throw ContractError("cross_entropy: target id out of range");
    const T* row = x.data() + i * vocab;
    const T row_max = *std::max_element(row, row + vocab);
    T z = T(0);
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - row_max);
    const T log_z = std::log(z) + row_max;
    total += log_z - row[targets[i]];
    for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] = std::exp(row[j] - log_z);
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  return finish<T>("cross_entropy", {1}, {total / static_cast<T>(n)}, {logits.node_ptr()},
                   [n, vocab, probs = std::move(probs), tgt = std::move(tgt)](const detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     const T w = self.grad[0] / static_cast<T>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < vocab; ++j) g[i * vocab + j] += w * probs[i * vocab + j];
                       g[i * vocab + tgt[i]] -= w;
                     }
                   });
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
  const auto& root = loss.node_ptr();
  if (!root->requires_grad) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<detail::Node<T>*> order;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{root.get(), 0}};
  std::unordered_set<const detail::Node<T>*> visited{root.get()};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order)
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
}

#define VLORA_INSTANTIATE(T)                                                                \
  template class Tensor<T>;                                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> silu(const Tensor<T>&);                                                \
  template Tensor<T> softmax_rows(const Tensor<T>&, bool);                                  \
  template Tensor<T> softmax_rows_masked(const Tensor<T>&, std::span<const std::uint8_t>);  \
  template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, T);                       \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const TokenId>);               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>);             \
  template void backward(const Tensor<T>&);

VLORA_INSTANTIATE(float)
VLORA_INSTANTIATE(double)

}  // namespace vlora
