#pragma once

// Rank-4 (batch, channel, height, width) dense arrays with reverse-mode
// automatic differentiation.
//
// A Tensor is a cheap handle to an immutable node in a dynamically recorded
// computation graph. Operations whose inputs require gradients record their
// parents and a backward closure; `backward()` walks the graph in reverse
// topological order. Leaf tensors accumulate gradients across calls until
// `zero_grad()`; interior gradients are transient.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "imn/error.hpp"

namespace imn {

struct Shape {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  constexpr std::size_t numel() const noexcept { return batch * channels * height * width; }
  constexpr std::size_t plane() const noexcept { return height * width; }
  constexpr std::size_t image_size() const noexcept { return channels * height * width; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " + std::to_string(height) +
           ", " + std::to_string(width) + ")";
  }
};

template <std::floating_point T>
class Tensor;

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads `grad`, accumulates into parents

  bool is_leaf() const noexcept { return !backward; }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <std::floating_point T>
void require_finite(const char* op, std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;

  Tensor() : Tensor(Shape{0, 0, 0, 0}) {}

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node>()) {
    node_->shape = shape;
    node_->value.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
    if (values.size() != shape.numel())
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape.str());
    detail::require_finite<T>("tensor construction", values);
    node_->shape = shape;
    node_->value = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(shape, T(0)); }
  static Tensor full(Shape shape, T v) { return Tensor(shape, v); }
  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t numel() const noexcept { return node_->value.size(); }
  std::span<const T> values() const noexcept { return node_->value; }
  const T* data() const noexcept { return node_->value.data(); }

  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    const Shape& s = shape();
    return node_->value[((n * s.channels + c) * s.height + y) * s.width + x];
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
    return node_->value[0];
  }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  bool is_leaf() const noexcept { return node_->is_leaf(); }
  const char* op_name() const noexcept { return node_->op; }

  /// Marks a leaf as trainable. Interior tensors inherit the flag from their inputs.
  Tensor& set_requires_grad(bool on) {
    if (!is_leaf()) throw Error("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return !node_->grad.empty(); }
  /// Empty span when no gradient has reached this tensor.
  std::span<const T> grad() const noexcept { return node_->grad; }
  std::span<T> mutable_grad() {
    return node_->ensure_grad();
  }
  void zero_grad() { node_->grad.clear(); }

  /// In-place access for leaves only: parameter updates and finite-difference probes.
  std::span<T> mutable_values() {
    if (!is_leaf()) throw Error("in-place modification of a computed tensor");
    return node_->value;
  }

  /// Deep copy of the values as a new leaf without history.
  Tensor detach() const {
    Tensor out(shape());
    out.node_->value = node_->value;
    return out;
  }

  /// Deep copy that keeps the requires_grad flag (but not history or gradient).
  Tensor clone() const {
    Tensor out = detach();
    out.node_->requires_grad = node_->requires_grad;
    return out;
  }

  /// True when both handles refer to the same node.
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// A named trainable tensor. Copies are deep: a copied model never aliases the original.
template <std::floating_point T>
struct Parameter {
  Tensor<T> tensor;
  std::string name;

  Parameter() = default;
  Parameter(Tensor<T> t, std::string n) : tensor(std::move(t)), name(std::move(n)) {
    tensor.set_requires_grad(true);
  }
  Parameter(const Parameter& other) : tensor(other.tensor.clone()), name(other.name) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      tensor = other.tensor.clone();
      name = other.name;
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;
};

namespace detail {
inline thread_local bool grad_recording = true;
}  // namespace detail

/// While alive, operations on this thread record no gradient history.
class NoGradGuard {
 public:
  NoGradGuard() noexcept : saved_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

namespace detail {

/// Wraps freshly computed values into a graph node. `backward` is only kept
/// when at least one parent requires gradients and no NoGradGuard is active.
template <std::floating_point T, class Backward>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> parents, Backward&& backward) {
  require_finite<T>(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const Tensor<T>* p : parents) any = any || p->requires_grad();
  if (any && grad_recording) {
    node->requires_grad = true;
    for (const Tensor<T>* p : parents) node->parents.push_back(p->node());
    node->backward = std::forward<Backward>(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Variant for a runtime-sized parent list.
template <std::floating_point T, class Backward>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value, std::span<const Tensor<T>> parents,
                      Backward&& backward) {
  require_finite<T>(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const Tensor<T>& p : parents) any = any || p.requires_grad();
  if (any && grad_recording) {
    node->requires_grad = true;
    for (const Tensor<T>& p : parents) node->parents.push_back(p.node());
    node->backward = std::forward<Backward>(backward);
  }
  return Tensor<T>(std::move(node));
}

inline void check_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <std::floating_point T, class Fwd, class Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.numel());
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  // deriv(input, output) -> d output / d input
  return make_result<T>(op, x.shape(), std::move(out), {&x}, [deriv](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result<T>("sub", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary<T>("scale", x, [factor](T v) { return v * factor; },
                          [factor](T, T) { return factor; });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return detail::unary<T>("add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <std::floating_point T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T out) { return out; });
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      "sigmoid", x,
      [](T v) {
        // split by sign so exp never overflows
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T out) { return out * (T(1) - out); });
}

inline constexpr double kDefaultLeakySlope = 0.2;

template <std::floating_point T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(kDefaultLeakySlope)) {
  return detail::unary<T>("leaky_relu", x, [slope](T v) { return v > T(0) ? v : v * slope; },
                          [slope](T in, T) { return in > T(0) ? T(1) : slope; });
}

template <std::floating_point T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>("square", x, [](T v) { return v * v; }, [](T in, T) { return T(2) * in; });
}

template <std::floating_point T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary<T>("abs", x, [](T v) { return std::abs(v); },
                          [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return detail::make_result<T>("sum", Shape{1, 1, 1, 1}, {static_cast<T>(acc)}, {&x}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  return detail::make_result<T>("mean", Shape{1, 1, 1, 1}, {static_cast<T>(acc / n)}, {&x},
                                [n](detail::Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  if (!p.requires_grad) return;
                                  auto& g = p.ensure_grad();
                                  const T d = static_cast<T>(static_cast<double>(self.grad[0]) / n);
                                  for (auto& v : g) v += d;
                                });
}

// ---------------------------------------------------------------------------
// Channel concatenation and slicing
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.batch != s0.batch || s.height != s0.height || s.width != s0.width)
      throw ShapeError("concat_channels: incompatible shapes " + s0.str() + " vs " + s.str());
    channels += s.channels;
  }
  const Shape out_shape{s0.batch, channels, s0.height, s0.width};
  const std::size_t plane = s0.plane();
  std::vector<T> out(out_shape.numel());
  for (std::size_t n = 0; n < s0.batch; ++n) {
    T* dst = out.data() + n * channels * plane;
    for (const auto& p : parts) {
      const std::size_t len = p.shape().channels * plane;
      std::memcpy(dst, p.data() + n * len, len * sizeof(T));
      dst += len;
    }
  }
  return detail::make_result<T>("concat_channels", out_shape, std::move(out), parts, [](detail::Node<T>& self) {
    const std::size_t plane = self.shape.plane();
    const std::size_t total = self.shape.channels * plane;
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t len = p->shape.channels * plane;
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t n = 0; n < self.shape.batch; ++n) {
          const T* src = self.grad.data() + n * total + offset;
          T* dst = g.data() + n * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      }
      offset += len;
    }
  });
}

template <std::floating_point T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  return concat_channels<T>(std::span<const Tensor<T>>(parts.begin(), parts.size()));
}

/// Channels [begin, end) of every batch item.
template <std::floating_point T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (begin > end || end > s.channels)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + std::to_string(s.channels) + " channels");
  const Shape out_shape{s.batch, end - begin, s.height, s.width};
  const std::size_t plane = s.plane();
  const std::size_t len = (end - begin) * plane;
  std::vector<T> out(out_shape.numel());
  for (std::size_t n = 0; n < s.batch; ++n)
    std::memcpy(out.data() + n * len, x.data() + (n * s.channels + begin) * plane, len * sizeof(T));
  return detail::make_result<T>("slice_channels", out_shape, std::move(out), {&x},
                                [begin, len, plane](detail::Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  if (!p.requires_grad) return;
                                  auto& g = p.ensure_grad();
                                  const std::size_t in_c = p.shape.channels;
                                  for (std::size_t n = 0; n < self.shape.batch; ++n) {
                                    T* dst = g.data() + (n * in_c + begin) * plane;
                                    const T* src = self.grad.data() + n * len;
                                    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                                  }
                                });
}

/// Stacks same-shaped tensors along the batch axis.
template <std::floating_point T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  const Shape& s0 = parts[0].shape();
  std::size_t batch = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.channels != s0.channels || s.height != s0.height || s.width != s0.width)
      throw ShapeError("concat_batch: incompatible shapes " + s0.str() + " vs " + s.str());
    batch += s.batch;
  }
  const Shape out_shape{batch, s0.channels, s0.height, s0.width};
  std::vector<T> out;
  out.reserve(out_shape.numel());
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result<T>("concat_batch", out_shape, std::move(out), parts, [](detail::Node<T>& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

/// Batch item `index` as a (1, C, H, W) tensor.
template <std::floating_point T>
Tensor<T> batch_item(const Tensor<T>& x, std::size_t index) {
  const Shape& s = x.shape();
  if (index >= s.batch) throw ShapeError("batch_item: index out of range for " + s.str());
  const std::size_t len = s.image_size();
  std::vector<T> out(x.data() + index * len, x.data() + (index + 1) * len);
  return detail::make_result<T>("batch_item", Shape{1, s.channels, s.height, s.width}, std::move(out), {&x},
                                [index, len](detail::Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  if (!p.requires_grad) return;
                                  auto& g = p.ensure_grad();
                                  for (std::size_t i = 0; i < len; ++i) g[index * len + i] += self.grad[i];
                                });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfolds one image (C, H, W) into a (C*k*k, H*W) patch matrix, zero padded.
template <class T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            T* col) {
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - P;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - P;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          T* row = col + y * W;
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H || x0 >= x1) {
            std::fill(row, row + W, T(0));
            continue;
          }
          std::fill(row, row + x0, T(0));
          std::memcpy(row + x0, plane + sy * W + x0 + dx, static_cast<std::size_t>(x1 - x0) * sizeof(T));
          std::fill(row + x1, row + W, T(0));
        }
        col += h * w;
      }
    }
  }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
template <class T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
                T* img) {
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - P;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - P;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* row = col + y * W;
          T* dst = plane + sy * W + dx;
          for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += row[x];
        }
        col += h * w;
      }
    }
  }
}

}  // namespace detail

/// Same-size 2-D convolution (cross-correlation, stride 1).
/// weight: (C_out, C_in, k, k) with k odd; bias: (1, C_out, 1, 1); padding must be (k - 1) / 2.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding) {
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  if (ws.height != ws.width || ws.height % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  if (ws.channels != in.channels)
    throw ShapeError("conv2d: input has " + std::to_string(in.channels) + " channels, weight expects " +
                     std::to_string(ws.channels));
  if (bias.shape() != Shape{1, ws.batch, 1, 1})
    throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match " +
                     std::to_string(ws.batch) + " output channels");
  const std::size_t k = ws.height;
  if (padding != (k - 1) / 2)
    throw ShapeError("conv2d: padding " + std::to_string(padding) + " is not same-size for kernel " +
                     std::to_string(k));

  using Mat = detail::RowMatrix<T>;
  using MapC = Eigen::Map<const Mat>;
  using MapM = Eigen::Map<Mat>;

  const std::size_t cin = in.channels;
  const std::size_t cout = ws.batch;
  const std::size_t hw = in.plane();
  const std::size_t patch = cin * k * k;
  const Shape out_shape{in.batch, cout, in.height, in.width};

  std::vector<T> out(out_shape.numel());
  std::vector<T> col(k == 1 ? 0 : patch * hw);
  MapC wmat(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch));
  for (std::size_t n = 0; n < in.batch; ++n) {
    const T* img = input.data() + n * cin * hw;
    const T* cols = img;
    if (k != 1) {
      detail::im2col(img, cin, in.height, in.width, k, padding, col.data());
      cols = col.data();
    }
    MapC cmat(cols, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(hw));
    MapM omat(out.data() + n * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
    omat.noalias() = wmat * cmat;
    for (std::size_t o = 0; o < cout; ++o) omat.row(static_cast<Eigen::Index>(o)).array() += bias.data()[o];
  }

  return detail::make_result<T>(
      "conv2d", out_shape, std::move(out), {&input, &weight, &bias}, [k, padding](detail::Node<T>& self) {
        auto& pin = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const Shape& in = pin.shape;
        const std::size_t cin = in.channels;
        const std::size_t cout = pw.shape.batch;
        const std::size_t hw = in.plane();
        const std::size_t patch = cin * k * k;
        const auto P = static_cast<Eigen::Index>(patch);
        const auto HW = static_cast<Eigen::Index>(hw);
        const auto CO = static_cast<Eigen::Index>(cout);

        std::vector<T> col(k == 1 ? 0 : patch * hw);
        std::vector<T> dcol(pin.requires_grad && k != 1 ? patch * hw : 0);
        MapC wmat(pw.value.data(), CO, P);
        for (std::size_t n = 0; n < in.batch; ++n) {
          MapC gout(self.grad.data() + n * cout * hw, CO, HW);
          if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            const T* g = self.grad.data() + n * cout * hw;
            for (std::size_t o = 0; o < cout; ++o) {
              double acc = 0.0;
              for (std::size_t i = 0; i < hw; ++i) acc += static_cast<double>(g[o * hw + i]);
              gb[o] += static_cast<T>(acc);
            }
          }
          if (pw.requires_grad) {
            const T* img = pin.value.data() + n * cin * hw;
            const T* cols = img;
            if (k != 1) {
              detail::im2col(img, cin, in.height, in.width, k, padding, col.data());
              cols = col.data();
            }
            MapM gw(pw.ensure_grad().data(), CO, P);
            gw.noalias() += gout * MapC(cols, P, HW).transpose();
          }
          if (pin.requires_grad) {
            T* gimg = pin.ensure_grad().data() + n * cin * hw;
            if (k == 1) {
              MapM(gimg, P, HW).noalias() += wmat.transpose() * gout;
            } else {
              MapM dc(dcol.data(), P, HW);
              dc.noalias() = wmat.transpose() * gout;
              detail::col2im_add(dcol.data(), cin, in.height, in.width, k, padding, gimg);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Populates gradients of every reachable tensor that requires them.
/// Leaf gradients accumulate across calls; interior gradients are released.
template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  using Node = detail::Node<T>;
  if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got shape " + loss.shape().str());
  if (!loss.requires_grad()) throw Error("backward: loss has no history requiring gradients");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.node().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (!n->is_leaf()) n->grad.clear();
  root->ensure_grad()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf()) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace imn
