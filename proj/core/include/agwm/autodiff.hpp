#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "agwm/tensor.hpp"

namespace agwm::nn {

/// Thread-local switch: with gradients disabled, ops compute values only and
/// record no tape. Inference paths run under NoGradGuard.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
};

template <typename T>
struct Node {
  TensorData<T> value;
  std::vector<T> grad;  // allocated lazily, same numel as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.v.size()) grad.assign(value.v.size(), T(0));
  }
};

/// Value-semantics handle to a tape node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(TensorData<T> data) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(data);
    return Var(std::move(node));
  }

  static Var param(TensorData<T> data) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(data);
    node->requires_grad = true;
    return Var(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const TensorData<T>& value() const { return node_->value; }
  TensorData<T>& value() { return node_->value; }
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::shared_ptr<Node<T>> node() const { return node_; }
  int rows() const { return node_->value.rows(); }
  int cols() const { return node_->value.cols(); }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.v.size(), T(0));
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

template <typename T>
std::shared_ptr<Node<T>> make_op(TensorData<T> value, std::vector<Var<T>> inputs,
                                 std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (GradMode::enabled()) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      node->requires_grad = true;
      for (auto& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(backward);
    }
  }
  return node;
}

}  // namespace detail

/// Reverse-mode accumulation from a scalar loss. Gradients accumulate into
/// every reachable node with requires_grad.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().numel() != 1) throw DataError("backward requires a scalar loss");
  if (!loss.requires_grad()) return;
  // Iterative post-order topological sort.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node<T>* child = node->parents[next_child++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.value().v.size() != b.value().v.size()) throw DataError("add: shape mismatch");
  TensorData<T> out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.value().v[i];
  return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *n.parents[static_cast<std::size_t>(k)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  }));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.value().v.size() != b.value().v.size()) throw DataError("sub: shape mismatch");
  TensorData<T> out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.value().v[i];
  return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  }));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.value().v.size() != b.value().v.size()) throw DataError("mul: shape mismatch");
  TensorData<T> out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.value().v[i];
  return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value.v[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value.v[i];
    }
  }));
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  TensorData<T> out = a.value();
  for (auto& x : out.v) x *= s;
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [s](Node<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += s * n.grad[i];
  }));
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  TensorData<T> out = a.value();
  for (auto& x : out.v) x = x > T(0) ? x : T(0);
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (n.value.v[i] > T(0)) p.grad[i] += n.grad[i];
  }));
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  TensorData<T> out = a.value();
  for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const T y = n.value.v[i];
      p.grad[i] += n.grad[i] * y * (T(1) - y);
    }
  }));
}

template <typename T>
Var<T> tanh_act(const Var<T>& a) {
  TensorData<T> out = a.value();
  for (auto& x : out.v) x = std::tanh(x);
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const T y = n.value.v[i];
      p.grad[i] += n.grad[i] * (T(1) - y * y);
    }
  }));
}

/// Stops gradient flow: the result is a constant copy of the input value.
template <typename T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

// ---------------------------------------------------------------------------
// Matrix ops (Eigen-backed).
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) throw DataError("matmul: inner dimensions disagree");
  TensorData<T> out = TensorData<T>::zeros({m, n});
  detail::ConstMatMap<T> ma(a.value().v.data(), m, k);
  detail::ConstMatMap<T> mb(b.value().v.data(), k, n);
  detail::MatMap<T>(out.v.data(), m, n).noalias() = ma * mb;
  return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    detail::ConstMatMap<T> gout(node.grad.data(), m, n);
    if (pa.requires_grad) {
      pa.ensure_grad();
      detail::ConstMatMap<T> mb(pb.value.v.data(), k, n);
      detail::MatMap<T>(pa.grad.data(), m, k).noalias() += gout * mb.transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      detail::ConstMatMap<T> ma(pa.value.v.data(), m, k);
      detail::MatMap<T>(pb.grad.data(), k, n).noalias() += ma.transpose() * gout;
    }
  }));
}

/// y = x * w^T + b with x [n, in], w [out, in], b [out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int n = x.rows(), in = x.cols(), out_dim = w.rows();
  if (w.cols() != in) throw DataError("linear: weight shape mismatch");
  if (static_cast<int>(b.value().numel()) != out_dim) throw DataError("linear: bias shape mismatch");
  TensorData<T> out = TensorData<T>::zeros({n, out_dim});
  detail::ConstMatMap<T> mx(x.value().v.data(), n, in);
  detail::ConstMatMap<T> mw(w.value().v.data(), out_dim, in);
  detail::MatMap<T> mo(out.v.data(), n, out_dim);
  mo.noalias() = mx * mw.transpose();
  mo.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().v.data(), out_dim);
  return Var<T>(detail::make_op<T>(std::move(out), {x, w, b}, [n, in, out_dim](Node<T>& node) {
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    auto& pb = *node.parents[2];
    detail::ConstMatMap<T> gout(node.grad.data(), n, out_dim);
    if (px.requires_grad) {
      px.ensure_grad();
      detail::ConstMatMap<T> mw(pw.value.v.data(), out_dim, in);
      detail::MatMap<T>(px.grad.data(), n, in).noalias() += gout * mw;
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      detail::ConstMatMap<T> mx(px.value.v.data(), n, in);
      detail::MatMap<T>(pw.grad.data(), out_dim, in).noalias() += gout.transpose() * mx;
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(pb.grad.data(), out_dim) +=
          gout.colwise().sum();
    }
  }));
}

// ---------------------------------------------------------------------------
// Structural ops.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DataError("concat_cols: no inputs");
  const int n = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DataError("concat_cols: row mismatch");
    total += p.cols();
  }
  TensorData<T> out = TensorData<T>::zeros({n, total});
  std::vector<int> widths;
  int offset = 0;
  for (const auto& p : parts) {
    const int c = p.cols();
    widths.push_back(c);
    for (int r = 0; r < n; ++r)
      std::copy_n(p.value().v.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(c),
                  c, out.v.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(total) + offset);
    offset += c;
  }
  return Var<T>(detail::make_op<T>(std::move(out), parts, [n, total, widths](Node<T>& node) {
    int off = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto& p = *node.parents[k];
      const int c = widths[k];
      if (p.requires_grad) {
        p.ensure_grad();
        for (int r = 0; r < n; ++r) {
          const T* src = node.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(total) + off;
          T* dst = p.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
          for (int i = 0; i < c; ++i) dst[i] += src[i];
        }
      }
      off += c;
    }
  }));
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, int c0, int c1) {
  const int n = a.rows(), c = a.cols();
  if (c0 < 0 || c1 > c || c0 >= c1) throw DataError("slice_cols: bad range");
  const int w = c1 - c0;
  TensorData<T> out = TensorData<T>::zeros({n, w});
  for (int r = 0; r < n; ++r)
    std::copy_n(a.value().v.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(c) + c0, w,
                out.v.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w));
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [n, c, c0, w](Node<T>& node) {
    auto& p = *node.parents[0];
    p.ensure_grad();
    for (int r = 0; r < n; ++r) {
      const T* src = node.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w);
      T* dst = p.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(c) + c0;
      for (int i = 0; i < w; ++i) dst[i] += src[i];
    }
  }));
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DataError("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DataError("concat_rows: column mismatch");
    total += p.rows();
  }
  TensorData<T> out = TensorData<T>::zeros({total, c});
  std::vector<int> heights;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    heights.push_back(p.rows());
    std::copy_n(p.value().v.data(), p.value().v.size(), out.v.data() + offset);
    offset += p.value().v.size();
  }
  return Var<T>(detail::make_op<T>(std::move(out), parts, [heights, c](Node<T>& node) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto& p = *node.parents[k];
      const std::size_t count = static_cast<std::size_t>(heights[k]) * static_cast<std::size_t>(c);
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t i = 0; i < count; ++i) p.grad[i] += node.grad[off + i];
      }
      off += count;
    }
  }));
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, int r0, int r1) {
  const int n = a.rows(), c = a.cols();
  if (r0 < 0 || r1 > n || r0 >= r1) throw DataError("slice_rows: bad range");
  const int h = r1 - r0;
  TensorData<T> out = TensorData<T>::zeros({h, c});
  std::copy_n(a.value().v.data() + static_cast<std::size_t>(r0) * static_cast<std::size_t>(c),
              static_cast<std::size_t>(h) * static_cast<std::size_t>(c), out.v.data());
  return Var<T>(detail::make_op<T>(std::move(out), {a}, [r0, h, c](Node<T>& node) {
    auto& p = *node.parents[0];
    p.ensure_grad();
    const std::size_t count = static_cast<std::size_t>(h) * static_cast<std::size_t>(c);
    T* dst = p.grad.data() + static_cast<std::size_t>(r0) * static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < count; ++i) dst[i] += node.grad[i];
  }));
}

// ---------------------------------------------------------------------------
// Convolution.
// ---------------------------------------------------------------------------

struct Conv2dDims {
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int patch_size() const { return in_channels * kernel * kernel; }
};

namespace detail {

template <typename T>
void im2col(const T* input, const Conv2dDims& d, T* col) {
  // col is [out_h*out_w, patch_size] for one sample.
  const int oh = d.out_h(), ow = d.out_w(), k = d.kernel;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col + static_cast<std::size_t>(oy * ow + ox) * static_cast<std::size_t>(d.patch_size());
      for (int ci = 0; ci < d.in_channels; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            T value = T(0);
            if (iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w)
              value = input[(static_cast<std::size_t>(ci) * static_cast<std::size_t>(d.in_h) +
                             static_cast<std::size_t>(iy)) *
                                static_cast<std::size_t>(d.in_w) +
                            static_cast<std::size_t>(ix)];
            row[(ci * k + ky) * k + kx] = value;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const Conv2dDims& d, T* input_grad) {
  const int oh = d.out_h(), ow = d.out_w(), k = d.kernel;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = col + static_cast<std::size_t>(oy * ow + ox) * static_cast<std::size_t>(d.patch_size());
      for (int ci = 0; ci < d.in_channels; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.in_w) continue;
            input_grad[(static_cast<std::size_t>(ci) * static_cast<std::size_t>(d.in_h) +
                        static_cast<std::size_t>(iy)) *
                           static_cast<std::size_t>(d.in_w) +
                       static_cast<std::size_t>(ix)] += row[(ci * k + ky) * k + kx];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2D convolution over a batch of flattened CHW rows. x is [B, Cin*H*W],
/// w is [Cout, Cin*K*K], b is [Cout]; the result is [B, Cout*OH*OW].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const Conv2dDims& d) {
  const int batch = x.rows();
  if (x.cols() != d.in_channels * d.in_h * d.in_w) throw DataError("conv2d: input shape mismatch");
  if (w.rows() != d.out_channels || w.cols() != d.patch_size())
    throw DataError("conv2d: weight shape mismatch");
  const int oh = d.out_h(), ow = d.out_w();
  const int patches = oh * ow;
  const int psize = d.patch_size();

  auto col = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(patches) * static_cast<std::size_t>(psize));
  for (int s = 0; s < batch; ++s)
    detail::im2col(x.value().v.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(x.cols()), d,
                   col->data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(patches) *
                                     static_cast<std::size_t>(psize));

  // patch-major product: [B*patches, psize] x [psize, Cout]
  std::vector<T> out_patch(static_cast<std::size_t>(batch) * static_cast<std::size_t>(patches) *
                           static_cast<std::size_t>(d.out_channels));
  {
    detail::ConstMatMap<T> mcol(col->data(), batch * patches, psize);
    detail::ConstMatMap<T> mw(w.value().v.data(), d.out_channels, psize);
    detail::MatMap<T> mo(out_patch.data(), batch * patches, d.out_channels);
    mo.noalias() = mcol * mw.transpose();
    mo.rowwise() +=
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().v.data(), d.out_channels);
  }

  // Reorder to channel-major rows [B, Cout*OH*OW].
  TensorData<T> out = TensorData<T>::zeros({batch, d.out_channels * patches});
  for (int s = 0; s < batch; ++s)
    for (int p = 0; p < patches; ++p) {
      const T* src = out_patch.data() + (static_cast<std::size_t>(s) * static_cast<std::size_t>(patches) +
                                         static_cast<std::size_t>(p)) *
                                            static_cast<std::size_t>(d.out_channels);
      for (int co = 0; co < d.out_channels; ++co)
        out.v[static_cast<std::size_t>(s) * static_cast<std::size_t>(d.out_channels * patches) +
              static_cast<std::size_t>(co) * static_cast<std::size_t>(patches) + static_cast<std::size_t>(p)] =
            src[co];
    }

  return Var<T>(detail::make_op<T>(std::move(out), {x, w, b}, [batch, d, col](Node<T>& node) {
    const int oh = d.out_h(), ow = d.out_w();
    const int patches = oh * ow;
    const int psize = d.patch_size();
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    auto& pb = *node.parents[2];

    // Back to patch-major gradient.
    std::vector<T> gpatch(static_cast<std::size_t>(batch) * static_cast<std::size_t>(patches) *
                          static_cast<std::size_t>(d.out_channels));
    for (int s = 0; s < batch; ++s)
      for (int co = 0; co < d.out_channels; ++co) {
        const T* src = node.grad.data() +
                       static_cast<std::size_t>(s) * static_cast<std::size_t>(d.out_channels * patches) +
                       static_cast<std::size_t>(co) * static_cast<std::size_t>(patches);
        for (int p = 0; p < patches; ++p)
          gpatch[(static_cast<std::size_t>(s) * static_cast<std::size_t>(patches) +
                  static_cast<std::size_t>(p)) *
                     static_cast<std::size_t>(d.out_channels) +
                 static_cast<std::size_t>(co)] = src[p];
      }

    detail::ConstMatMap<T> mg(gpatch.data(), batch * patches, d.out_channels);
    if (pw.requires_grad) {
      pw.ensure_grad();
      detail::ConstMatMap<T> mcol(col->data(), batch * patches, psize);
      detail::MatMap<T>(pw.grad.data(), d.out_channels, psize).noalias() += mg.transpose() * mcol;
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(pb.grad.data(), d.out_channels) +=
          mg.colwise().sum();
    }
    if (px.requires_grad) {
      px.ensure_grad();
      std::vector<T> gcol(static_cast<std::size_t>(batch) * static_cast<std::size_t>(patches) *
                          static_cast<std::size_t>(psize));
      detail::ConstMatMap<T> mw(pw.value.v.data(), d.out_channels, psize);
      detail::MatMap<T>(gcol.data(), batch * patches, psize).noalias() = mg * mw;
      const int in_size = d.in_channels * d.in_h * d.in_w;
      for (int s = 0; s < batch; ++s)
        detail::col2im_add(gcol.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(patches) *
                                             static_cast<std::size_t>(psize),
                           d,
                           px.grad.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(in_size));
    }
  }));
}

// ---------------------------------------------------------------------------
// Reductions and losses.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T total = T(0);
  for (const T x : a.value().v) total += x;
  return Var<T>(detail::make_op<T>(TensorData<T>({1}, {total}), {a}, [](Node<T>& node) {
    auto& p = *node.parents[0];
    p.ensure_grad();
    const T g = node.grad[0];
    for (auto& x : p.grad) x += g;
  }));
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a.value().numel());
  T total = T(0);
  for (const T x : a.value().v) total += x;
  return Var<T>(detail::make_op<T>(TensorData<T>({1}, {total * inv}), {a}, [inv](Node<T>& node) {
    auto& p = *node.parents[0];
    p.ensure_grad();
    const T g = node.grad[0] * inv;
    for (auto& x : p.grad) x += g;
  }));
}

/// Mean squared error against a constant target.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const TensorData<T>& target) {
  if (pred.value().v.size() != target.v.size()) throw DataError("mse_loss: shape mismatch");
  const std::size_t n = pred.value().v.size();
  const T inv = T(1) / static_cast<T>(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T diff = pred.value().v[i] - target.v[i];
    total += diff * diff;
  }
  auto target_copy = std::make_shared<std::vector<T>>(target.v);
  return Var<T>(
      detail::make_op<T>(TensorData<T>({1}, {total * inv}), {pred}, [inv, target_copy](Node<T>& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        const T g = T(2) * inv * node.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i)
          p.grad[i] += g * (p.value.v[i] - (*target_copy)[i]);
      }));
}

/// Binary cross-entropy over probabilities with positive-class weighting:
/// -mean(w_pos * y * log p + (1 - y) * log(1 - p)), p clamped to
/// [1e-7, 1 - 1e-7].
template <typename T>
Var<T> bce_weighted(const Var<T>& pred, const TensorData<T>& target, T pos_weight) {
  if (pred.value().v.size() != target.v.size()) throw DataError("bce_weighted: shape mismatch");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  const std::size_t n = pred.value().v.size();
  const T inv = T(1) / static_cast<T>(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T p = std::clamp(pred.value().v[i], lo, hi);
    const T y = target.v[i];
    total -= pos_weight * y * std::log(p) + (T(1) - y) * std::log(T(1) - p);
  }
  auto target_copy = std::make_shared<std::vector<T>>(target.v);
  return Var<T>(detail::make_op<T>(
      TensorData<T>({1}, {total * inv}), {pred}, [inv, pos_weight, lo, hi, target_copy](Node<T>& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        const T g = inv * node.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
          const T pc = std::clamp(p.value.v[i], lo, hi);
          const T y = (*target_copy)[i];
          p.grad[i] += g * (-pos_weight * y / pc + (T(1) - y) / (T(1) - pc));
        }
      }));
}

}  // namespace agwm::nn
