#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "agwm/autodiff.hpp"
#include "agwm/rng.hpp"

namespace agwm::nn {

/// Ordered, named parameter registry. Order is construction order and is the
/// contract for optimizer state and checkpoint layout.
template <typename T>
class ParameterSet {
 public:
  Var<T> add(const std::string& name, TensorData<T> init) {
    for (const auto& [existing, v] : params_)
      if (existing == name) throw DataError("duplicate parameter name: " + name);
    Var<T> p = Var<T>::param(std::move(init));
    params_.emplace_back(name, p);
    return p;
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return params_; }

  Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : params_)
      if (n == name) return v;
    throw DataError("unknown parameter: " + name);
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& [n, v] : params_) total += v.value().numel();
    return total;
  }

  void zero_grad() {
    for (auto& [n, v] : params_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
};

namespace init {

/// Kaiming-style uniform fan-in: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
TensorData<T> uniform_fan_in(std::vector<int> shape, int fan_in, Rng& rng) {
  TensorData<T> t = TensorData<T>::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : t.v) x = static_cast<T>(rng.uniform_range(-bound, bound));
  return t;
}

}  // namespace init

template <typename T>
struct Linear {
  Var<T> w, b;
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, int in_dim, int out_dim, Rng& rng)
      : in(in_dim), out(out_dim) {
    w = params.add(name + ".w", init::uniform_fan_in<T>({out_dim, in_dim}, in_dim, rng));
    b = params.add(name + ".b", init::uniform_fan_in<T>({out_dim}, in_dim, rng));
  }

  Var<T> forward(const Var<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  Conv2dDims dims;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, Conv2dDims d, Rng& rng) : dims(d) {
    const int fan_in = d.patch_size();
    w = params.add(name + ".w", init::uniform_fan_in<T>({d.out_channels, fan_in}, fan_in, rng));
    b = params.add(name + ".b", init::uniform_fan_in<T>({d.out_channels}, fan_in, rng));
  }

  Var<T> forward(const Var<T>& x) const { return conv2d(x, w, b, dims); }
};

/// Gate layout follows the r|z|n convention: with zero weights,
/// h' = 0.5 * h.
template <typename T>
struct GRUCell {
  Var<T> w_ih, w_hh, b_ih, b_hh;
  int in = 0, hidden = 0;

  GRUCell() = default;
  GRUCell(ParameterSet<T>& params, const std::string& name, int in_dim, int hidden_dim, Rng& rng)
      : in(in_dim), hidden(hidden_dim) {
    w_ih = params.add(name + ".w_ih", init::uniform_fan_in<T>({3 * hidden_dim, in_dim}, in_dim, rng));
    w_hh = params.add(name + ".w_hh",
                      init::uniform_fan_in<T>({3 * hidden_dim, hidden_dim}, hidden_dim, rng));
    b_ih = params.add(name + ".b_ih", init::uniform_fan_in<T>({3 * hidden_dim}, in_dim, rng));
    b_hh = params.add(name + ".b_hh", init::uniform_fan_in<T>({3 * hidden_dim}, hidden_dim, rng));
  }

  Var<T> forward(const Var<T>& x, const Var<T>& h) const {
    const int hd = hidden;
    Var<T> gi = linear(x, w_ih, b_ih);
    Var<T> gh = linear(h, w_hh, b_hh);
    Var<T> r = sigmoid(add(slice_cols(gi, 0, hd), slice_cols(gh, 0, hd)));
    Var<T> z = sigmoid(add(slice_cols(gi, hd, 2 * hd), slice_cols(gh, hd, 2 * hd)));
    Var<T> n = tanh_act(add(slice_cols(gi, 2 * hd, 3 * hd), mul(r, slice_cols(gh, 2 * hd, 3 * hd))));
    // h' = (1 - z) * n + z * h = n + z * (h - n)
    return add(n, mul(z, sub(h, n)));
  }
};

/// Two-layer ReLU MLP.
template <typename T>
struct Mlp2 {
  Linear<T> fc1, fc2;

  Mlp2() = default;
  Mlp2(ParameterSet<T>& params, const std::string& name, int in_dim, int hidden_dim, int out_dim,
       Rng& rng)
      : fc1(params, name + ".fc1", in_dim, hidden_dim, rng),
        fc2(params, name + ".fc2", hidden_dim, out_dim, rng) {}

  Var<T> forward(const Var<T>& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

}  // namespace agwm::nn
