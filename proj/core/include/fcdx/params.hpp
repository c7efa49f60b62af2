#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fcdx/autodiff.hpp"
#include "fcdx/nn_ops.hpp"
#include "fcdx/random.hpp"

namespace fcdx {

// Registry of named learnable tensors plus batch-norm running state.
// Registration order fixes optimizer iteration order; initialization is
// keyed by parameter name so it does not depend on construction order.
template <class T>
struct ParamSetT {
  std::vector<std::pair<std::string, VarT<T>>> params;
  std::vector<std::pair<std::string, std::shared_ptr<BNStateT<T>>>> bn_states;

  VarT<T> add(std::string name, TensorT<T> init) {
    for (const auto& [n, p] : params)
      if (n == name) throw contract_error("duplicate parameter name '" + name + "'");
    auto v = make_param(std::move(init));
    params.emplace_back(std::move(name), v);
    return params.back().second;
  }

  std::shared_ptr<BNStateT<T>> track_bn(std::string prefix, int channels) {
    auto st = std::make_shared<BNStateT<T>>(channels);
    bn_states.emplace_back(std::move(prefix), st);
    return st;
  }

  VarT<T> find(std::string_view name) const {
    for (const auto& [n, p] : params)
      if (n == name) return p;
    return nullptr;
  }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params) n += p->value.numel();
    return n;
  }
  std::int64_t count_prefix(std::string_view prefix) const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params)
      if (name.size() >= prefix.size() && std::string_view(name).substr(0, prefix.size()) == prefix)
        n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, p] : params) zero_grad(p);
  }
};

// He-style init: normal with std sqrt(2 / fan_in), drawn from a stream keyed
// by the parameter name.
template <class T>
TensorT<T> he_normal(std::vector<int> shape, std::int64_t fan_in, const RandomStream& init_stream,
                     std::string_view name) {
  RandomStream rs = init_stream.child(name);
  TensorT<T> t(std::move(shape));
  T std_dev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rs.normal()) * std_dev;
  return t;
}

template <class T>
struct Conv3dLayerT {
  VarT<T> w, b;

  Conv3dLayerT() = default;
  Conv3dLayerT(ParamSetT<T>& ps, const RandomStream& init, const std::string& name, int cin, int cout,
               int k, bool bias) {
    std::int64_t fan_in = static_cast<std::int64_t>(cin) * k * k * k;
    w = ps.add(name + ".w", he_normal<T>({cout, cin, k, k, k}, fan_in, init, name + ".w"));
    if (bias) b = ps.add(name + ".b", TensorT<T>({cout}));
  }
  VarT<T> operator()(const VarT<T>& x) const { return conv3d(x, w, b); }
};

template <class T>
struct BatchNormLayerT {
  VarT<T> gamma, beta;
  std::shared_ptr<BNStateT<T>> state;

  BatchNormLayerT() = default;
  BatchNormLayerT(ParamSetT<T>& ps, const std::string& name, int channels) {
    gamma = ps.add(name + ".gamma", TensorT<T>::full({channels}, T(1)));
    beta = ps.add(name + ".beta", TensorT<T>({channels}));
    state = ps.track_bn(name, channels);
  }
  VarT<T> operator()(const VarT<T>& x, bool training) const {
    return batchnorm(x, gamma, beta, *state, training);
  }
};

template <class T>
struct LinearLayerT {
  VarT<T> w, b;

  LinearLayerT() = default;
  LinearLayerT(ParamSetT<T>& ps, const RandomStream& init, const std::string& name, int in_n, int out_n,
               bool bias = true) {
    w = ps.add(name + ".w", he_normal<T>({out_n, in_n}, in_n, init, name + ".w"));
    if (bias) b = ps.add(name + ".b", TensorT<T>({out_n}));
  }
  // Vector in, vector out.
  VarT<T> operator()(const VarT<T>& x) const { return linear(x, w, b); }
  // Row-batched application.
  VarT<T> rows(const VarT<T>& x) const { return linear_rows(x, w, b); }
};

}  // namespace fcdx
