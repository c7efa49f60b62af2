#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fcdx/common.hpp"

namespace fcdx {

std::string shape_str(const std::vector<int>& shape);

// Dense row-major n-d array. Copies are shallow (storage is shared); clone()
// for a deep copy. All graph values and gradients live in these.
template <class T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    for (int e : shape_)
      if (e <= 0) throw dimension_error("tensor extents must be positive: " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(numel_of(shape_), T(0));
  }

  static TensorT full(std::vector<int> shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data(), t.data() + t.numel(), v);
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<T> vals) {
    if (numel_of(shape) != static_cast<std::int64_t>(vals.size()))
      throw dimension_error("value count does not match shape " + shape_str(shape));
    TensorT t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(vals));
    return t;
  }

  static TensorT scalar(T v) { return full({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T& operator[](std::int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  T item() const {
    if (numel() != 1) throw contract_error("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  TensorT clone() const {
    TensorT t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  // Same storage, new shape (numel must match).
  TensorT reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != numel())
      throw dimension_error("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    TensorT t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  template <class U>
  TensorT<U> cast() const {
    std::vector<U> vals(data_->begin(), data_->end());
    return TensorT<U>::from(shape_, std::move(vals));
  }

  void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

  void add_(const TensorT& o) {
    if (!same_shape(o)) throw dimension_error("add_ shape mismatch " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    const T* s = o.data();
    T* d = data();
    std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
  }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using Tensor = TensorT<float>;

}  // namespace fcdx
