#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bwex/error.hpp"

namespace bwex::nn {

using Shape = std::vector<std::size_t>;

/// Train mode uses batch statistics and caches activations for backward.
enum class Mode { train, infer };

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t element_count(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of rank 1 to 3 with an optional gradient slot.
/// Activations use the (batch, channels, length) layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(element_count(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " + to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t batch() const { return dim3(0); }
  std::size_t channels() const { return dim3(1); }
  std::size_t length() const { return dim3(2); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t t) { return data_[(n * shape_[1] + c) * shape_[2] + t]; }
  const T& at(std::size_t n, std::size_t c, std::size_t t) const { return data_[(n * shape_[1] + c) * shape_[2] + t]; }

  /// Pointer to the start of row (n, c) of a rank-3 tensor.
  T* row(std::size_t n, std::size_t c) { return data_.data() + (n * shape_[1] + c) * shape_[2]; }
  const T* row(std::size_t n, std::size_t c) const { return data_.data() + (n * shape_[1] + c) * shape_[2]; }

  bool has_grad() const noexcept { return grad_enabled_; }
  void enable_grad() {
    grad_.assign(data_.size(), T{0});
    grad_enabled_ = true;
  }
  void drop_grad() {
    grad_.clear();
    grad_enabled_ = false;
  }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

 private:
  void check_rank() const {
    if (shape_.empty() || shape_.size() > 3) throw ShapeError("tensor: rank must be 1..3, got " + std::to_string(shape_.size()));
  }
  std::size_t dim3(std::size_t i) const {
    if (shape_.size() != 3) throw ShapeError("tensor: expected rank 3, got shape " + to_string(shape_));
    return shape_[i];
  }

  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool grad_enabled_ = false;
};

template <typename T>
void require_rank3(const Tensor<T>& t, const char* who) {
  if (t.rank() != 3) throw ShapeError(std::string(who) + ": expected (batch, channels, length), got " + to_string(t.shape()));
}

}  // namespace bwex::nn
