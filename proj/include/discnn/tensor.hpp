#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace discnn {

// Thrown when tensor/layer dimensions disagree; message names the offending
// dimension.
class shape_error : public std::runtime_error {
 public:
  explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major N-dimensional array. Carries images, activations, weights
// and gradients. Spatial tensors use channels-last order: [H,W,C] per sample,
// [N,H,W,C] batched; kernel axes precede channels (see nn.hpp).
template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> values;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(count(shape)), T(0));
  }
  TensorT(std::vector<int64_t> s, std::vector<T> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<size_t>(count(shape)) != values.size())
      throw shape_error("tensor: value count " + std::to_string(values.size()) +
                        " does not match shape product " +
                        std::to_string(count(shape)));
  }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw shape_error("tensor: nonpositive extent " + std::to_string(d));
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  T* data() { return values.data(); }
  const T* data() const { return values.data(); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.values.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
inline bool all_finite(const TensorT<T>& t) {
  for (T v : t.values)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_shape(const std::vector<int64_t>& got,
                   const std::vector<int64_t>& want, const char* what);

}  // namespace discnn
