#pragma once

#include <cstdint>
#include <vector>

#include "discnn/rng.hpp"
#include "discnn/tensor.hpp"

namespace discnn::test {

template <typename T>
TensorT<T> rand_tensor(Rng& rng, std::vector<int64_t> shape, double lo = -1.0,
                       double hi = 1.0) {
  TensorT<T> t(std::move(shape));
  for (auto& v : t.values) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  return worst;
}

}  // namespace discnn::test
