#include "divgrpo/array.hpp"

#include <algorithm>
#include <cmath>

namespace divgrpo {

Array::Array(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0 || (rows == 0) != (cols == 0)) {
    throw ShapeError("Array: invalid shape " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Array Array::scalar(double v) {
  Array a(1, 1);
  a.data_[0] = v;
  return a;
}

Array Array::row(std::vector<double> v) {
  Array a;
  a.rows_ = 1;
  a.cols_ = static_cast<int>(v.size());
  a.data_ = std::move(v);
  return a;
}

Array Array::column(std::vector<double> v) {
  Array a;
  a.rows_ = static_cast<int>(v.size());
  a.cols_ = 1;
  a.data_ = std::move(v);
  return a;
}

double Array::item() const {
  if (!is_scalar()) {
    throw ContractError("Array::item: expected 1x1, got " + std::to_string(rows_) + "x" +
                        std::to_string(cols_));
  }
  return data_[0];
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace array_ops {

Array matmul(const Array& a, const Array& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Array out(a.rows(), b.cols());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
    }
  }
  return out;
}

Array softmax_rows(const Array& a) {
  Array out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    double mx = a(r, 0);
    for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, a(r, c));
    double z = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
      out(r, c) = std::exp(a(r, c) - mx);
      z += out(r, c);
    }
    for (int c = 0; c < a.cols(); ++c) out(r, c) /= z;
  }
  return out;
}

Array log_softmax_rows(const Array& a) {
  Array out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    double mx = a(r, 0);
    for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, a(r, c));
    double z = 0.0;
    for (int c = 0; c < a.cols(); ++c) z += std::exp(a(r, c) - mx);
    const double lz = std::log(z) + mx;
    for (int c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) - lz;
  }
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace array_ops

}  // namespace divgrpo
