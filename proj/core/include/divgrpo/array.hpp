#pragma once

#include <span>
#include <vector>

#include "divgrpo/errors.hpp"

namespace divgrpo {

// Dense row-major matrix of doubles. Scalars are 1x1; vectors are 1xn or nx1.
// Double precision throughout: the verification suites depend on near-exact
// cancellation that float32 would mask.
class Array {
 public:
  Array() = default;
  Array(int rows, int cols, double fill = 0.0);

  static Array scalar(double v);
  static Array row(std::vector<double> v);
  static Array column(std::vector<double> v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Array& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](int i) { return data_[i]; }
  double operator[](int i) const { return data_[i]; }

  // Scalar extraction; ContractError if the array is not 1x1.
  double item() const;

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v);
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the tape ops and the policies'
// sampling paths, so both routes evaluate identical arithmetic.
namespace array_ops {

Array matmul(const Array& a, const Array& b);

// Row-wise softmax / log-softmax with max-subtraction stabilization.
Array softmax_rows(const Array& a);
Array log_softmax_rows(const Array& a);

// Entropy of a probability row: -sum p log p (0 log 0 := 0).
double entropy(std::span<const double> probs);

}  // namespace array_ops

}  // namespace divgrpo
