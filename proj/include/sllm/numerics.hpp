// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense row-major f64 kernels with paired backward passes.
//
// Every reduction accumulates left to right in index order so results are
// bit-stable across runs and platforms with the same floating point model.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sllm/errors.hpp"

namespace sllm {

using FeatureVec = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::span<const FeatureVec> rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw ShapeError("ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + i * m.cols_);
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  FeatureVec row_vec(std::size_t r) const { return {row(r).begin(), row(r).end()}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

// ---------------------------------------------------------------------------
// products

/// a·b, i-k-j loop order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

/// a·bᵀ.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

/// aᵀ·b.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ar = a.row(k).data();
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

/// Gradients of c = a·b given dL/dc.
struct MatmulGrads {
  Matrix da;
  Matrix db;
};

inline MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  if (upstream.rows() != a.rows() || upstream.cols() != b.cols()) {
    throw ShapeError("matmul_backward: upstream " + shape_str(upstream));
  }
  return {matmul_nt(upstream, b), matmul_tn(a, upstream)};
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

inline bool all_finite(const Matrix& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// softmax

inline void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  double mx = x[0];
  for (double v : x) mx = v > mx ? v : mx;
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : x) v *= inv;
}

inline FeatureVec softmax(std::span<const double> x) {
  FeatureVec out(x.begin(), x.end());
  softmax_inplace(out);
  return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

/// dL/dx = y ⊙ (upstream − ⟨upstream, y⟩) per row, where y = softmax_rows(x).
inline Matrix softmax_rows_backward(const Matrix& y, const Matrix& upstream) {
  require_same_shape(y, upstream, "softmax_rows_backward");
  Matrix out(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double inner = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) inner += upstream(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) out(r, c) = y(r, c) * (upstream(r, c) - inner);
  }
  return out;
}

// ---------------------------------------------------------------------------
// vectors

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline FeatureVec l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw DegenerateInputError("l2_normalize: zero vector");
  FeatureVec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

/// Cosine similarity clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateInputError("cosine: zero vector");
  const double c = dot(u, v) / (nu * nv);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

/// Backward of y = x / ‖x‖: returns (I − ŷŷᵀ) g / ‖x‖.
inline FeatureVec l2_normalize_backward(std::span<const double> x, std::span<const double> upstream) {
  const double n = norm(x);
  if (!(n > 0.0)) throw DegenerateInputError("l2_normalize_backward: zero vector");
  double proj = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) proj += (x[i] / n) * upstream[i];
  FeatureVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (upstream[i] - (x[i] / n) * proj) / n;
  return out;
}

/// Row vector v (1×n) times m (n×k).
inline FeatureVec vec_mat(std::span<const double> v, const Matrix& m) {
  if (v.size() != m.rows()) throw ShapeError("vec_mat: length " + std::to_string(v.size()) + " vs " + shape_str(m));
  FeatureVec out(m.cols(), 0.0);
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const double vk = v[k];
    const double* mr = m.row(k).data();
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += vk * mr[j];
  }
  return out;
}

/// m (n×k) times column vector v (k).
inline FeatureVec mat_vec(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw ShapeError("mat_vec: length " + std::to_string(v.size()) + " vs " + shape_str(m));
  FeatureVec out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), v);
  return out;
}

/// Accumulates uᵀv into m.
inline void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v) {
  if (m.rows() != u.size() || m.cols() != v.size()) throw ShapeError("add_outer");
  for (std::size_t i = 0; i < u.size(); ++i) {
    double* mr = m.row(i).data();
    for (std::size_t j = 0; j < v.size(); ++j) mr[j] += u[i] * v[j];
  }
}

// ---------------------------------------------------------------------------
// counter-based random numbers

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Random stream addressed by (seed, stream, counter); any draw can be
/// reproduced without replaying the ones before it.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t bits_at(std::uint64_t counter) const noexcept { return mix64(key_ ^ mix64(counter)); }

  /// Uniform in (0, 1).
  double uniform_at(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box–Muller on the counter pair (2i, 2i+1).
  double gaussian_at(std::uint64_t i) const noexcept {
    const double u1 = uniform_at(2 * i);
    const double u2 = uniform_at(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t next_bits() noexcept { return bits_at(counter_++); }
  double uniform() noexcept { return uniform_at(counter_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double gaussian() noexcept { return gaussian_at(counter_++); }
  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_bits() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, CounterRng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = stddev * rng.gaussian();
  return m;
}

// ---------------------------------------------------------------------------
// tape

/// Operation kinds recorded by a forward pass of the trainable subgraph.
enum class OpId : std::uint8_t {
  two_token_attention,  // cached: layer input X, attention A, values V
  select_row,           // cached: none; scalar holds the row index
  blend,                // cached: none; scalar holds lambda
};

struct TapeRecord {
  OpId op;
  std::vector<Matrix> cached;
  double scalar = 0.0;
  bool operator==(const TapeRecord&) const = default;
};

/// Ordered forward records; backward walks them in reverse.
class GradTape {
 public:
  explicit GradTape(std::uint64_t params_version = 0) : version_(params_version) {}

  void push(TapeRecord rec) { records_.push_back(std::move(rec)); }
  const std::vector<TapeRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::uint64_t params_version() const noexcept { return version_; }

  bool operator==(const GradTape&) const = default;

 private:
  std::uint64_t version_;
  std::vector<TapeRecord> records_;
};

}  // namespace sllm
