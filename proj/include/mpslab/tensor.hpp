#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mpslab/errors.hpp"

namespace mpslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// N-way real array stored row-major (last axis fastest).
///
/// A zero-order tensor (empty shape) holds one scalar.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor scalar(double value);
  static DenseTensor from_matrix(const Matrix& m);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  std::size_t flat_index(std::span<const std::size_t> index) const;

  DenseTensor reshaped(Shape shape) const;
  DenseTensor permuted(std::span<const std::size_t> axes) const;

  /// View as (prod of first `split` extents) x (prod of the rest).
  Matrix as_matrix(std::size_t split) const;

  double frobenius_norm() const;
  DenseTensor& operator*=(double s);
  DenseTensor& operator+=(const DenseTensor& other);

 private:
  Shape shape_;
  std::vector<double> data_;
};

DenseTensor operator+(DenseTensor a, const DenseTensor& b);
DenseTensor operator-(DenseTensor a, const DenseTensor& b);
DenseTensor operator*(double s, DenseTensor a);

/// Sums over each (axis of a, axis of b) pair. Result axes are the free axes of
/// `a` followed by the free axes of `b`, each in original order.
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::span<const std::pair<std::size_t, std::size_t>> pairs);
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::initializer_list<std::pair<std::size_t, std::size_t>> pairs);

struct SvdResult {
  Matrix left;             // m x k, orthonormal columns
  Vector singular_values;  // k, non-increasing
  Matrix right;            // k x n, orthonormal rows
  double discarded_weight = 0.0;

  std::size_t rank() const { return static_cast<std::size_t>(singular_values.size()); }
  Matrix reconstruct() const;
};

/// Thin SVD keeping min(max_rank, #{σ² > cutoff·Σσ²}, numerical rank) triples
/// (at least one). discarded_weight is the sum of squares of the dropped values.
SvdResult svd_truncate(const Matrix& m, std::size_t max_rank, double cutoff = 0.0);

/// LU with partial pivoting. Throws SingularMatrixError on an exactly zero pivot.
Vector solve_linear(const Matrix& a, const Vector& b);

}  // namespace mpslab
