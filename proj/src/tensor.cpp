#include "mpslab/tensor.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mpslab {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw InvalidArgument("tensor extents must be >= 1");
  }
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

}  // namespace

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

DenseTensor DenseTensor::scalar(double value) { return DenseTensor({}, {value}); }

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMajorMatrix>(t.data_.data(), m.rows(), m.cols()) = m;
  return t;
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index order mismatch");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= shape_[k]) throw DimensionError("index out of range");
    flat = flat * shape_[k] + index[k];
  }
  return flat;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return DenseTensor(std::move(shape), data_);
}

DenseTensor DenseTensor::permuted(std::span<const std::size_t> axes) const {
  const std::size_t n = shape_.size();
  if (axes.size() != n) throw InvalidArgument("permutation has wrong length");
  std::vector<bool> seen(n, false);
  for (auto a : axes) {
    if (a >= n || seen[a]) throw InvalidArgument("invalid permutation");
    seen[a] = true;
  }
  Shape out_shape(n);
  for (std::size_t k = 0; k < n; ++k) out_shape[k] = shape_[axes[k]];
  DenseTensor out(out_shape);
  if (n == 0) {
    out.data_[0] = data_[0];
    return out;
  }

  std::vector<std::size_t> in_strides(n, 1);
  for (std::size_t k = n - 1; k > 0; --k) in_strides[k - 1] = in_strides[k] * shape_[k];
  std::vector<std::size_t> stride_of_out(n);
  for (std::size_t k = 0; k < n; ++k) stride_of_out[k] = in_strides[axes[k]];

  std::vector<std::size_t> idx(n, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < out.data_.size(); ++flat) {
    out.data_[flat] = data_[src];
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < out_shape[k]) {
        src += stride_of_out[k];
        break;
      }
      src -= stride_of_out[k] * (out_shape[k] - 1);
      idx[k] = 0;
    }
  }
  return out;
}

Matrix DenseTensor::as_matrix(std::size_t split) const {
  if (split > shape_.size()) throw InvalidArgument("matrix split beyond tensor order");
  std::size_t rows = 1;
  for (std::size_t k = 0; k < split; ++k) rows *= shape_[k];
  const std::size_t cols = data_.size() / rows;
  return Eigen::Map<const RowMajorMatrix>(data_.data(), rows, cols);
}

double DenseTensor::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

DenseTensor& DenseTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
  if (other.shape_ != shape_) throw DimensionError("tensor shapes differ in addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseTensor operator+(DenseTensor a, const DenseTensor& b) {
  a += b;
  return a;
}

DenseTensor operator-(DenseTensor a, const DenseTensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("tensor shapes differ in subtraction");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

DenseTensor operator*(double s, DenseTensor a) {
  a *= s;
  return a;
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<bool> used_a(a.order(), false), used_b(b.order(), false);
  for (auto [ia, ib] : pairs) {
    if (ia >= a.order() || ib >= b.order()) throw InvalidArgument("contraction axis out of range");
    if (used_a[ia] || used_b[ib]) throw InvalidArgument("contraction axis repeated");
    used_a[ia] = used_b[ib] = true;
    if (a.extent(ia) != b.extent(ib)) {
      throw DimensionError("contracted extents differ: " + std::to_string(a.extent(ia)) +
                           " vs " + std::to_string(b.extent(ib)));
    }
  }

  std::vector<std::size_t> perm_a, perm_b;
  Shape out_shape;
  std::size_t free_a = 1, free_b = 1, inner = 1;
  for (std::size_t k = 0; k < a.order(); ++k) {
    if (!used_a[k]) {
      perm_a.push_back(k);
      out_shape.push_back(a.extent(k));
      free_a *= a.extent(k);
    }
  }
  for (auto [ia, ib] : pairs) {
    perm_a.push_back(ia);
    perm_b.push_back(ib);
    inner *= a.extent(ia);
  }
  for (std::size_t k = 0; k < b.order(); ++k) {
    if (!used_b[k]) {
      perm_b.push_back(k);
      out_shape.push_back(b.extent(k));
      free_b *= b.extent(k);
    }
  }

  const DenseTensor pa = a.permuted(perm_a);
  const DenseTensor pb = b.permuted(perm_b);
  Eigen::Map<const RowMajorMatrix> ma(pa.data().data(), free_a, inner);
  Eigen::Map<const RowMajorMatrix> mb(pb.data().data(), inner, free_b);
  DenseTensor out(out_shape);
  Eigen::Map<RowMajorMatrix>(out.data().data(), free_a, free_b).noalias() = ma * mb;
  return out;
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::initializer_list<std::pair<std::size_t, std::size_t>> pairs) {
  return contract(a, b, std::span<const std::pair<std::size_t, std::size_t>>(pairs.begin(), pairs.size()));
}

Matrix SvdResult::reconstruct() const {
  return left * singular_values.asDiagonal() * right;
}

SvdResult svd_truncate(const Matrix& m, std::size_t max_rank, double cutoff) {
  if (max_rank == 0) throw InvalidArgument("svd_truncate: max_rank must be >= 1");
  if (cutoff < 0.0) throw InvalidArgument("svd_truncate: cutoff must be >= 0");
  if (!m.allFinite()) throw NumericError("svd_truncate: matrix has non-finite entries");

  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const auto full = static_cast<std::size_t>(s.size());

  const double total = s.squaredNorm();
  const double zero_tol =
      (full > 0 ? s(0) : 0.0) * static_cast<double>(std::max(m.rows(), m.cols())) * DBL_EPSILON;
  std::size_t keep = 0;
  while (keep < full && keep < max_rank && s(keep) > zero_tol &&
         s(keep) * s(keep) > cutoff * total) {
    ++keep;
  }
  keep = std::max<std::size_t>(keep, 1);

  SvdResult out;
  const auto k = static_cast<Eigen::Index>(keep);
  out.left = svd.matrixU().leftCols(k);
  out.singular_values = s.head(k);
  out.right = svd.matrixV().leftCols(k).transpose();
  out.discarded_weight = s.tail(static_cast<Eigen::Index>(full) - k).squaredNorm();
  return out;
}

Vector solve_linear(const Matrix& a, const Vector& b) {
  if (a.rows() != a.cols()) throw DimensionError("solve_linear: matrix is not square");
  if (a.rows() != b.size()) throw DimensionError("solve_linear: right-hand side size mismatch");
  if (!a.allFinite() || !b.allFinite()) throw NumericError("solve_linear: non-finite input");

  Eigen::PartialPivLU<Matrix> lu(a);
  const Matrix& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (packed(i, i) == 0.0) throw SingularMatrixError("solve_linear: exactly singular pivot at row " + std::to_string(i));
  }
  Vector x = lu.solve(b);
  if (!x.allFinite()) throw SingularMatrixError("solve_linear: solution is not finite");
  return x;
}

}  // namespace mpslab
