#include "tgnn/tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "tgnn/error.hpp"

namespace tgnn {

namespace {

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size());
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= shape[i];
  }
  return strides;
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidArgument("tensor order must be at least 1");
  for (auto n : shape)
    if (n == 0) throw InvalidArgument("tensor dimensions must be positive");
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace

std::size_t checked_volume(const Shape& shape, std::size_t limit) {
  std::size_t v = 1;
  for (auto n : shape) {
    if (n != 0 && v > limit / n)
      throw CapacityError("tensor of shape " + shape_str(shape) + " exceeds materialization limit of " +
                          std::to_string(limit) + " entries");
    v *= n;
  }
  if (v > limit)
    throw CapacityError("tensor of shape " + shape_str(shape) + " exceeds materialization limit of " +
                        std::to_string(limit) + " entries");
  return v;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  strides_ = row_major_strides(shape_);
  data_.assign(checked_volume(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  strides_ = row_major_strides(shape_);
  if (data_.size() != checked_volume(shape_))
    throw InvalidArgument("data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
}

DenseTensor DenseTensor::constant(Shape shape, double value) {
  DenseTensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != order()) throw InvalidArgument("index arity does not match tensor order");
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw InvalidArgument("index out of range in mode " + std::to_string(i));
    off += index[i] * strides_[i];
  }
  return off;
}

void DenseTensor::unravel(std::size_t flat, std::span<std::size_t> index) const {
  for (std::size_t i = 0; i < order(); ++i) {
    index[i] = flat / strides_[i];
    flat %= strides_[i];
  }
}

double& DenseTensor::operator()(std::span<const std::size_t> index) { return data_[offset(index)]; }
double DenseTensor::operator()(std::span<const std::size_t> index) const { return data_[offset(index)]; }

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
}
double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
}

double DenseTensor::max_abs() const noexcept {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

double DenseTensor::frobenius_norm() const noexcept {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return std::sqrt(s);
}

namespace {

void check_mode(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.order())
    throw InvalidArgument("mode " + std::to_string(mode) + " out of range for tensor of order " +
                          std::to_string(t.order()));
}

// Column of entry `index` in the mode-`mode` unfolding.
std::size_t unfolding_column(const Shape& shape, std::span<const std::size_t> index, std::size_t mode) {
  std::size_t col = 0, stride = 1;
  for (std::size_t j = 0; j < shape.size(); ++j) {
    if (j == mode) continue;
    col += index[j] * stride;
    stride *= shape[j];
  }
  return col;
}

}  // namespace

Matrix matricize(const DenseTensor& t, std::size_t mode) {
  check_mode(t, mode);
  const auto rows = static_cast<Eigen::Index>(t.dim(mode));
  const auto cols = static_cast<Eigen::Index>(t.size() / t.dim(mode));
  Matrix m(rows, cols);
  std::vector<std::size_t> idx(t.order());
  auto data = t.data();
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    t.unravel(flat, idx);
    m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(unfolding_column(t.shape(), idx, mode))) =
        data[flat];
  }
  return m;
}

DenseTensor dematricize(const Matrix& m, const Shape& shape, std::size_t mode) {
  DenseTensor t(shape);
  check_mode(t, mode);
  if (static_cast<std::size_t>(m.rows()) != t.dim(mode) ||
      static_cast<std::size_t>(m.cols()) != t.size() / t.dim(mode))
    throw InvalidArgument("matrix dimensions do not match the unfolding of shape " + shape_str(shape));
  std::vector<std::size_t> idx(t.order());
  auto data = t.data();
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    t.unravel(flat, idx);
    data[flat] =
        m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(unfolding_column(shape, idx, mode)));
  }
  return t;
}

DenseTensor mode_vec_product(const DenseTensor& t, std::size_t mode, const Vector& v) {
  check_mode(t, mode);
  if (t.order() < 2) throw InvalidArgument("mode_vec_product needs a tensor of order >= 2");
  if (static_cast<std::size_t>(v.size()) != t.dim(mode))
    throw InvalidArgument("vector length " + std::to_string(v.size()) + " does not match mode " +
                          std::to_string(mode) + " of size " + std::to_string(t.dim(mode)));

  Shape out_shape;
  for (std::size_t j = 0; j < t.order(); ++j)
    if (j != mode) out_shape.push_back(t.dim(j));
  DenseTensor out(out_shape);

  // View the row-major buffer as [outer, n_mode, inner].
  const std::size_t n = t.dim(mode);
  const std::size_t inner = t.strides()[mode];
  const std::size_t outer = t.size() / (n * inner);
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = v[static_cast<Eigen::Index>(i)];
      const double* s = src.data() + (a * n + i) * inner;
      double* d = dst.data() + a * inner;
      for (std::size_t b = 0; b < inner; ++b) d[b] += s[b] * vi;
    }
  return out;
}

namespace {

void check_vectors(const DenseTensor& t, std::span<const Vector> vs) {
  for (std::size_t i = 0; i < vs.size(); ++i)
    if (static_cast<std::size_t>(vs[i].size()) != t.dim(i))
      throw InvalidArgument("vector " + std::to_string(i) + " has length " + std::to_string(vs[i].size()) +
                            ", mode size is " + std::to_string(t.dim(i)));
}

}  // namespace

Vector multi_mode_product(const DenseTensor& t, std::span<const Vector> vs) {
  const std::size_t k = t.order();
  if (vs.size() + 1 != k && vs.size() != k)
    throw InvalidArgument("multi_mode_product takes order-1 or order vectors, got " + std::to_string(vs.size()) +
                          " for order " + std::to_string(k));
  check_vectors(t, vs);

  // Contract the leading mode repeatedly; the remaining modes shift down.
  DenseTensor cur = t;
  std::size_t contracted = 0;
  for (; contracted < vs.size() && cur.order() > 1; ++contracted) cur = mode_vec_product(cur, 0, vs[contracted]);

  auto data = cur.data();
  Vector out = Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
  if (contracted < vs.size()) {
    // Full contraction: the last vector meets the remaining order-1 fiber.
    return Vector::Constant(1, out.dot(vs[contracted]));
  }
  return out;
}

Vector multi_mode_product_kron(const DenseTensor& t, std::span<const Vector> vs) {
  const std::size_t k = t.order();
  if (k < 2 || vs.size() + 1 != k)
    throw InvalidArgument("multi_mode_product_kron needs exactly order-1 vectors");
  check_vectors(t, vs);
  std::vector<Vector> reversed(vs.rbegin(), vs.rend());
  return matricize(t, k - 1) * kron_chain(reversed);
}

Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

Vector kron_chain(std::span<const Vector> vs) {
  if (vs.empty()) return Vector::Ones(1);
  Vector out = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) out = kron(out, vs[i]);
  return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw InvalidArgument("hadamard length mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  return a.cwiseProduct(b);
}

DenseTensor outer(std::span<const Vector> vs) {
  if (vs.empty()) throw InvalidArgument("outer product of an empty list");
  Shape shape;
  for (const auto& v : vs) shape.push_back(static_cast<std::size_t>(v.size()));
  DenseTensor t(shape);
  std::vector<std::size_t> idx(shape.size());
  auto data = t.data();
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    t.unravel(flat, idx);
    double p = 1.0;
    for (std::size_t j = 0; j < vs.size(); ++j) p *= vs[j][static_cast<Eigen::Index>(idx[j])];
    data[flat] = p;
  }
  return t;
}

}  // namespace tgnn
