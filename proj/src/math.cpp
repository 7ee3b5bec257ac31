#include "hornn/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/SVD>

#include "hornn/errors.hpp"

namespace hornn {

void Vector::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

void gemv_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  require(m.cols() == v.size() && m.rows() == out.size(),
          "gemv: matrix " + m.shape() + " with vector of dim " + std::to_string(v.size()) +
              " into dim " + std::to_string(out.size()));
  const double* row = m.span().data();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r, row += cols) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * v[c];
    out[r] += s;
  }
}

void gemv_t_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  require(m.rows() == v.size() && m.cols() == out.size(),
          "gemv_t: matrix " + m.shape() + " transposed with vector of dim " +
              std::to_string(v.size()) + " into dim " + std::to_string(out.size()));
  const double* row = m.span().data();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r, row += cols) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * vr;
  }
}

void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b) {
  require(m.rows() == a.size() && m.cols() == b.size(),
          "outer: matrix " + m.shape() + " with vectors of dim " + std::to_string(a.size()) +
              " and " + std::to_string(b.size()));
  double* row = m.span().data();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r, row += cols) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ar * b[c];
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: dims " + std::to_string(x.size()) + " and " +
                                    std::to_string(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector gemv(const Matrix& m, const Vector& v) {
  if (m.cols() != v.dim()) {
    throw DimensionError("gemv: matrix " + m.shape() + " times vector of dim " +
                         std::to_string(v.dim()));
  }
  Vector out(m.rows());
  gemv_acc(m, v.span(), out.span());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: dims " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double spectral_norm(const Matrix& m) {
  if (m.empty()) return 0.0;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> map(
      m.span().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(map);
  return svd.singularValues()(0);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::PSigmoid: return "psigmoid";
  }
  return "unknown";
}

ActivationKind parse_activation(const std::string& name) {
  if (name == "sigmoid") return ActivationKind::Sigmoid;
  if (name == "relu") return ActivationKind::Relu;
  if (name == "tanh") return ActivationKind::Tanh;
  if (name == "psigmoid" || name == "p-sigmoid") return ActivationKind::PSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double sigmoid_grad(double a) {
  const double e = std::exp(-std::abs(a));
  const double d = 1.0 + e;
  return e / (d * d);
}

void activate_into(ActivationKind kind, std::span<const double> scale,
                   std::span<const double> a, std::span<double> out) {
  require(a.size() == out.size(), "activate: dims " + std::to_string(a.size()) + " and " +
                                      std::to_string(out.size()));
  switch (kind) {
    case ActivationKind::Sigmoid:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid(a[i]);
      break;
    case ActivationKind::Relu:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    case ActivationKind::Tanh:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
      break;
    case ActivationKind::PSigmoid:
      require(scale.size() == a.size(), "p-sigmoid scale dim " + std::to_string(scale.size()) +
                                            " does not match activation dim " +
                                            std::to_string(a.size()));
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = scale[i] * sigmoid(a[i]);
      break;
  }
}

void activate_grad_into(ActivationKind kind, std::span<const double> scale,
                        std::span<const double> a, std::span<double> out) {
  require(a.size() == out.size(), "activate_grad: dims " + std::to_string(a.size()) + " and " +
                                      std::to_string(out.size()));
  switch (kind) {
    case ActivationKind::Sigmoid:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid_grad(a[i]);
      break;
    case ActivationKind::Relu:
      // Subgradient at exactly 0 is 0.
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? 1.0 : 0.0;
      break;
    case ActivationKind::Tanh:
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = std::tanh(a[i]);
        out[i] = 1.0 - t * t;
      }
      break;
    case ActivationKind::PSigmoid:
      require(scale.size() == a.size(), "p-sigmoid scale dim " + std::to_string(scale.size()) +
                                            " does not match activation dim " +
                                            std::to_string(a.size()));
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = scale[i] * sigmoid_grad(a[i]);
      break;
  }
}

Vector activate(const Activation& f, const Vector& a) {
  Vector out(a.dim());
  activate_into(f.kind, f.scale, a.span(), out.span());
  return out;
}

Vector activate_grad(const Activation& f, const Vector& a) {
  Vector out(a.dim());
  activate_grad_into(f.kind, f.scale, a.span(), out.span());
  return out;
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  const double x = lo + (hi - lo) * uniform01();
  // Rounding can land exactly on hi when the interval is tiny.
  return x < hi ? x : std::nextafter(hi, lo);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("Rng::below(0)");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

void Rng::fill_uniform(std::span<double> out, double lo, double hi) {
  for (double& x : out) x = uniform(lo, hi);
}

Matrix seeded_uniform(std::size_t rows, std::size_t cols, double lo, double hi,
                      std::uint64_t seed) {
  if (!(lo < hi)) {
    throw ConfigError("seeded_uniform: lo (" + std::to_string(lo) + ") must be below hi (" +
                      std::to_string(hi) + ")");
  }
  Matrix m(rows, cols);
  Rng rng(seed);
  rng.fill_uniform(m.span(), lo, hi);
  return m;
}

}  // namespace hornn
