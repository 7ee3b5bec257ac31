#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hornn {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(double value);
  void resize(std::size_t dim) { data_.assign(dim, 0.0); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

// Dense row-major matrix. A default-constructed matrix is 0x0 and marks an
// unused parameter slot.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  std::string shape() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Kernels. All sums run left to right over the column index so results are
// bit-reproducible.

// out += M v
void gemv_acc(const Matrix& m, std::span<const double> v, std::span<double> out);
// out += M^T v
void gemv_t_acc(const Matrix& m, std::span<const double> v, std::span<double> out);
// M += a b^T
void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b);
// y += alpha x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

Vector gemv(const Matrix& m, const Vector& v);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
// Largest singular value.
double spectral_norm(const Matrix& m);
bool all_finite(std::span<const double> v);

enum class ActivationKind { Sigmoid, Relu, Tanh, PSigmoid };

std::string to_string(ActivationKind kind);
ActivationKind parse_activation(const std::string& name);

// f(a) with an optional per-unit scale; the scale is only read for PSigmoid.
struct Activation {
  ActivationKind kind = ActivationKind::Sigmoid;
  std::vector<double> scale;
};

double sigmoid(double a);
// sigma'(a) evaluated without cancellation for large |a|.
double sigmoid_grad(double a);

void activate_into(ActivationKind kind, std::span<const double> scale,
                   std::span<const double> a, std::span<double> out);
void activate_grad_into(ActivationKind kind, std::span<const double> scale,
                        std::span<const double> a, std::span<double> out);

Vector activate(const Activation& f, const Vector& a);
Vector activate_grad(const Activation& f, const Vector& a);

// Deterministic generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are implemented
// here because the standard library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Box-Muller standard normal.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  void fill_uniform(std::span<double> out, double lo, double hi);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix seeded_uniform(std::size_t rows, std::size_t cols, double lo, double hi,
                      std::uint64_t seed);

}  // namespace hornn
