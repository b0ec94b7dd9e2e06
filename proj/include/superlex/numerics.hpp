#pragma once

// Dense linear algebra, the AdamW optimizer, order statistics and a
// portable RNG shared by every other module. All arithmetic is double.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "superlex/errors.hpp"

namespace superlex {

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector col(std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// W x + b. Throws ShapeError on mismatched dimensions.
Vector affine(const Matrix& W, std::span<const double> x, std::span<const double> b);
Vector matvec(const Matrix& W, std::span<const double> x);
// W^T x
Vector matvec_t(const Matrix& W, std::span<const double> x);

// a.b / (|a||b|). Throws DomainError when either argument is the zero vector.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Nearest-rank percentile: sort ascending, take index ceil(p/100 * n) - 1
// clamped to [0, n-1]. Always returns a member of `values`.
double percentile(std::span<const double> values, double p);

bool all_finite(std::span<const double> v);

inline double logistic(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  AdamWState() = default;
  AdamWState(AdamWConfig cfg, std::size_t n_params)
      : config(cfg), first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}
};

// One AdamW update with decoupled weight decay, bias-corrected moments.
// Throws NumericError naming the first non-finite gradient index.
void adamw_step(AdamWState& state, std::span<double> params, std::span<const double> grads);

// splitmix64-seeded xoshiro256** with hand-rolled uniform/normal draws so
// sampled streams do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::size_t below(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream, e.g. one per note.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Worker cap used by parallel_shards. 0 means hardware concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(shard) for shard in [0, n_shards). Shard boundaries are decided by
// the caller, so results reduced in shard order are identical for any thread
// count.
void parallel_shards(std::size_t n_shards, const std::function<void(std::size_t)>& fn);

}  // namespace superlex
