#pragma once

// Unsupervised comparison encoders behind the FeatureEncoder surface:
// PCA, deflation FastICA, identity-ReLU and random-ReLU.

#include <cstdint>
#include <string>

#include "superlex/encoder.hpp"
#include "superlex/numerics.hpp"

namespace superlex {

enum class LinearKind { Pca, Ica, Identity, Random };

std::string to_string(LinearKind k);
LinearKind linear_kind_from_string(const std::string& s);

struct LinearFitReport {
  bool converged = true;
  std::vector<std::size_t> iterations;        // FastICA, per component
  std::size_t near_zero_eigenvalues = 0;       // PCA / whitening
};

class LinearFeatureEncoder final : public FeatureEncoder {
 public:
  LinearFeatureEncoder() = default;
  // weights: m' x d applied to (x - mean); embeddings: m' x d, row i = h_i.
  LinearFeatureEncoder(LinearKind kind, Matrix weights, Matrix embeddings, Vector mean, Vector eigenvalues);

  LinearKind kind() const { return kind_; }
  const Matrix& weights() const { return weights_; }
  const Matrix& embeddings() const { return embeddings_; }
  const Vector& mean() const { return mean_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  std::size_t n_features() const override { return weights_.rows(); }
  std::size_t dim() const override { return weights_.cols(); }
  Vector encode_dense(std::span<const double> x) const override;
  Vector feature_embedding(std::size_t i) const override;
  Vector offset() const override { return mean_; }
  bool is_active(double activation) const override;
  std::string label() const override;
  std::string to_json() const override;

  LinearFitReport report;

 private:
  LinearKind kind_ = LinearKind::Identity;
  Matrix weights_;
  Matrix embeddings_;
  Vector mean_;
  Vector eigenvalues_;
};

LinearFeatureEncoder linear_from_json(const std::string& text);

// Rows of `sample` are embeddings. Requires sample.rows() >= d + 1.
LinearFeatureEncoder fit_pca(const Matrix& sample);

struct FastIcaConfig {
  std::size_t n_components = 0;  // 0 = d
  double tolerance = 1e-5;
  std::size_t max_iterations = 500;
  std::size_t max_samples = 200000;
  std::uint64_t seed = 3;
};

LinearFeatureEncoder fit_fastica(const Matrix& sample, const FastIcaConfig& config);

LinearFeatureEncoder make_identity(std::size_t d);
// W ~ N(0, 1); f = ReLU(W x); h_i = W_i / |W_i|.
LinearFeatureEncoder make_random(std::size_t d, std::size_t m, std::uint64_t seed);

// Symmetric eigendecomposition, eigenvalues descending; eigenvectors are the
// rows of the returned matrix.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};
SymmetricEigen symmetric_eigen(const Matrix& a);

// Mean-centred sample covariance (divides by n - 1).
Matrix sample_covariance(const Matrix& sample, Vector& mean);

}  // namespace superlex
