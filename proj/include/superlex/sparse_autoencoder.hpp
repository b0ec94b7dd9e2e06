#pragma once

// Sparse autoencoders over token embeddings.
//
//   x_bar = x - b_d
//   f     = act(W_e x_bar + b_e)      act = ReLU (L1) or clamp to [0,1] (SPINE)
//   x_hat = W_d f + b_d = b_d + sum_i f_i h_i
//
// L1 objective:    mean |x - x_hat|^2 + lambda_l1 * mean |f|_1
// SPINE objective: mean |x - x_hat|^2 + lambda1 * sum_i max(0, f_bar_i - rho)
//                                      + lambda2 * mean sum_i f_i (1 - f_i)
// where f_bar is the batch mean activation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "superlex/encoder.hpp"
#include "superlex/numerics.hpp"

namespace superlex {

enum class SaeVariant { L1, Spine };

std::string to_string(SaeVariant v);
SaeVariant sae_variant_from_string(const std::string& s);

struct SparseCode {
  std::size_t m = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index, value > 0

  Vector densify() const;
  std::size_t nnz() const { return entries.size(); }
  std::optional<double> value(std::uint32_t i) const;
};

struct SaeTrainConfig {
  std::size_t m = 256;
  double lambda_l1 = 0.1;
  double rho = 0.05;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::size_t batch_size = 1024;
  std::size_t steps = 3000;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
  // Full-size setup for 768-d embeddings: m = 6144, batch 8192, lambda 2e-5.
  static SaeTrainConfig large_scale();
};

class DictionaryModel final : public FeatureEncoder {
 public:
  DictionaryModel() = default;
  DictionaryModel(SaeVariant variant, Matrix encoder, Vector encoder_bias, Matrix decoder_rows, Vector decoder_bias);

  static DictionaryModel initialize(SaeVariant variant, std::size_t d, std::size_t m, std::uint64_t seed);

  SaeVariant variant() const { return variant_; }
  std::size_t m() const { return encoder_.rows(); }
  std::size_t d() const { return encoder_.cols(); }

  const Matrix& encoder_weights() const { return encoder_; }  // W_e, m x d
  const Vector& encoder_bias() const { return b_e_; }
  // Row i is the dictionary embedding h_i (column i of W_d).
  const Matrix& decoder_rows() const { return decoder_rows_; }
  Matrix decoder_matrix() const { return decoder_rows_.transposed(); }  // W_d, d x m
  const Vector& decoder_bias() const { return b_d_; }

  Matrix& mutable_encoder() { return encoder_; }
  Vector& mutable_encoder_bias() { return b_e_; }
  Matrix& mutable_decoder_rows() { return decoder_rows_; }
  Vector& mutable_decoder_bias() { return b_d_; }

  // Pre-activation W_e (x - b_d) + b_e.
  Vector preactivation(std::span<const double> x) const;
  double activate(double pre) const;

  SparseCode encode(std::span<const double> x) const;
  Vector decode(const SparseCode& code) const;

  std::size_t n_features() const override { return m(); }
  std::size_t dim() const override { return d(); }
  Vector encode_dense(std::span<const double> x) const override;
  Vector feature_embedding(std::size_t i) const override;
  Vector offset() const override { return b_d_; }
  std::string label() const override { return variant_ == SaeVariant::L1 ? "sae-l1" : "sae-spine"; }
  std::string to_json() const override;

  // Stored in the model envelope; informational only.
  SaeTrainConfig hyperparameters;

  bool operator==(const DictionaryModel& o) const {
    return variant_ == o.variant_ && encoder_ == o.encoder_ && b_e_ == o.b_e_ && decoder_rows_ == o.decoder_rows_ &&
           b_d_ == o.b_d_;
  }

 private:
  SaeVariant variant_ = SaeVariant::L1;
  Matrix encoder_;
  Vector b_e_;
  Matrix decoder_rows_;
  Vector b_d_;
};

DictionaryModel sae_from_json(const std::string& text);

struct L1Loss {
  double total = 0.0;
  double mse = 0.0;
  double sparsity = 0.0;
};

struct SpineLoss {
  double total = 0.0;
  double mse = 0.0;
  double asl = 0.0;
  double psl = 0.0;
};

// `batch` rows are embeddings.
L1Loss loss_l1(const DictionaryModel& model, const Matrix& batch, double lambda_l1);
SpineLoss loss_spine(const DictionaryModel& model, const Matrix& batch, double rho, double lambda1, double lambda2);
// Dispatches on the model variant and returns the total.
double sae_loss(const DictionaryModel& model, const Matrix& batch, const SaeTrainConfig& config);

struct SaeGradients {
  Matrix encoder;       // dL/dW_e
  Vector encoder_bias;  // dL/db_e
  Matrix decoder_rows;  // dL/dh_i, row i
  Vector decoder_bias;  // dL/db_d
  double loss = 0.0;
};

// Analytic gradients of the variant's objective; subgradient 0 at kinks.
SaeGradients sae_gradients(const DictionaryModel& model, const Matrix& batch, const SaeTrainConfig& config);

struct SaeTrainReport {
  std::vector<double> loss_curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t dead_features = 0;  // never active over the final pass
  double mean_l0 = 0.0;           // over the final pass
};

struct SaeTrainResult {
  DictionaryModel model;
  SaeTrainReport report;
};

// `embeddings` holds non-pad token embeddings, one per row.
SaeTrainResult train_sae(const Matrix& embeddings, const SaeTrainConfig& config, SaeVariant variant);

}  // namespace superlex
