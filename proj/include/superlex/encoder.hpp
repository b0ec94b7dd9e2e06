#pragma once

#include <memory>
#include <string>

#include "superlex/numerics.hpp"

namespace superlex {

// Common surface of every feature decomposition (sparse autoencoders and the
// linear baselines): activations f(x), per-feature embeddings h_i, and the
// reconstruction offset + sum_i f_i h_i.
class FeatureEncoder {
 public:
  virtual ~FeatureEncoder() = default;

  virtual std::size_t n_features() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Vector encode_dense(std::span<const double> x) const = 0;
  virtual Vector feature_embedding(std::size_t i) const = 0;
  virtual Vector offset() const = 0;
  // Signed encoders (PCA, ICA) count |f_i| > 1e-12 as active.
  virtual bool is_active(double activation) const { return activation > 0.0; }
  virtual std::string label() const = 0;
  virtual std::string to_json() const = 0;

  Vector decode_dense(std::span<const double> f) const;
  std::string model_hash() const;
};

std::unique_ptr<FeatureEncoder> load_encoder(const std::string& json_text);

}  // namespace superlex
