#include "superlex/encoder.hpp"

#include <json.hpp>

#include "superlex/baseline_encoders.hpp"
#include "superlex/codec.hpp"
#include "superlex/sparse_autoencoder.hpp"

namespace superlex {

Vector FeatureEncoder::decode_dense(std::span<const double> f) const {
  if (f.size() != n_features()) throw ShapeError("decode_dense: activation length != feature count");
  Vector x = offset();
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] != 0.0) axpy(f[i], feature_embedding(i), x);
  return x;
}

std::string FeatureEncoder::model_hash() const { return codec::hash_hex(to_json()); }

std::unique_ptr<FeatureEncoder> load_encoder(const std::string& json_text) {
  std::string version;
  try {
    version = nlohmann::json::parse(json_text).value("version", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("encoder file: ") + e.what());
  }
  if (version == "sae-v1") return std::make_unique<DictionaryModel>(sae_from_json(json_text));
  if (version == "lin-v1") return std::make_unique<LinearFeatureEncoder>(linear_from_json(json_text));
  throw FormatError("encoder file: unknown version '" + version + "'");
}

}  // namespace superlex
