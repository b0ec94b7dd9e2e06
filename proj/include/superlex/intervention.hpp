#pragma once

// Causal interventions on token embeddings and the resulting change in the
// label head's probabilities.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "superlex/encoder.hpp"
#include "superlex/laat_head.hpp"
#include "superlex/numerics.hpp"
#include "superlex/synthetic_world.hpp"

namespace superlex {

// x - f_i h_i
Vector ablate_feature(std::span<const double> x, double activation, std::span<const double> feature_embedding);
// f_i h_i, plus `offset` when given (the decoder-bias variant).
Vector keep_only_feature(double activation, std::span<const double> feature_embedding,
                         std::optional<std::span<const double>> offset = std::nullopt);
// x minus f_i h_i for every active feature of x.
Vector ablate_active_features(const FeatureEncoder& encoder, std::span<const double> x);

struct Intervention {
  enum class Kind { Identity, Replace, Mask };
  Kind kind = Kind::Identity;
  Vector embedding;  // used by Replace

  static Intervention identity() { return {}; }
  static Intervention replace(Vector x) { return {Kind::Replace, std::move(x)}; }
};

// Zero embedding + pad mask at position t. Throws DomainError if t is a pad.
Intervention ablate_token(const Note& note, std::size_t t);

// Copy of `note` with the intervention applied at position t.
Note apply_intervention(const Note& note, std::size_t t, const Intervention& iv);

struct AblationDelta {
  std::int64_t id = -1;  // feature id, or token index for token ablation
  Vector delta;          // p(before) - p(after), length C
  // (code, drop) by descending drop, ties by ascending code.
  std::vector<std::pair<std::uint32_t, double>> top_affected;
};

AblationDelta make_delta(std::int64_t id, const Vector& before, const Vector& after);

AblationDelta probability_delta(const LabelHead& head, const Note& note, std::size_t t, const Intervention& iv,
                                std::int64_t id = -1);

// One-feature-at-a-time deltas for every active feature of token t.
std::vector<AblationDelta> feature_deltas(const ScoredNote& scored, const Note& note, std::size_t t,
                                          const FeatureEncoder& encoder);

inline constexpr std::size_t kCanvasLength = 16;
inline constexpr double kDefaultClampValue = 50.0;
inline constexpr double kFlipThreshold = 0.5;

std::vector<Vector> pad_canvas(std::size_t d, std::size_t length = kCanvasLength);

// Encode each canvas embedding, overwrite f_i with `value`, decode.
std::vector<Vector> clamp_feature(const FeatureEncoder& encoder, std::span<const Vector> canvas, std::size_t feature,
                                  double value = kDefaultClampValue);
// Decode(encode(x)) for each canvas embedding, the unclamped reference.
std::vector<Vector> reconstruct_canvas(const FeatureEncoder& encoder, std::span<const Vector> canvas);

struct DeltaRow {
  std::size_t note_id = 0;
  std::size_t token_idx = 0;
  std::string encoder;
  std::int64_t feature_id = -1;
  std::uint32_t code_id = 0;
  double delta = 0.0;
};

// CSV: note_id,token_idx,encoder,feature_id,code_id,delta (9 significant digits).
std::string delta_csv(const std::vector<DeltaRow>& rows);

}  // namespace superlex
