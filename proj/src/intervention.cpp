#include "superlex/intervention.hpp"

#include <algorithm>
#include <sstream>

#include "superlex/codec.hpp"

namespace superlex {

Vector ablate_feature(std::span<const double> x, double activation, std::span<const double> feature_embedding) {
  if (x.size() != feature_embedding.size()) throw ShapeError("ablate_feature: length mismatch");
  Vector out(x.begin(), x.end());
  axpy(-activation, feature_embedding, out);
  return out;
}

Vector keep_only_feature(double activation, std::span<const double> feature_embedding,
                         std::optional<std::span<const double>> offset) {
  Vector out(feature_embedding.size(), 0.0);
  axpy(activation, feature_embedding, out);
  if (offset) axpy(1.0, *offset, out);
  return out;
}

Vector ablate_active_features(const FeatureEncoder& encoder, std::span<const double> x) {
  const Vector f = encoder.encode_dense(x);
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < f.size(); ++i)
    if (encoder.is_active(f[i])) axpy(-f[i], encoder.feature_embedding(i), out);
  return out;
}

Intervention ablate_token(const Note& note, std::size_t t) {
  if (t >= note.size()) throw DomainError("ablate_token: index out of range");
  if (note.is_pad[t]) throw DomainError("ablate_token: token " + std::to_string(t) + " is already a pad");
  return {Intervention::Kind::Mask, {}};
}

Note apply_intervention(const Note& note, std::size_t t, const Intervention& iv) {
  if (t >= note.size()) throw DomainError("intervention: index out of range");
  Note out = note;
  switch (iv.kind) {
    case Intervention::Kind::Identity: break;
    case Intervention::Kind::Replace:
      if (iv.embedding.size() != note.embeddings[t].size()) throw ShapeError("intervention: embedding length");
      out.embeddings[t] = iv.embedding;
      break;
    case Intervention::Kind::Mask:
      std::fill(out.embeddings[t].begin(), out.embeddings[t].end(), 0.0);
      out.is_pad[t] = 1;
      break;
  }
  return out;
}

AblationDelta make_delta(std::int64_t id, const Vector& before, const Vector& after) {
  AblationDelta d{id, Vector(before.size()), {}};
  for (std::size_t c = 0; c < before.size(); ++c) {
    d.delta[c] = before[c] - after[c];
    d.top_affected.emplace_back(static_cast<std::uint32_t>(c), d.delta[c]);
  }
  std::sort(d.top_affected.begin(), d.top_affected.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return d;
}

AblationDelta probability_delta(const LabelHead& head, const Note& note, std::size_t t, const Intervention& iv,
                                std::int64_t id) {
  if (t >= note.size() || note.is_pad[t]) throw DomainError("probability_delta: token index out of range or pad");
  const Vector before = predict_probs(head, note);
  if (iv.kind == Intervention::Kind::Identity) return make_delta(id, before, before);
  const Note after_note = apply_intervention(note, t, iv);
  return make_delta(id, before, predict_probs(head, after_note));
}

std::vector<AblationDelta> feature_deltas(const ScoredNote& scored, const Note& note, std::size_t t,
                                          const FeatureEncoder& encoder) {
  const auto& x = note.embeddings.at(t);
  const Vector f = encoder.encode_dense(x);
  std::vector<AblationDelta> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!encoder.is_active(f[i])) continue;
    const Vector xt = ablate_feature(x, f[i], encoder.feature_embedding(i));
    out.push_back(make_delta(static_cast<std::int64_t>(i), scored.probs(), scored.probs_with(t, xt)));
  }
  return out;
}

std::vector<Vector> pad_canvas(std::size_t d, std::size_t length) { return std::vector<Vector>(length, Vector(d, 0.0)); }

std::vector<Vector> clamp_feature(const FeatureEncoder& encoder, std::span<const Vector> canvas, std::size_t feature,
                                  double value) {
  if (feature >= encoder.n_features()) throw DomainError("clamp_feature: feature id out of range");
  std::vector<Vector> out;
  out.reserve(canvas.size());
  for (const auto& x : canvas) {
    Vector f = encoder.encode_dense(x);
    f[feature] = value;
    out.push_back(encoder.decode_dense(f));
  }
  return out;
}

std::vector<Vector> reconstruct_canvas(const FeatureEncoder& encoder, std::span<const Vector> canvas) {
  std::vector<Vector> out;
  out.reserve(canvas.size());
  for (const auto& x : canvas) out.push_back(encoder.decode_dense(encoder.encode_dense(x)));
  return out;
}

std::string delta_csv(const std::vector<DeltaRow>& rows) {
  std::ostringstream out;
  out << "note_id,token_idx,encoder,feature_id,code_id,delta\n";
  for (const auto& r : rows) {
    out << r.note_id << ',' << r.token_idx << ',' << r.encoder << ',' << r.feature_id << ',' << r.code_id << ','
        << codec::fmt9(r.delta) << '\n';
  }
  return out.str();
}

}  // namespace superlex
