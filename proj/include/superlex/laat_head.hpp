#pragma once

// Label-attention multilabel classifier. For each code c the head attends
// over the non-pad tokens with scores softmax_t(U_c . x_t), pools the
// embeddings with those weights, and emits an independent logistic
// probability from V_c . context + bias_c.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "superlex/numerics.hpp"
#include "superlex/synthetic_world.hpp"

namespace superlex {

struct LabelHead {
  Matrix attention;  // U: C x d
  Matrix output;     // V: C x d
  Vector bias;       // C

  std::size_t n_codes() const { return attention.rows(); }
  std::size_t dim() const { return attention.cols(); }

  static LabelHead initialize(std::size_t n_codes, std::size_t d, std::uint64_t seed, double scale = 0.1);

  std::size_t n_params() const { return attention.size() + output.size() + bias.size(); }
  std::vector<double> flatten() const;
  void assign(std::span<const double> params);

  bool operator==(const LabelHead&) const = default;
};

// C x T, each row sums to one over the non-pad positions; pads score 0.
struct AttentionMatrix {
  Matrix scores;
};

// `is_pad` may be empty, meaning no position is masked.
AttentionMatrix attention_scores(const LabelHead& head, std::span<const Vector> embeddings,
                                 std::span<const std::uint8_t> is_pad = {});
Vector predict_probs(const LabelHead& head, std::span<const Vector> embeddings,
                     std::span<const std::uint8_t> is_pad = {});

inline Vector predict_probs(const LabelHead& head, const Note& note) {
  return predict_probs(head, note.embeddings, note.is_pad);
}

// Caches U_c . x_t and V_c . x_t for one note so that the probabilities
// with a single token replaced cost O(C d + C T) instead of a full pass.
class ScoredNote {
 public:
  ScoredNote(const LabelHead& head, const Note& note);

  const Vector& probs() const { return probs_; }
  // Probabilities with token t's embedding replaced by x (t stays non-pad).
  Vector probs_with(std::size_t t, std::span<const double> x) const;
  // Probabilities with token t masked out entirely.
  Vector probs_without(std::size_t t) const;

 private:
  Vector probs_for(std::size_t t, const double* s_new, const double* r_new, bool drop) const;

  const LabelHead& head_;
  std::vector<std::uint8_t> is_pad_;
  Matrix score_;  // C x T, U_c . x_t
  Matrix value_;  // C x T, V_c . x_t
  Vector probs_;
};

struct HeadTrainConfig {
  std::size_t steps = 1500;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  double init_scale = 0.1;
  std::uint64_t seed = 11;
};

struct HeadTrainResult {
  LabelHead head;
  std::vector<double> loss_curve;
  double final_loss = 0.0;
};

// Mean binary cross-entropy over notes and codes.
double head_bce(const LabelHead& head, std::span<const Note> notes);
// Returns the loss; grad is resized to head.n_params() in flatten() order.
double head_bce_gradient(const LabelHead& head, std::span<const Note> notes, std::vector<double>& grad);

HeadTrainResult train_head(std::span<const Note> notes, std::size_t n_codes, const HeadTrainConfig& config);

// Per code, the non-pad positions whose attention is at least the
// nearest-rank `percentile_p` of that code's non-pad attention row.
std::vector<std::vector<std::size_t>> highlight_tokens(const LabelHead& head, const Note& note,
                                                       double percentile_p = 95.0);

std::string head_to_json(const LabelHead& head);
LabelHead head_from_json(const std::string& text);

}  // namespace superlex
