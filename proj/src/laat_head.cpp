#include "superlex/laat_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "superlex/codec.hpp"

namespace superlex {

using nlohmann::json;

LabelHead LabelHead::initialize(std::size_t n_codes, std::size_t d, std::uint64_t seed, double scale) {
  Rng rng(seed);
  LabelHead h{Matrix(n_codes, d), Matrix(n_codes, d), Vector(n_codes, 0.0)};
  for (double& v : h.attention.data()) v = scale * rng.normal();
  for (double& v : h.output.data()) v = scale * rng.normal();
  return h;
}

std::vector<double> LabelHead::flatten() const {
  std::vector<double> p;
  p.reserve(n_params());
  p.insert(p.end(), attention.storage().begin(), attention.storage().end());
  p.insert(p.end(), output.storage().begin(), output.storage().end());
  p.insert(p.end(), bias.begin(), bias.end());
  return p;
}

void LabelHead::assign(std::span<const double> params) {
  if (params.size() != n_params()) throw ShapeError("LabelHead::assign: parameter count mismatch");
  auto it = params.begin();
  std::copy(it, it + static_cast<long>(attention.size()), attention.storage().begin());
  it += static_cast<long>(attention.size());
  std::copy(it, it + static_cast<long>(output.size()), output.storage().begin());
  it += static_cast<long>(output.size());
  std::copy(it, params.end(), bias.begin());
}

namespace {

void check_inputs(const LabelHead& head, std::span<const Vector> embeddings, std::span<const std::uint8_t> is_pad) {
  if (embeddings.empty()) throw DomainError("label head: note has no tokens");
  if (!is_pad.empty() && is_pad.size() != embeddings.size())
    throw ShapeError("label head: pad mask length != token count");
  for (const auto& x : embeddings)
    if (x.size() != head.dim()) throw ShapeError("label head: embedding length != head dimension");
  bool any = is_pad.empty();
  for (auto p : is_pad) any = any || p == 0;
  if (!any) throw DomainError("label head: every token is a pad");
}

bool masked(std::span<const std::uint8_t> is_pad, std::size_t t) { return !is_pad.empty() && is_pad[t] != 0; }

// In-place masked softmax of row (masked entries -> 0).
void softmax_row(std::span<double> row, std::span<const std::uint8_t> is_pad) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < row.size(); ++t)
    if (!masked(is_pad, t)) mx = std::max(mx, row[t]);
  double sum = 0.0;
  for (std::size_t t = 0; t < row.size(); ++t) {
    row[t] = masked(is_pad, t) ? 0.0 : std::exp(row[t] - mx);
    sum += row[t];
  }
  for (double& v : row) v /= sum;
}

// softplus(z) - y z == BCE(logistic(z), y)
double bce_from_logit(double z, double y) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - y * z;
}

}  // namespace

AttentionMatrix attention_scores(const LabelHead& head, std::span<const Vector> embeddings,
                                 std::span<const std::uint8_t> is_pad) {
  check_inputs(head, embeddings, is_pad);
  const std::size_t T = embeddings.size();
  AttentionMatrix a{Matrix(head.n_codes(), T)};
  for (std::size_t c = 0; c < head.n_codes(); ++c) {
    auto row = a.scores.row(c);
    for (std::size_t t = 0; t < T; ++t) row[t] = masked(is_pad, t) ? 0.0 : dot(head.attention.row(c), embeddings[t]);
    softmax_row(row, is_pad);
  }
  return a;
}

Vector predict_probs(const LabelHead& head, std::span<const Vector> embeddings, std::span<const std::uint8_t> is_pad) {
  const auto a = attention_scores(head, embeddings, is_pad);
  Vector p(head.n_codes());
  for (std::size_t c = 0; c < head.n_codes(); ++c) {
    double z = head.bias[c];
    for (std::size_t t = 0; t < embeddings.size(); ++t) {
      const double w = a.scores(c, t);
      if (w != 0.0) z += w * dot(head.output.row(c), embeddings[t]);
    }
    p[c] = logistic(z);
  }
  return p;
}

ScoredNote::ScoredNote(const LabelHead& head, const Note& note)
    : head_(head), is_pad_(note.is_pad), score_(head.n_codes(), note.size()), value_(head.n_codes(), note.size()) {
  check_inputs(head, note.embeddings, note.is_pad);
  for (std::size_t c = 0; c < head.n_codes(); ++c) {
    for (std::size_t t = 0; t < note.size(); ++t) {
      if (is_pad_[t]) continue;
      score_(c, t) = dot(head.attention.row(c), note.embeddings[t]);
      value_(c, t) = dot(head.output.row(c), note.embeddings[t]);
    }
  }
  probs_ = probs_for(note.size(), nullptr, nullptr, false);
}

Vector ScoredNote::probs_for(std::size_t replaced, const double* s_new, const double* r_new, bool drop) const {
  const std::size_t C = head_.n_codes();
  const std::size_t T = is_pad_.size();
  Vector p(C);
  for (std::size_t c = 0; c < C; ++c) {
    auto s_row = score_.row(c);
    auto r_row = value_.row(c);
    auto score_at = [&](std::size_t t) { return t == replaced && s_new ? s_new[c] : s_row[t]; };
    auto value_at = [&](std::size_t t) { return t == replaced && r_new ? r_new[c] : r_row[t]; };
    auto live = [&](std::size_t t) { return !is_pad_[t] && !(drop && t == replaced); };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < T; ++t)
      if (live(t)) mx = std::max(mx, score_at(t));
    if (!std::isfinite(mx)) throw DomainError("label head: every token is a pad");
    double sum = 0.0;
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (!live(t)) continue;
      const double e = std::exp(score_at(t) - mx);
      sum += e;
      acc += e * value_at(t);
    }
    p[c] = logistic(acc / sum + head_.bias[c]);
  }
  return p;
}

Vector ScoredNote::probs_with(std::size_t t, std::span<const double> x) const {
  if (t >= is_pad_.size() || is_pad_[t]) throw DomainError("probs_with: token index out of range or pad");
  const std::size_t C = head_.n_codes();
  Vector s(C), r(C);
  for (std::size_t c = 0; c < C; ++c) {
    s[c] = dot(head_.attention.row(c), x);
    r[c] = dot(head_.output.row(c), x);
  }
  return probs_for(t, s.data(), r.data(), false);
}

Vector ScoredNote::probs_without(std::size_t t) const {
  if (t >= is_pad_.size() || is_pad_[t]) throw DomainError("probs_without: token index out of range or pad");
  return probs_for(t, nullptr, nullptr, true);
}

namespace {

// Accumulates loss * scale and gradients * scale for one note.
double note_bce_gradient(const LabelHead& head, const Note& note, double scale, std::span<double> grad) {
  const std::size_t C = head.n_codes();
  const std::size_t d = head.dim();
  const std::size_t T = note.size();
  const std::size_t off_v = head.attention.size();
  const std::size_t off_b = off_v + head.output.size();
  std::vector<double> s(T), r(T), ctx(d);
  double loss = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      if (note.is_pad[t]) continue;
      s[t] = dot(head.attention.row(c), note.embeddings[t]);
      r[t] = dot(head.output.row(c), note.embeddings[t]);
    }
    softmax_row(s, note.is_pad);  // s now holds attention weights a_t
    double z = head.bias[c];
    for (std::size_t t = 0; t < T; ++t) z += s[t] * r[t];
    const double y = note.labels[c];
    loss += bce_from_logit(z, y);
    const double dz = (logistic(z) - y) * scale;

    std::fill(ctx.begin(), ctx.end(), 0.0);
    double mean_r = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (s[t] == 0.0) continue;
      axpy(s[t], note.embeddings[t], ctx);
      mean_r += s[t] * r[t];
    }
    auto gv = grad.subspan(off_v + c * d, d);
    axpy(dz, ctx, gv);
    grad[off_b + c] += dz;
    // d z / d s_t = a_t (r_t - sum_u a_u r_u)
    auto gu = grad.subspan(c * d, d);
    for (std::size_t t = 0; t < T; ++t) {
      if (s[t] == 0.0) continue;
      axpy(dz * s[t] * (r[t] - mean_r), note.embeddings[t], gu);
    }
  }
  return loss * scale;
}

}  // namespace

double head_bce(const LabelHead& head, std::span<const Note> notes) {
  if (notes.empty()) throw DomainError("head_bce: no notes");
  double total = 0.0;
  for (const auto& note : notes) {
    const auto p = predict_probs(head, note);
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double pc = std::clamp(p[c], 1e-15, 1.0 - 1e-15);
      total -= note.labels[c] ? std::log(pc) : std::log1p(-pc);
    }
  }
  return total / static_cast<double>(notes.size() * head.n_codes());
}

double head_bce_gradient(const LabelHead& head, std::span<const Note> notes, std::vector<double>& grad) {
  if (notes.empty()) throw DomainError("head_bce_gradient: no notes");
  const double scale = 1.0 / static_cast<double>(notes.size() * head.n_codes());
  constexpr std::size_t kShards = 8;
  std::vector<std::vector<double>> partial(kShards, std::vector<double>(head.n_params(), 0.0));
  std::vector<double> losses(kShards, 0.0);
  parallel_shards(kShards, [&](std::size_t shard) {
    for (std::size_t i = shard; i < notes.size(); i += kShards)
      losses[shard] += note_bce_gradient(head, notes[i], scale, partial[shard]);
  });
  grad.assign(head.n_params(), 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < kShards; ++k) {
    axpy(1.0, partial[k], grad);
    loss += losses[k];
  }
  return loss;
}

HeadTrainResult train_head(std::span<const Note> notes, std::size_t n_codes, const HeadTrainConfig& config) {
  if (notes.empty()) throw DomainError("train_head: no training notes");
  const std::size_t d = notes.front().embeddings.at(0).size();
  HeadTrainResult result{LabelHead::initialize(n_codes, d, config.seed, config.init_scale), {}, 0.0};
  if (config.steps == 0) {
    result.final_loss = head_bce(result.head, notes);
    return result;
  }
  if (config.batch_size == 0) throw ConfigError("head.batch_size must be >= 1");
  AdamWState opt({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay}, result.head.n_params());
  std::vector<double> params = result.head.flatten();
  std::vector<double> grad;

  Rng rng(Rng::derive(config.seed, 0x4ead));
  std::vector<std::size_t> order(notes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<Note> batch;
  for (std::size_t step = 0; step < config.steps; ++step) {
    batch.clear();
    while (batch.size() < std::min(config.batch_size, notes.size())) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(notes[order[cursor++]]);
    }
    const double loss = head_bce_gradient(result.head, batch, grad);
    if (!std::isfinite(loss)) {
      throw TrainingError("train_head: loss became non-finite at step " + std::to_string(step),
                          static_cast<long>(step));
    }
    result.loss_curve.push_back(loss);
    adamw_step(opt, params, grad);
    result.head.assign(params);
  }
  result.final_loss = head_bce(result.head, notes);
  return result;
}

std::vector<std::vector<std::size_t>> highlight_tokens(const LabelHead& head, const Note& note, double percentile_p) {
  const auto a = attention_scores(head, note.embeddings, note.is_pad);
  std::vector<std::vector<std::size_t>> out(head.n_codes());
  std::vector<double> row_vals;
  for (std::size_t c = 0; c < head.n_codes(); ++c) {
    row_vals.clear();
    for (std::size_t t = 0; t < note.size(); ++t)
      if (!note.is_pad[t]) row_vals.push_back(a.scores(c, t));
    const double threshold = percentile(row_vals, percentile_p);
    for (std::size_t t = 0; t < note.size(); ++t)
      if (!note.is_pad[t] && a.scores(c, t) >= threshold) out[c].push_back(t);
  }
  return out;
}

std::string head_to_json(const LabelHead& head) {
  json doc{{"version", "laat-v1"},
           {"n_codes", head.n_codes()},
           {"d", head.dim()},
           {"attention", codec::pack_f32(head.attention.data())},
           {"output", codec::pack_f32(head.output.data())},
           {"bias", codec::pack_f32(head.bias)}};
  return doc.dump(1);
}

LabelHead head_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("head file: ") + e.what());
  }
  if (doc.value("version", "") != "laat-v1") throw FormatError("head file: expected version laat-v1");
  try {
    const std::size_t C = doc.at("n_codes");
    const std::size_t d = doc.at("d");
    return LabelHead{Matrix(C, d, codec::unpack_f32(doc.at("attention").get<std::string>(), C * d)),
                     Matrix(C, d, codec::unpack_f32(doc.at("output").get<std::string>(), C * d)),
                     codec::unpack_f32(doc.at("bias").get<std::string>(), C)};
  } catch (const json::exception& e) {
    throw FormatError(std::string("head file: ") + e.what());
  }
}

}  // namespace superlex
