#include <doctest.h>

#include <cmath>

#include "superlex/baseline_encoders.hpp"
#include "superlex/intervention.hpp"
#include "superlex/sparse_autoencoder.hpp"

using namespace superlex;

namespace {

DictionaryModel random_sae(std::size_t d, std::size_t m, std::uint64_t seed) {
  DictionaryModel model = DictionaryModel::initialize(SaeVariant::L1, d, m, seed);
  Rng rng(seed + 7);
  for (auto& x : model.mutable_encoder_bias()) x = rng.normal(0.0, 0.2);
  for (auto& x : model.mutable_decoder_bias()) x = rng.normal(0.0, 0.5);
  return model;
}

Note make_note(const std::vector<Vector>& xs) {
  Note n;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    n.token_ids.push_back(static_cast<TokenId>(t + 1));
    n.embeddings.push_back(xs[t]);
    n.is_pad.push_back(0);
    n.concept_trace.emplace_back();
  }
  return n;
}

}  // namespace

TEST_CASE("ablate_feature: examples and linearity") {
  const Vector h{1, -2, 0.5}, b{0.3, 0.1, -1};
  Vector x(3);
  for (int k = 0; k < 3; ++k) x[k] = 2 * h[k] + b[k];
  const Vector xt = ablate_feature(x, 2.0, h);
  for (int k = 0; k < 3; ++k) CHECK(xt[k] == doctest::Approx(b[k]).epsilon(1e-15));
  CHECK(ablate_feature(x, 0.0, h) == x);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    Vector y{rng.normal(), rng.normal(), rng.normal()};
    const double f = rng.normal();
    Vector back = ablate_feature(y, f, h);
    axpy(f, h, back);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(back[k] - y[k]) < 1e-15);
  }
  CHECK_THROWS_AS(ablate_feature(x, 1.0, Vector{1, 2}), ShapeError);
}

TEST_CASE("ablating every active SAE feature leaves the residual plus b_d") {
  const DictionaryModel m = random_sae(8, 20, 3);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Vector x(8);
    for (auto& v : x) v = rng.normal();
    const Vector got = ablate_active_features(m, x);
    const Vector xh = m.decode(m.encode(x));
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(got[k] - (x[k] - xh[k] + m.decoder_bias()[k])) < 1e-9);
  }
}

TEST_CASE("keep_only_feature") {
  const Vector h{0.5, 1, -1};
  CHECK(keep_only_feature(0.0, h) == Vector{0, 0, 0});
  CHECK(keep_only_feature(3.0, h) == Vector{1.5, 3, -3});
  const Vector off{1, 1, 1};
  CHECK(keep_only_feature(2.0, h, std::span<const double>(off)) == Vector{2, 3, -1});
}

TEST_CASE("probability deltas") {
  const LabelHead head = LabelHead::initialize(4, 3, 5, 1.0);
  Rng rng(6);
  std::vector<Vector> xs;
  for (int t = 0; t < 5; ++t) xs.push_back({rng.normal(), rng.normal(), rng.normal()});
  Note note = make_note(xs);
  note.labels.assign(4, 0);

  const auto zero = probability_delta(head, note, 2, Intervention::identity());
  for (double v : zero.delta) CHECK(v == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const auto d = probability_delta(head, note, trial % 5,
                                     Intervention::replace({rng.normal(0, 5), rng.normal(0, 5), rng.normal(0, 5)}));
    for (double v : d.delta) CHECK(std::abs(v) <= 1.0);
    for (std::size_t i = 1; i < d.top_affected.size(); ++i) {
      const auto& a = d.top_affected[i - 1];
      const auto& b = d.top_affected[i];
      CHECK((a.second > b.second || (a.second == b.second && a.first < b.first)));
    }
  }
  CHECK_THROWS_AS(probability_delta(head, note, 9, Intervention::identity()), DomainError);
  note.is_pad[1] = 1;
  CHECK_THROWS_AS(probability_delta(head, note, 1, Intervention::identity()), DomainError);
  CHECK_THROWS_AS(ablate_token(note, 1), DomainError);
}

TEST_CASE("token ablation down to one token equals the single-token prediction") {
  const LabelHead head = LabelHead::initialize(3, 4, 8, 1.0);
  Rng rng(9);
  std::vector<Vector> xs;
  for (int t = 0; t < 6; ++t) xs.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  Note note = make_note(xs);
  for (std::size_t t = 0; t < 5; ++t) note = apply_intervention(note, t, ablate_token(note, t));
  const Vector a = predict_probs(head, note);
  const Vector b = predict_probs(head, make_note({xs[5]}));
  for (int c = 0; c < 3; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-14));
}

TEST_CASE("token ablation hits the supporting token hardest") {
  // Code 0 reads coordinate 0 through attention and output weights.
  LabelHead head = LabelHead::initialize(2, 3, 1, 0.0);
  head.attention(0, 0) = 5.0;
  head.output(0, 0) = 6.0;
  head.bias[0] = -3.0;
  Note note = make_note({{1, 0, 0}, {0, 0.2, 0}, {0, 0, 0.2}});
  const auto relevant = probability_delta(head, note, 0, ablate_token(note, 0));
  const auto unrelated = probability_delta(head, note, 1, ablate_token(note, 1));
  CHECK(relevant.delta[0] > 0.0);
  CHECK(relevant.top_affected.front().first == 0);
  CHECK(relevant.delta[0] > unrelated.delta[0]);
}

TEST_CASE("clamping") {
  DictionaryModel m = random_sae(6, 9, 10);
  for (auto& b : m.mutable_encoder_bias()) b = -std::abs(b) - 0.1;
  // With b_e < 0 the zero-centred canvas embedding b_d encodes to nothing.
  std::vector<Vector> canvas(3, m.decoder_bias());
  const auto zeroed = clamp_feature(m, canvas, 4, 0.0);
  for (const auto& x : zeroed)
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(x[k] - m.decoder_bias()[k]) < 1e-12);

  const auto clamped = clamp_feature(m, canvas, 4, 50.0);
  for (const auto& x : clamped) {
    const Vector back = ablate_feature(x, 50.0, m.feature_embedding(4));
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(back[k] - m.decoder_bias()[k]) < 1e-9);
  }
  CHECK(pad_canvas(6).size() == kCanvasLength);
  CHECK_THROWS_AS(clamp_feature(m, canvas, 9, 1.0), DomainError);
}

TEST_CASE("clamp sweep raises the mapped code monotonically") {
  // Feature 0 writes along e0, which the head maps to code 0.
  const auto id = make_identity(3);
  LabelHead head = LabelHead::initialize(2, 3, 1, 0.0);
  head.output(0, 0) = 0.2;
  head.bias[0] = -4.0;
  const auto canvas = pad_canvas(3);
  double prev = -1;
  for (double v : {0.0, 10.0, 50.0}) {
    const double p = predict_probs(head, clamp_feature(id, canvas, 0, v))[0];
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("delta csv format") {
  const std::string csv = delta_csv({{3, 1, "sae-l1", 7, 2, 1.0 / 3.0}, {0, 0, "token", -1, 0, -0.5}});
  CHECK(csv ==
        "note_id,token_idx,encoder,feature_id,code_id,delta\n"
        "3,1,sae-l1,7,2,0.333333333\n"
        "0,0,token,-1,0,-0.5\n");
}
