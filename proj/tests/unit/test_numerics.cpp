#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "superlex/numerics.hpp"

using namespace superlex;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.storage()) v = rng.normal();
  return m;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("affine: identity and zero matrices") {
  const Matrix I = Matrix::identity(2);
  CHECK(affine(I, Vector{3, -1}, Vector{0, 0}) == Vector{3, -1});
  const Matrix Z(2, 5);
  CHECK(affine(Z, Vector{1, 2, 3, 4, 5}, Vector{5, 7}) == Vector{5, 7});
}

TEST_CASE("affine: matches a naive element loop") {
  Rng rng(1);
  const Matrix W = random_matrix(4, 3, rng);
  const Vector x = random_vector(3, rng), b = random_vector(4, rng);
  const Vector got = affine(W, x, b);
  for (std::size_t r = 0; r < 4; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < 3; ++c) acc += W(r, c) * x[c];
    CHECK(got[r] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("affine: linearity on random instances") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix W = random_matrix(5, 4, rng);
    const Vector x = random_vector(4, rng), y = random_vector(4, rng), zero(5, 0.0);
    const double a = rng.normal(), b = rng.normal();
    Vector mix(4);
    for (int i = 0; i < 4; ++i) mix[i] = a * x[i] + b * y[i];
    const Vector lhs = affine(W, mix, zero), fx = affine(W, x, zero), fy = affine(W, y, zero);
    for (int r = 0; r < 5; ++r) CHECK(std::abs(lhs[r] - (a * fx[r] + b * fy[r])) < 1e-10);
  }
}

TEST_CASE("affine: shape mismatch throws") {
  CHECK_THROWS_AS(affine(Matrix(2, 3), Vector{1, 2}, Vector{0, 0}), ShapeError);
  CHECK_THROWS_AS(affine(Matrix(2, 3), Vector{1, 2, 3}, Vector{0}), ShapeError);
}

TEST_CASE("matvec_t equals the transpose product") {
  Rng rng(3);
  const Matrix W = random_matrix(4, 6, rng);
  const Vector x = random_vector(4, rng);
  const Vector a = matvec_t(W, x), b = matvec(W.transposed(), x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("adamw: zero gradient without decay is the identity") {
  AdamWState st(AdamWConfig{}, 3);
  Vector p{1.0, -2.0, 0.5};
  const Vector before = p;
  for (int i = 0; i < 5; ++i) adamw_step(st, p, Vector(3, 0.0));
  CHECK(p == before);
  CHECK(st.step == 5);
}

TEST_CASE("adamw: one bias-corrected step with beta1 = beta2 = 0") {
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  AdamWState st(cfg, 1);
  Vector p{2.0};
  adamw_step(st, p, Vector{1.0});
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adamw: hand-computed second step with defaults and decay") {
  AdamWConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.1;
  AdamWState st(cfg, 1);
  Vector p{1.0};
  const double g1 = 0.3, g2 = -0.2;
  double m = 0, v = 0, w = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * w);
    adamw_step(st, p, Vector{g});
  }
  CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
}

TEST_CASE("adamw: converges on the quadratic bowl") {
  AdamWConfig cfg;
  cfg.learning_rate = 1e-2;
  AdamWState st(cfg, 1);
  // Adam moves about lr per step, so 200 steps cover a start at 0.5.
  Vector w{0.5};
  for (int i = 0; i < 200; ++i) adamw_step(st, w, Vector{2.0 * w[0]});
  CHECK(std::abs(w[0]) < 1e-2);
}

TEST_CASE("adamw: errors") {
  AdamWState st(AdamWConfig{}, 3);
  Vector p(3, 0.0);
  try {
    adamw_step(st, p, Vector{0.0, NAN, 0.0});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
  AdamWConfig bad;
  bad.learning_rate = 0.0;
  AdamWState st2(bad, 3);
  CHECK_THROWS_AS(adamw_step(st2, p, Vector(3, 0.0)), ConfigError);
  CHECK_THROWS_AS(adamw_step(st, p, Vector(2, 0.0)), ShapeError);
}

TEST_CASE("percentile: nearest-rank examples") {
  Vector hundred(100);
  std::iota(hundred.begin(), hundred.end(), 1.0);
  CHECK(percentile(hundred, 95) == 95.0);
  CHECK(percentile(Vector{4.25}, 0) == 4.25);
  CHECK(percentile(Vector{4.25}, 73.1) == 4.25);
  CHECK(percentile(Vector{3, 1, 2}, 50) == 2.0);
  CHECK(percentile(Vector{3, 1, 2}, 0) == 1.0);
  CHECK(percentile(Vector{3, 1, 2}, 100) == 3.0);
  CHECK_THROWS_AS(percentile(Vector{}, 50), DomainError);
  CHECK_THROWS_AS(percentile(Vector{1}, 101), DomainError);
}

TEST_CASE("percentile: monotone in p and a member of the input") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector v = random_vector(1 + rng.below(40), rng);
    double prev = -INFINITY;
    for (double p = 0; p <= 100; p += 2.5) {
      const double q = percentile(v, p);
      CHECK(std::find(v.begin(), v.end(), q) != v.end());
      CHECK(q >= prev);
      prev = q;
    }
  }
}

TEST_CASE("cosine_sim: examples and properties") {
  CHECK(cosine_sim(Vector{1, 2}, Vector{1, 2}) == doctest::Approx(1.0));
  CHECK(cosine_sim(Vector{1, 0}, Vector{0, 1}) == 0.0);
  CHECK(cosine_sim(Vector{1, 2}, Vector{2, 4}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cosine_sim(Vector{0, 0}, Vector{1, 0}), DomainError);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Vector a = random_vector(6, rng), b = random_vector(6, rng);
    CHECK(cosine_sim(a, b) == cosine_sim(b, a));
    CHECK(std::abs(cosine_sim(a, b)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("rng: reproducible streams and sane moments") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng(42).next_u64() != c.next_u64());
  CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
  Rng r(9);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}

TEST_CASE("parallel_shards: every shard runs once and errors propagate") {
  std::vector<std::atomic<int>> hits(37);
  parallel_shards(hits.size(), [&](std::size_t s) { hits[s]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_shards(8, [](std::size_t s) { if (s == 3) throw DomainError("boom"); }), DomainError);
  set_max_threads(1);
  int serial = 0;
  parallel_shards(5, [&](std::size_t) { ++serial; });
  CHECK(serial == 5);
  set_max_threads(0);
}
