#include "superlex/sparse_autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "superlex/codec.hpp"

namespace superlex {

using nlohmann::json;

std::string to_string(SaeVariant v) { return v == SaeVariant::L1 ? "L1" : "SPINE"; }

SaeVariant sae_variant_from_string(const std::string& s) {
  if (s == "L1" || s == "l1") return SaeVariant::L1;
  if (s == "SPINE" || s == "spine") return SaeVariant::Spine;
  throw ConfigError("unknown SAE variant '" + s + "'");
}

Vector SparseCode::densify() const {
  Vector f(m, 0.0);
  for (const auto& [i, v] : entries) f[i] = v;
  return f;
}

std::optional<double> SparseCode::value(std::uint32_t i) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), i,
                             [](const auto& e, std::uint32_t key) { return e.first < key; });
  if (it == entries.end() || it->first != i) return std::nullopt;
  return it->second;
}

void SaeTrainConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& why) { throw ConfigError("sae." + f + ": " + why); };
  if (m == 0) fail("m", "must be >= 1");
  if (!(lambda_l1 >= 0)) fail("lambda_l1", "must be >= 0");
  if (!(rho >= 0)) fail("rho", "must be >= 0");
  if (!(lambda1 >= 0)) fail("lambda1", "must be >= 0");
  if (!(lambda2 >= 0)) fail("lambda2", "must be >= 0");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate", "must be > 0");
  if (!(weight_decay >= 0)) fail("weight_decay", "must be >= 0");
}

SaeTrainConfig SaeTrainConfig::large_scale() {
  SaeTrainConfig c;
  c.m = 6144;
  c.lambda_l1 = 2e-5;
  c.lambda1 = 1.0;
  c.lambda2 = 1.0;
  c.batch_size = 8192;
  c.learning_rate = 1e-3;
  return c;
}

DictionaryModel::DictionaryModel(SaeVariant variant, Matrix encoder, Vector encoder_bias, Matrix decoder_rows,
                                 Vector decoder_bias)
    : variant_(variant),
      encoder_(std::move(encoder)),
      b_e_(std::move(encoder_bias)),
      decoder_rows_(std::move(decoder_rows)),
      b_d_(std::move(decoder_bias)) {
  if (b_e_.size() != encoder_.rows() || decoder_rows_.rows() != encoder_.rows() ||
      decoder_rows_.cols() != encoder_.cols() || b_d_.size() != encoder_.cols()) {
    throw ShapeError("DictionaryModel: inconsistent parameter shapes");
  }
}

DictionaryModel DictionaryModel::initialize(SaeVariant variant, std::size_t d, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix enc(m, d), dec(m, d);
  for (double& v : enc.data()) v = sd * rng.normal();
  for (double& v : dec.data()) v = sd * rng.normal();
  return DictionaryModel(variant, std::move(enc), Vector(m, 0.0), std::move(dec), Vector(d, 0.0));
}

Vector DictionaryModel::preactivation(std::span<const double> x) const {
  if (x.size() != d()) {
    throw ShapeError("encode: input length " + std::to_string(x.size()) + " != d " + std::to_string(d()));
  }
  Vector centered(x.begin(), x.end());
  for (std::size_t k = 0; k < centered.size(); ++k) centered[k] -= b_d_[k];
  return affine(encoder_, centered, b_e_);
}

double DictionaryModel::activate(double pre) const {
  return variant_ == SaeVariant::L1 ? std::max(0.0, pre) : std::clamp(pre, 0.0, 1.0);
}

Vector DictionaryModel::encode_dense(std::span<const double> x) const {
  Vector f = preactivation(x);
  for (double& v : f) v = activate(v);
  return f;
}

SparseCode DictionaryModel::encode(std::span<const double> x) const {
  const Vector f = encode_dense(x);
  SparseCode code{m(), {}};
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] > 0.0) code.entries.emplace_back(static_cast<std::uint32_t>(i), f[i]);
  return code;
}

Vector DictionaryModel::decode(const SparseCode& code) const {
  if (code.m != m()) throw ShapeError("decode: code length != m");
  Vector x = b_d_;
  for (const auto& [i, v] : code.entries) axpy(v, decoder_rows_.row(i), x);
  return x;
}

Vector DictionaryModel::feature_embedding(std::size_t i) const {
  const auto row = decoder_rows_.row(i);
  return Vector(row.begin(), row.end());
}

namespace {

json hyper_to_json(const SaeTrainConfig& c) {
  return json{{"m", c.m},
              {"lambda_l1", c.lambda_l1},
              {"rho", c.rho},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
}

SaeTrainConfig hyper_from_json(const json& j) {
  SaeTrainConfig c;
  c.m = j.value("m", c.m);
  c.lambda_l1 = j.value("lambda_l1", c.lambda_l1);
  c.rho = j.value("rho", c.rho);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

std::string DictionaryModel::to_json() const {
  json doc{{"version", "sae-v1"},
           {"variant", to_string(variant_)},
           {"m", m()},
           {"d", d()},
           {"hyperparameters", hyper_to_json(hyperparameters)},
           {"W_e", codec::pack_f32(encoder_.data())},
           {"b_e", codec::pack_f32(b_e_)},
           {"W_d", codec::pack_f32(decoder_matrix().data())},
           {"b_d", codec::pack_f32(b_d_)}};
  return doc.dump(1);
}

DictionaryModel sae_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  if (doc.value("version", "") != "sae-v1") throw FormatError("model file: expected version sae-v1");
  try {
    const std::size_t m = doc.at("m");
    const std::size_t d = doc.at("d");
    Matrix wd(d, m, codec::unpack_f32(doc.at("W_d").get<std::string>(), d * m));
    DictionaryModel model(sae_variant_from_string(doc.at("variant")),
                          Matrix(m, d, codec::unpack_f32(doc.at("W_e").get<std::string>(), m * d)),
                          codec::unpack_f32(doc.at("b_e").get<std::string>(), m), wd.transposed(),
                          codec::unpack_f32(doc.at("b_d").get<std::string>(), d));
    model.hyperparameters = hyper_from_json(doc.value("hyperparameters", json::object()));
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

namespace {

void check_batch(const DictionaryModel& model, const Matrix& batch) {
  if (batch.rows() == 0) throw DomainError("SAE loss: empty batch");
  if (batch.cols() != model.d()) throw ShapeError("SAE loss: batch width != d");
}

// Returns sum over the batch of |x - x_hat|^2 and fills the dense codes.
double reconstruct_batch(const DictionaryModel& model, const Matrix& batch, Matrix& codes) {
  codes = Matrix(batch.rows(), model.m());
  double sq = 0.0;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    const Vector f = model.encode_dense(batch.row(b));
    std::copy(f.begin(), f.end(), codes.row(b).begin());
    Vector xh = model.decoder_bias();
    for (std::size_t i = 0; i < f.size(); ++i)
      if (f[i] != 0.0) axpy(f[i], model.decoder_rows().row(i), xh);
    for (std::size_t k = 0; k < xh.size(); ++k) {
      const double e = xh[k] - batch(b, k);
      sq += e * e;
    }
  }
  return sq;
}

}  // namespace

L1Loss loss_l1(const DictionaryModel& model, const Matrix& batch, double lambda_l1) {
  check_batch(model, batch);
  Matrix codes;
  const auto B = static_cast<double>(batch.rows());
  L1Loss out;
  out.mse = reconstruct_batch(model, batch, codes) / B;
  double l1 = 0.0;
  for (double v : codes.data()) l1 += std::abs(v);
  out.sparsity = lambda_l1 * l1 / B;
  out.total = out.mse + out.sparsity;
  return out;
}

SpineLoss loss_spine(const DictionaryModel& model, const Matrix& batch, double rho, double lambda1, double lambda2) {
  if (model.variant() != SaeVariant::Spine) throw MisuseError("loss_spine: model variant is not SPINE");
  check_batch(model, batch);
  Matrix codes;
  const auto B = static_cast<double>(batch.rows());
  SpineLoss out;
  out.mse = reconstruct_batch(model, batch, codes) / B;
  Vector mean_f(model.m(), 0.0);
  double psl = 0.0;
  for (std::size_t b = 0; b < codes.rows(); ++b) {
    for (std::size_t i = 0; i < model.m(); ++i) {
      const double f = codes(b, i);
      mean_f[i] += f / B;
      psl += f * (1.0 - f);
    }
  }
  out.psl = psl / B;
  for (double fb : mean_f) out.asl += std::max(0.0, fb - rho);
  out.total = out.mse + lambda1 * out.asl + lambda2 * out.psl;
  return out;
}

double sae_loss(const DictionaryModel& model, const Matrix& batch, const SaeTrainConfig& config) {
  if (model.variant() == SaeVariant::L1) return loss_l1(model, batch, config.lambda_l1).total;
  return loss_spine(model, batch, config.rho, config.lambda1, config.lambda2).total;
}

SaeGradients sae_gradients(const DictionaryModel& model, const Matrix& batch, const SaeTrainConfig& config) {
  check_batch(model, batch);
  const std::size_t m = model.m();
  const std::size_t d = model.d();
  const std::size_t B = batch.rows();
  const double inv_b = 1.0 / static_cast<double>(B);
  const bool spine = model.variant() == SaeVariant::Spine;
  const auto& W = model.encoder_weights();
  const auto& H = model.decoder_rows();
  const auto& b_d = model.decoder_bias();

  constexpr std::size_t kShards = 8;
  auto shard_range = [&](std::size_t s) {
    return std::pair<std::size_t, std::size_t>{s * B / kShards, (s + 1) * B / kShards};
  };

  // Pass 1: pre-activations (needed up front for SPINE's batch means).
  Matrix pre(B, m);
  parallel_shards(kShards, [&](std::size_t s) {
    auto [lo, hi] = shard_range(s);
    for (std::size_t b = lo; b < hi; ++b) {
      const Vector p = model.preactivation(batch.row(b));
      std::copy(p.begin(), p.end(), pre.row(b).begin());
    }
  });

  Vector mean_f(m, 0.0);
  std::vector<std::uint8_t> over_target(m, 0);
  double asl = 0.0;
  if (spine) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < m; ++i) mean_f[i] += model.activate(pre(b, i));
    for (std::size_t i = 0; i < m; ++i) {
      mean_f[i] *= inv_b;
      over_target[i] = mean_f[i] > config.rho;
      asl += std::max(0.0, mean_f[i] - config.rho);
    }
  }

  struct Partial {
    Matrix enc, dec;
    Vector be, bd;
    double loss = 0.0;
  };
  std::vector<Partial> parts(kShards);
  parallel_shards(kShards, [&](std::size_t s) {
    auto& P = parts[s];
    P.enc = Matrix(m, d);
    P.dec = Matrix(m, d);
    P.be.assign(m, 0.0);
    P.bd.assign(d, 0.0);
    auto [lo, hi] = shard_range(s);
    Vector f(m), xc(d), err(d);
    std::vector<std::uint32_t> active;
    for (std::size_t b = lo; b < hi; ++b) {
      auto x = batch.row(b);
      auto p = pre.row(b);
      active.clear();
      for (std::size_t i = 0; i < m; ++i) {
        f[i] = model.activate(p[i]);
        if (f[i] != 0.0) active.push_back(static_cast<std::uint32_t>(i));
      }
      // err = x_hat - x
      for (std::size_t k = 0; k < d; ++k) {
        xc[k] = x[k] - b_d[k];
        err[k] = b_d[k] - x[k];
      }
      for (auto i : active) axpy(f[i], H.row(i), err);
      double sq = 0.0;
      for (double e : err) sq += e * e;
      P.loss += sq * inv_b;
      if (spine) {
        for (auto i : active) P.loss += config.lambda2 * f[i] * (1.0 - f[i]) * inv_b;
      } else {
        for (auto i : active) P.loss += config.lambda_l1 * f[i] * inv_b;
      }

      // dL/dx_hat
      for (double& e : err) e *= 2.0 * inv_b;
      axpy(1.0, err, P.bd);
      for (auto i : active) {
        axpy(f[i], err, P.dec.row(i));
        const double pi = p[i];
        const bool pass = spine ? (pi > 0.0 && pi < 1.0) : pi > 0.0;
        if (!pass) continue;
        double df = dot(H.row(i), err);
        if (spine) {
          df += config.lambda2 * (1.0 - 2.0 * f[i]) * inv_b;
          if (over_target[i]) df += config.lambda1 * inv_b;
        } else {
          df += config.lambda_l1 * inv_b;
        }
        axpy(df, xc, P.enc.row(i));
        P.be[i] += df;
        axpy(-df, W.row(i), P.bd);
      }
    }
  });

  SaeGradients g{Matrix(m, d), Vector(m, 0.0), Matrix(m, d), Vector(d, 0.0), spine ? config.lambda1 * asl : 0.0};
  for (const auto& P : parts) {
    axpy(1.0, P.enc.data(), g.encoder.data());
    axpy(1.0, P.dec.data(), g.decoder_rows.data());
    axpy(1.0, P.be, g.encoder_bias);
    axpy(1.0, P.bd, g.decoder_bias);
    g.loss += P.loss;
  }
  return g;
}

namespace {

std::vector<double> flatten(const DictionaryModel& model) {
  std::vector<double> p;
  p.reserve(2 * model.m() * model.d() + model.m() + model.d());
  const auto& e = model.encoder_weights().storage();
  const auto& h = model.decoder_rows().storage();
  p.insert(p.end(), e.begin(), e.end());
  p.insert(p.end(), model.encoder_bias().begin(), model.encoder_bias().end());
  p.insert(p.end(), h.begin(), h.end());
  p.insert(p.end(), model.decoder_bias().begin(), model.decoder_bias().end());
  return p;
}

std::vector<double> flatten(const SaeGradients& g) {
  std::vector<double> p;
  p.reserve(g.encoder.size() + g.encoder_bias.size() + g.decoder_rows.size() + g.decoder_bias.size());
  p.insert(p.end(), g.encoder.storage().begin(), g.encoder.storage().end());
  p.insert(p.end(), g.encoder_bias.begin(), g.encoder_bias.end());
  p.insert(p.end(), g.decoder_rows.storage().begin(), g.decoder_rows.storage().end());
  p.insert(p.end(), g.decoder_bias.begin(), g.decoder_bias.end());
  return p;
}

void assign(DictionaryModel& model, const std::vector<double>& p) {
  auto it = p.begin();
  auto take = [&](std::vector<double>& dst) {
    std::copy(it, it + static_cast<long>(dst.size()), dst.begin());
    it += static_cast<long>(dst.size());
  };
  take(model.mutable_encoder().storage());
  take(model.mutable_encoder_bias());
  take(model.mutable_decoder_rows().storage());
  take(model.mutable_decoder_bias());
}

}  // namespace

SaeTrainResult train_sae(const Matrix& embeddings, const SaeTrainConfig& config, SaeVariant variant) {
  config.validate();
  if (embeddings.rows() == 0) throw DomainError("train_sae: empty embedding stream");
  const std::size_t N = embeddings.rows();
  const std::size_t d = embeddings.cols();
  const std::size_t B = std::min(config.batch_size, N);

  SaeTrainResult result{DictionaryModel::initialize(variant, d, config.m, config.seed), {}};
  result.model.hyperparameters = config;

  Rng rng(Rng::derive(config.seed, 0x5ae));
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  std::size_t cursor = N;
  Matrix batch(B, d);
  auto next_batch = [&] {
    for (std::size_t b = 0; b < B; ++b) {
      if (cursor == N) {
        rng.shuffle(order);
        cursor = 0;
      }
      auto src = embeddings.row(order[cursor++]);
      std::copy(src.begin(), src.end(), batch.row(b).begin());
    }
  };

  next_batch();
  // b_d starts at the mean of the first batch so that x - b_d is centred.
  auto& b_d = result.model.mutable_decoder_bias();
  for (std::size_t b = 0; b < B; ++b) axpy(1.0 / static_cast<double>(B), batch.row(b), b_d);

  AdamWState opt({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay},
                 2 * config.m * d + config.m + d);
  std::vector<double> params = flatten(result.model);
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (step > 0) next_batch();
    const SaeGradients g = sae_gradients(result.model, batch, config);
    if (!std::isfinite(g.loss)) {
      throw TrainingError("train_sae: non-finite loss at step " + std::to_string(step), static_cast<long>(step));
    }
    result.report.loss_curve.push_back(g.loss);
    adamw_step(opt, params, flatten(g));
    assign(result.model, params);
  }

  // Final pass over (up to 20000 rows of) the stream.
  const std::size_t n_eval = std::min<std::size_t>(N, 20000);
  std::vector<std::uint8_t> ever(config.m, 0);
  double l0 = 0.0;
  for (std::size_t r = 0; r < n_eval; ++r) {
    const Vector f = result.model.encode_dense(embeddings.row(r));
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] > 0.0) {
        ever[i] = 1;
        l0 += 1.0;
      }
    }
  }
  auto& rep = result.report;
  rep.mean_l0 = l0 / static_cast<double>(n_eval);
  rep.dead_features = static_cast<std::size_t>(std::count(ever.begin(), ever.end(), 0));
  if (!rep.loss_curve.empty()) {
    rep.initial_loss = rep.loss_curve.front();
    rep.final_loss = rep.loss_curve.back();
  }
  return result;
}

}  // namespace superlex
