#include "superlex/baseline_encoders.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

#include "superlex/codec.hpp"

namespace superlex {

using nlohmann::json;

std::string to_string(LinearKind k) {
  switch (k) {
    case LinearKind::Pca: return "pca";
    case LinearKind::Ica: return "ica";
    case LinearKind::Identity: return "identity";
    case LinearKind::Random: return "random";
  }
  return "?";
}

LinearKind linear_kind_from_string(const std::string& s) {
  if (s == "pca") return LinearKind::Pca;
  if (s == "ica") return LinearKind::Ica;
  if (s == "identity") return LinearKind::Identity;
  if (s == "random") return LinearKind::Random;
  throw ConfigError("unknown linear encoder kind '" + s + "'");
}

LinearFeatureEncoder::LinearFeatureEncoder(LinearKind kind, Matrix weights, Matrix embeddings, Vector mean,
                                           Vector eigenvalues)
    : kind_(kind),
      weights_(std::move(weights)),
      embeddings_(std::move(embeddings)),
      mean_(std::move(mean)),
      eigenvalues_(std::move(eigenvalues)) {
  if (embeddings_.rows() != weights_.rows() || embeddings_.cols() != weights_.cols() || mean_.size() != weights_.cols())
    throw ShapeError("LinearFeatureEncoder: inconsistent shapes");
}

Vector LinearFeatureEncoder::encode_dense(std::span<const double> x) const {
  if (x.size() != dim()) throw ShapeError("linear encoder: input length != d");
  Vector centered(x.begin(), x.end());
  for (std::size_t k = 0; k < centered.size(); ++k) centered[k] -= mean_[k];
  Vector f = matvec(weights_, centered);
  if (kind_ == LinearKind::Identity || kind_ == LinearKind::Random)
    for (double& v : f) v = std::max(0.0, v);
  return f;
}

Vector LinearFeatureEncoder::feature_embedding(std::size_t i) const {
  const auto r = embeddings_.row(i);
  return Vector(r.begin(), r.end());
}

bool LinearFeatureEncoder::is_active(double activation) const {
  if (kind_ == LinearKind::Pca || kind_ == LinearKind::Ica) return std::abs(activation) > 1e-12;
  return activation > 0.0;
}

std::string LinearFeatureEncoder::label() const { return to_string(kind_); }

std::string LinearFeatureEncoder::to_json() const {
  json doc{{"version", "lin-v1"},
           {"kind", to_string(kind_)},
           {"m", n_features()},
           {"d", dim()},
           {"weights", codec::pack_f32(weights_.data())},
           {"embeddings", codec::pack_f32(embeddings_.data())},
           {"mean", codec::pack_f32(mean_)},
           {"eigenvalues", codec::pack_f32(eigenvalues_)},
           {"report",
            {{"converged", report.converged},
             {"iterations", report.iterations},
             {"near_zero_eigenvalues", report.near_zero_eigenvalues}}}};
  return doc.dump(1);
}

LinearFeatureEncoder linear_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("encoder file: ") + e.what());
  }
  if (doc.value("version", "") != "lin-v1") throw FormatError("encoder file: expected version lin-v1");
  try {
    const std::size_t m = doc.at("m");
    const std::size_t d = doc.at("d");
    const auto eig = doc.at("eigenvalues").get<std::string>();
    const std::size_t n_eig = codec::base64_decode(eig).size() / 4;
    LinearFeatureEncoder enc(linear_kind_from_string(doc.at("kind")),
                             Matrix(m, d, codec::unpack_f32(doc.at("weights").get<std::string>(), m * d)),
                             Matrix(m, d, codec::unpack_f32(doc.at("embeddings").get<std::string>(), m * d)),
                             codec::unpack_f32(doc.at("mean").get<std::string>(), d), codec::unpack_f32(eig, n_eig));
    if (doc.contains("report")) {
      const auto& r = doc.at("report");
      enc.report.converged = r.value("converged", true);
      enc.report.iterations = r.value("iterations", std::vector<std::size_t>{});
      enc.report.near_zero_eigenvalues = r.value("near_zero_eigenvalues", std::size_t{0});
    }
    return enc;
  } catch (const json::exception& e) {
    throw FormatError(std::string("encoder file: ") + e.what());
  }
}

SymmetricEigen symmetric_eigen(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("symmetric_eigen: matrix not square");
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = a(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric_eigen: solver failed");
  // Eigen sorts ascending; flip to descending.
  SymmetricEigen out{Vector(a.rows()), Matrix(a.rows(), a.rows())};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;
    out.values[static_cast<std::size_t>(k)] = solver.eigenvalues()(src);
    auto vec = solver.eigenvectors().col(src);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    vec.cwiseAbs().maxCoeff(&arg);
    const double sign = vec(arg) < 0 ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < n; ++j) out.vectors(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) = sign * vec(j);
  }
  return out;
}

Matrix sample_covariance(const Matrix& sample, Vector& mean) {
  const std::size_t n = sample.rows();
  const std::size_t d = sample.cols();
  if (n < 2) throw DomainError("sample_covariance: need at least two rows");
  mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) axpy(1.0 / static_cast<double>(n), sample.row(r), mean);
  // Accumulated in batches of rows, matching a streaming estimate.
  Matrix cov(d, d);
  Vector c(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < d; ++k) c[k] = sample(r, k) - mean[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = c[i];
      auto row = cov.row(i);
      for (std::size_t j = i; j < d; ++j) row[j] += ci * c[j];
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  }
  return cov;
}

namespace {

std::size_t count_near_zero(const Vector& values) {
  const double scale = values.empty() ? 0.0 : std::max(std::abs(values.front()), 1e-300);
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [&](double v) { return std::abs(v) <= 1e-10 * scale; }));
}

}  // namespace

LinearFeatureEncoder fit_pca(const Matrix& sample) {
  const std::size_t d = sample.cols();
  if (sample.rows() < d + 1) {
    throw DomainError("fit_pca: need at least d + 1 = " + std::to_string(d + 1) + " samples, got " +
                      std::to_string(sample.rows()));
  }
  Vector mean;
  const Matrix cov = sample_covariance(sample, mean);
  SymmetricEigen eig = symmetric_eigen(cov);
  Matrix weights = eig.vectors;
  LinearFeatureEncoder enc(LinearKind::Pca, weights, eig.vectors, mean, eig.values);
  enc.report.near_zero_eigenvalues = count_near_zero(eig.values);
  return enc;
}

LinearFeatureEncoder fit_fastica(const Matrix& full_sample, const FastIcaConfig& config) {
  const std::size_t d = full_sample.cols();
  const std::size_t n_comp = config.n_components == 0 ? d : config.n_components;
  if (n_comp > d) throw DomainError("fit_fastica: n_components exceeds d");
  if (full_sample.rows() < d + 1) throw DomainError("fit_fastica: need at least d + 1 samples");

  Rng rng(config.seed);
  Matrix sample = full_sample;
  if (full_sample.rows() > config.max_samples) {
    std::vector<std::size_t> idx(full_sample.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(config.max_samples);
    std::sort(idx.begin(), idx.end());
    sample = Matrix(config.max_samples, d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = full_sample.row(idx[r]);
      std::copy(src.begin(), src.end(), sample.row(r).begin());
    }
  }

  Vector mean;
  const Matrix cov = sample_covariance(sample, mean);
  const SymmetricEigen eig = symmetric_eigen(cov);
  LinearFitReport report;
  report.near_zero_eigenvalues = count_near_zero(eig.values);
  // Whitening K = D^{-1/2} E^T over the leading components; near-zero
  // directions are floored so the transform stays finite.
  const double floor = std::max(1e-12, 1e-10 * std::abs(eig.values.front()));
  Matrix K(n_comp, d);
  Vector sqrt_vals(n_comp);
  for (std::size_t k = 0; k < n_comp; ++k) {
    sqrt_vals[k] = std::sqrt(std::max(eig.values[k], floor));
    for (std::size_t j = 0; j < d; ++j) K(k, j) = eig.vectors(k, j) / sqrt_vals[k];
  }

  const std::size_t N = sample.rows();
  Matrix Z(N, n_comp);
  Vector c(d);
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t j = 0; j < d; ++j) c[j] = sample(r, j) - mean[j];
    const Vector z = matvec(K, c);
    std::copy(z.begin(), z.end(), Z.row(r).begin());
  }

  Matrix W(n_comp, n_comp);
  const double inv_n = 1.0 / static_cast<double>(N);
  Vector u(N);
  for (std::size_t p = 0; p < n_comp; ++p) {
    Vector w(n_comp);
    for (double& v : w) v = rng.normal();
    auto project_out = [&](Vector& v) {
      for (std::size_t q = 0; q < p; ++q) axpy(-dot(v, W.row(q)), W.row(q), v);
      const double nv = norm(v);
      for (double& x : v) x /= nv;
    };
    project_out(w);
    Vector best = w;
    double best_lim = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::size_t it = 0;
    for (; it < config.max_iterations; ++it) {
      Vector w_new(n_comp, 0.0);
      double mean_gprime = 0.0;
      for (std::size_t r = 0; r < N; ++r) {
        const double g = std::tanh(dot(Z.row(r), w));
        axpy(g * inv_n, Z.row(r), w_new);
        mean_gprime += (1.0 - g * g) * inv_n;
      }
      axpy(-mean_gprime, w, w_new);
      project_out(w_new);
      const double lim = std::abs(std::abs(dot(w_new, w)) - 1.0);
      w = std::move(w_new);
      if (lim < best_lim) {
        best_lim = lim;
        best = w;
      }
      if (lim < config.tolerance) {
        converged = true;
        ++it;
        break;
      }
    }
    if (!converged) {
      w = best;
      report.converged = false;
    }
    report.iterations.push_back(it);
    std::copy(w.begin(), w.end(), W.row(p).begin());
  }

  // Unmixing in input space: W K. Mixing columns: E_n D^{1/2} W^T.
  Matrix weights(n_comp, d);
  Matrix embeddings(n_comp, d);
  for (std::size_t i = 0; i < n_comp; ++i) {
    for (std::size_t k = 0; k < n_comp; ++k) {
      axpy(W(i, k), K.row(k), weights.row(i));
      axpy(W(i, k) * sqrt_vals[k], eig.vectors.row(k), embeddings.row(i));
    }
  }
  Vector kept(eig.values.begin(), eig.values.begin() + static_cast<long>(n_comp));
  LinearFeatureEncoder enc(LinearKind::Ica, std::move(weights), std::move(embeddings), std::move(mean), std::move(kept));
  enc.report = std::move(report);
  return enc;
}

LinearFeatureEncoder make_identity(std::size_t d) {
  return LinearFeatureEncoder(LinearKind::Identity, Matrix::identity(d), Matrix::identity(d), Vector(d, 0.0), {});
}

LinearFeatureEncoder make_random(std::size_t d, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  Matrix w(m, d);
  for (double& v : w.data()) v = rng.normal();
  Matrix h = w;
  for (std::size_t i = 0; i < m; ++i) {
    auto row = h.row(i);
    const double n = norm(row);
    for (double& v : row) v /= n;
  }
  return LinearFeatureEncoder(LinearKind::Random, std::move(w), std::move(h), Vector(d, 0.0), {});
}

}  // namespace superlex
