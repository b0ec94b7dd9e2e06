// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 3, 5, 6 and 7 share one pipeline workspace built
// with the default config (seed 7); the rest use small standalone fixtures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "superlex/baseline_encoders.hpp"
#include "superlex/codec.hpp"
#include "superlex/dictionary.hpp"
#include "superlex/evaluation.hpp"
#include "superlex/intervention.hpp"
#include "superlex/pipeline.hpp"
#include "superlex/sparse_autoencoder.hpp"

using namespace superlex;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail, double seconds) {
  std::printf("%s criterion %2d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs `body`, which returns (ok, detail); exceptions count as failures.
void criterion(int id, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::pair<bool, std::string> out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  report(id, out.first, out.second, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Matrix normal_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (auto& v : m.storage()) v = rng.normal();
  return m;
}

// ---- criterion 2 helpers -------------------------------------------------

bool away_from_kinks(const DictionaryModel& model, const Matrix& batch, const SaeTrainConfig& cfg, double margin) {
  Vector mean(model.m(), 0.0);
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    const Vector pre = model.preactivation(batch.row(b));
    for (std::size_t i = 0; i < pre.size(); ++i) {
      if (std::abs(pre[i]) < margin) return false;
      if (model.variant() == SaeVariant::Spine && std::abs(pre[i] - 1.0) < margin) return false;
      mean[i] += model.activate(pre[i]) / static_cast<double>(batch.rows());
    }
  }
  if (model.variant() == SaeVariant::Spine)
    for (double f : mean)
      if (std::abs(f - cfg.rho) < margin) return false;
  return true;
}

double worst_gradient_error(DictionaryModel model, const Matrix& batch, const SaeTrainConfig& cfg) {
  const SaeGradients g = sae_gradients(model, batch, cfg);
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = sae_loss(model, batch, cfg);
    slot = keep - h;
    const double down = sae_loss(model, batch, cfg);
    slot = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}));
  };
  for (std::size_t k = 0; k < model.mutable_encoder().size(); ++k)
    probe(model.mutable_encoder().storage()[k], g.encoder.storage()[k]);
  for (std::size_t k = 0; k < model.m(); ++k) probe(model.mutable_encoder_bias()[k], g.encoder_bias[k]);
  for (std::size_t k = 0; k < model.mutable_decoder_rows().size(); ++k)
    probe(model.mutable_decoder_rows().storage()[k], g.decoder_rows.storage()[k]);
  for (std::size_t k = 0; k < model.d(); ++k) probe(model.mutable_decoder_bias()[k], g.decoder_bias[k]);
  return worst;
}

// ---- shared trained fixture -------------------------------------------------

struct Trained {
  std::unique_ptr<Workspace> ws;
  std::vector<StopwordQuery> queries;
};

Trained& trained() {
  static Trained t = [] {
    Trained out;
    const fs::path dir = fs::temp_directory_path() / "superlex-acceptance";
    fs::remove_all(dir);
    out.ws = std::make_unique<Workspace>(RunConfig{}, dir);
    Workspace& ws = *out.ws;
    run_gen_world(ws);
    for (const char* c : {"head", "sae-l1", "random"}) run_train(ws, c);
    run_build_dict(ws, {"sae-l1", "random"});
    out.queries =
        collect_stopword_queries(ws.world(), ws.head(), ws.notes("test"), Rng::derive(ws.config().seed, 41));
    return out;
  }();
  return t;
}

}  // namespace

int main() {
  criterion(1, [] {
    const double a = *ratio_of(0.837, 2.568), b = *ratio_of(0.862, 2.703);
    const bool ok = std::abs(a - 0.326) < 5e-4 && std::abs(b - 0.319) < 5e-4;
    return std::pair{ok, fmt("ratios %.4f and %.4f (want 0.326, 0.319)", a, b)};
  });

  criterion(2, [] {
    double worst = 0.0;
    int checked = 0;
    for (auto variant : {SaeVariant::L1, SaeVariant::Spine}) {
      SaeTrainConfig cfg;
      cfg.lambda_l1 = 0.05;
      cfg.rho = 0.15;
      cfg.lambda1 = 0.7;
      cfg.lambda2 = 1.3;
      int per_variant = 0;
      for (std::uint64_t seed = 1; seed < 500 && per_variant < 3; ++seed) {
        DictionaryModel m = DictionaryModel::initialize(variant, 6, 10, seed);
        Rng rng(seed + 1000);
        for (auto& x : m.mutable_encoder_bias()) x = rng.normal(0.0, 0.3);
        for (auto& x : m.mutable_decoder_bias()) x = rng.normal(0.0, 0.3);
        const Matrix batch = normal_matrix(variant == SaeVariant::L1 ? 8 : 4, 6, rng);
        if (!away_from_kinks(m, batch, cfg, 1e-3)) continue;
        worst = std::max(worst, worst_gradient_error(m, batch, cfg));
        ++per_variant;
      }
      checked += per_variant;
    }
    return std::pair{checked == 6 && worst < 1e-4,
                     fmt("max relative error %.2e over %.0f models (< 1e-4)", worst, checked)};
  });

  criterion(3, [] {
    Workspace& ws = *trained().ws;
    const auto& sae = ws.encoder("sae-l1");
    const World& w = ws.world();
    const double rec = recovery_fraction(greedy_match(sae, w.concepts), w.concepts.rows(), 0.85);
    double err = 0, sq = 0;
    for (const auto& note : ws.notes("test"))
      for (std::size_t t = 0; t < note.size(); ++t) {
        if (note.is_pad[t]) continue;
        const auto& x = note.embeddings[t];
        const Vector xh = sae.decode_dense(sae.encode_dense(x));
        for (std::size_t k = 0; k < x.size(); ++k) {
          err += (x[k] - xh[k]) * (x[k] - xh[k]);
          sq += x[k] * x[k];
        }
      }
    const double rel = err / sq;
    return std::pair{rec >= 0.9 && rel < 0.05,
                     fmt("recovery %.3f (>= 0.9), held-out MSE %.5f of mean squared norm (< 0.05)", rec, rel)};
  });

  criterion(4, [] {
    Workspace& ws = *trained().ws;
    const auto& sae = dynamic_cast<const DictionaryModel&>(ws.encoder("sae-l1"));
    Rng rng(4);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Vector x(sae.d());
      for (auto& v : x) v = rng.normal(0.0, 0.5);
      const Vector got = ablate_active_features(sae, x);
      const Vector xh = sae.decode(sae.encode(x));
      for (std::size_t k = 0; k < x.size(); ++k)
        worst = std::max(worst, std::abs(got[k] - (x[k] - xh[k] + sae.decoder_bias()[k])));
    }
    return std::pair{worst < 1e-9, fmt("max deviation %.2e over 1000 embeddings (< 1e-9)", worst)};
  });

  criterion(5, [] {
    Workspace& ws = *trained().ws;
    const auto& test = ws.notes("test");
    const auto l1 = comprehensiveness(ws.head(), test, &ws.encoder("sae-l1"), true);
    const auto rnd = comprehensiveness(ws.head(), test, &ws.encoder("random"), true);
    const auto dl = comprehensiveness(ws.head(), test, &ws.encoder("sae-l1"), false);
    const double a = l1.ratio.value_or(-1), b = rnd.ratio.value_or(-1), c = dl.ratio.value_or(-1);
    return std::pair{a > b && a > c,
                     fmt("AutoCodeDL-L1 %.4f > random %.4f and > DL without highlighting %.4f", a, b, c)};
  });

  criterion(6, [] {
    Trained& t = trained();
    Workspace& ws = *t.ws;
    const double l1 = hidden_meaning_score(ws.dictionary("sae-l1"), ws.encoder("sae-l1"), t.queries);
    const double rnd = hidden_meaning_score(ws.dictionary("random"), ws.encoder("random"), t.queries);

    // Chance control: the same queries with uniformly random labels. The
    // exact per-query hit probability is |codes exposed| / C.
    const std::size_t C = ws.world().n_codes();
    Rng rng(Rng::derive(ws.config().seed, 61));
    auto control = t.queries;
    double expected = 0.0, variance = 0.0;
    for (auto& q : control) {
      q.label = static_cast<std::uint32_t>(rng.below(C));
      std::set<std::uint32_t> exposed;
      for (const auto& h : query_dictionary(ws.dictionary("sae-l1"), ws.encoder("sae-l1"), q.embedding))
        if (h.entry)
          for (const auto& c : h.entry->top_codes) exposed.insert(c.code);
      const double p = static_cast<double>(exposed.size()) / static_cast<double>(C);
      expected += p;
      variance += p * (1 - p);
    }
    const double n = static_cast<double>(control.size());
    const double got = hidden_meaning_score(ws.dictionary("sae-l1"), ws.encoder("sae-l1"), control);
    const double sigma = std::sqrt(variance) / n;
    expected /= n;
    const bool ok = l1 >= 0.8 && l1 - rnd >= 0.2 && std::abs(got - expected) <= 3 * sigma;
    return std::pair{ok, fmt("L1 %.3f (>= 0.8), random %.3f, chance control %.4f vs expected %.4f", l1, rnd, got,
                             expected) +
                             fmt(" (3 sigma = %.4f, %.0f queries)", 3 * sigma, n)};
  });

  criterion(7, [] {
    Workspace& ws = *trained().ws;
    const auto& sae = ws.encoder("sae-l1");
    const World& w = ws.world();
    const auto res = steering_eval(sae, ws.head(), 50.0);
    const auto zero = steering_eval(sae, ws.head(), 0.0);
    std::size_t matched = 0, flipped = 0;
    for (const auto& m : greedy_match(sae, w.concepts)) {
      if (m.cosine < 0.85) continue;
      ++matched;
      const auto& f = res.features[m.feature].flipped;
      const auto& codes = w.concept_codes[m.concept_id];
      if (!codes.empty() && std::all_of(codes.begin(), codes.end(), [&](std::uint32_t c) {
            return std::find(f.begin(), f.end(), c) != f.end();
          }))
        ++flipped;
    }
    const double frac = matched ? static_cast<double>(flipped) / matched : 0.0;
    return std::pair{matched > 0 && frac >= 0.8 && zero.report.code_flips == 0,
                     fmt("%.0f of %.0f matched features flip every mapped code (%.3f >= 0.8); clamp 0 flips %.0f",
                         flipped, matched, frac, zero.report.code_flips)};
  });

  criterion(8, [] {
    // Sparse side: identity-ReLU over m = 200 with at most 7 positive inputs.
    const std::size_t m = 200;
    const auto id = make_identity(m);
    Rng rng(8);
    std::size_t mismatches = 0, trials = 0;
    for (int trial = 0; trial < 500; ++trial) {
      Vector x(m);
      for (auto& v : x) v = -std::abs(rng.normal());
      const std::size_t k = 1 + rng.below(7);  // <= 3.5% of 200
      std::set<std::uint32_t> nonzero;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = rng.below(m);
        x[i] = rng.uniform(0.01, 3.0);
        nonzero.insert(static_cast<std::uint32_t>(i));
      }
      std::set<std::uint32_t> got;
      for (const auto& h : query_dictionary(Dictionary{}, id, x)) got.insert(h.feature);
      mismatches += got != nonzero;
      ++trials;
    }
    // Trained SAE codes on held-out tokens with at most 3.5% active.
    Workspace& ws = *trained().ws;
    const auto& sae = ws.encoder("sae-l1");
    std::size_t sae_checked = 0;
    for (const auto& note : ws.notes("test"))
      for (std::size_t t = 0; t < note.size(); ++t) {
        if (note.is_pad[t]) continue;
        const Vector f = sae.encode_dense(note.embeddings[t]);
        std::set<std::uint32_t> nonzero;
        for (std::size_t i = 0; i < f.size(); ++i)
          if (f[i] > 0.0) nonzero.insert(static_cast<std::uint32_t>(i));
        if (nonzero.size() > 0.035 * f.size()) continue;
        std::set<std::uint32_t> got;
        for (const auto& h : query_dictionary(ws.dictionary("sae-l1"), sae, note.embeddings[t])) got.insert(h.feature);
        mismatches += got != nonzero;
        ++sae_checked;
      }
    // Highlighting against a brute-force nearest-rank threshold.
    std::size_t hl_mismatch = 0, hl_checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const LabelHead head = LabelHead::initialize(4, 5, 100 + trial, 1.0);
      Note n;
      const std::size_t T = 1 + rng.below(40);
      for (std::size_t t = 0; t < T; ++t) {
        Vector e(5);
        for (auto& v : e) v = rng.normal();
        const bool pad = t + 1 < T && rng.uniform() < 0.15;
        n.token_ids.push_back(pad ? 0 : 1);
        n.embeddings.push_back(pad ? Vector(5, 0.0) : e);
        n.is_pad.push_back(pad);
        n.concept_trace.emplace_back();
      }
      n.labels.assign(4, 0);
      const auto got = highlight_tokens(head, n, 95.0);
      const auto a = attention_scores(head, n.embeddings, n.is_pad);
      for (std::size_t c = 0; c < 4; ++c) {
        std::vector<double> vals;
        for (std::size_t t = 0; t < T; ++t)
          if (!n.is_pad[t]) vals.push_back(a.scores(c, t));
        std::sort(vals.begin(), vals.end());
        long rank = static_cast<long>(std::ceil(0.95 * vals.size() - 1e-9)) - 1;
        rank = std::clamp(rank, 0L, static_cast<long>(vals.size()) - 1);
        std::vector<std::size_t> want;
        for (std::size_t t = 0; t < T; ++t)
          if (!n.is_pad[t] && a.scores(c, t) >= vals[rank]) want.push_back(t);
        hl_mismatch += got[c] != want;
        ++hl_checked;
      }
    }
    return std::pair{mismatches == 0 && hl_mismatch == 0 && sae_checked > 0,
                     fmt("query mismatches %.0f over %.0f codes (%.0f from the trained SAE); ", mismatches,
                         trials + sae_checked, sae_checked) +
                         fmt("highlight mismatches %.0f over %.0f lists", hl_mismatch, hl_checked)};
  });

  criterion(9, [] {
    Rng rng(9);
    Matrix s = normal_matrix(400, 8, rng);
    for (std::size_t r = 0; r < 400; ++r) s(r, 2) += 2 * s(r, 5) - 1.0;
    const auto pca = fit_pca(s);
    double recon = 0, ortho = 0;
    for (std::size_t r = 0; r < 400; ++r) {
      const Vector xh = pca.decode_dense(pca.encode_dense(s.row(r)));
      for (std::size_t k = 0; k < 8; ++k) recon = std::max(recon, std::abs(xh[k] - s(r, k)));
    }
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        ortho = std::max(ortho, std::abs(dot(pca.weights().row(i), pca.weights().row(j)) - (i == j ? 1.0 : 0.0)));

    const std::size_t n = 20000;
    Matrix S(n, 2), X(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      S(r, 0) = rng.uniform(-1, 1);
      S(r, 1) = rng.uniform(-1, 1);
      X(r, 0) = 0.8 * S(r, 0) + 0.6 * S(r, 1);
      X(r, 1) = -0.3 * S(r, 0) + 1.1 * S(r, 1);
    }
    const auto ica = fit_fastica(X, FastIcaConfig{});
    auto corr = [&](std::size_t comp, std::size_t src) {
      double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const double a = ica.encode_dense(X.row(r))[comp], b = S(r, src);
        sa += a, sb += b, sab += a * b, saa += a * a, sbb += b * b;
      }
      const double N = static_cast<double>(n);
      return std::abs((sab - sa * sb / N) / std::sqrt((saa - sa * sa / N) * (sbb - sb * sb / N)));
    };
    const double c = std::max(std::min(corr(0, 0), corr(1, 1)), std::min(corr(0, 1), corr(1, 0)));
    return std::pair{recon < 1e-8 && ortho < 1e-8 && c >= 0.95,
                     fmt("PCA reconstruction %.1e, orthonormality %.1e (< 1e-8); ICA |corr| %.4f (>= 0.95)", recon,
                         ortho, c)};
  });

  criterion(10, [] {
    const std::size_t d = 5, C = 6, k = 4;
    Rng rng(10);
    std::vector<Vector> vocab(1, Vector(d, 0.0));
    for (int v = 0; v < 15; ++v) {
      Vector e(d);
      for (auto& x : e) x = rng.normal();
      vocab.push_back(e);
    }
    std::vector<Note> notes;
    for (int n = 0; n < 50; ++n) {
      Note note;
      for (int t = 0; t < 10; ++t) {
        const bool pad = t >= 8;
        const TokenId id = pad ? 0 : static_cast<TokenId>(1 + rng.below(15));
        note.token_ids.push_back(id);
        note.embeddings.push_back(vocab[id]);
        note.is_pad.push_back(pad);
        note.concept_trace.emplace_back();
      }
      note.labels.assign(C, 0);
      notes.push_back(note);
    }
    const auto enc = make_random(d, 12, 3);
    const LabelHead head = LabelHead::initialize(C, d, 4, 1.0);
    const Dictionary dict = build_dictionary(enc, head, notes, {k, kTopCodes, "fixture", 0});

    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < enc.n_features(); ++i) {
      std::vector<TopToken> all;
      std::vector<double> drops(C, 0.0);
      for (std::size_t n = 0; n < notes.size(); ++n)
        for (std::size_t t = 0; t < notes[n].size(); ++t) {
          if (notes[n].is_pad[t]) continue;
          const double f = enc.encode_dense(notes[n].embeddings[t])[i];
          if (f <= 0.0) continue;
          all.push_back({notes[n].token_ids[t], f, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(t), 0, 0,
                         {}});
          const auto delta = probability_delta(
              head, notes[n], t, Intervention::replace(ablate_feature(notes[n].embeddings[t], f, enc.feature_embedding(i))));
          for (std::size_t c = 0; c < C; ++c) drops[c] = std::max(drops[c], delta.delta[c]);
        }
      const auto* e = dict.find(static_cast<std::uint32_t>(i));
      if ((e != nullptr) != !all.empty()) {
        ++mismatches;
        continue;
      }
      if (!e) continue;
      std::sort(all.begin(), all.end(), [](const TopToken& a, const TopToken& b) {
        return a.activation != b.activation ? a.activation > b.activation
                                            : std::pair(a.note_id, a.token_index) < std::pair(b.note_id, b.token_index);
      });
      all.resize(std::min(all.size(), k));
      if (e->top_tokens.size() != all.size()) ++mismatches;
      for (std::size_t r = 0; r < std::min(all.size(), e->top_tokens.size()); ++r) {
        const auto& g = e->top_tokens[r];
        mismatches += g.token_id != all[r].token_id || g.activation != all[r].activation ||
                      g.note_id != all[r].note_id || g.token_index != all[r].token_index;
      }
      std::vector<std::pair<double, std::uint32_t>> codes;
      for (std::uint32_t c = 0; c < C; ++c)
        if (drops[c] > 0.0) codes.push_back({-drops[c], c});
      std::sort(codes.begin(), codes.end());
      if (codes.size() > kTopCodes) codes.resize(kTopCodes);
      if (codes.size() != e->top_codes.size()) ++mismatches;
      for (std::size_t r = 0; r < std::min(codes.size(), e->top_codes.size()); ++r)
        mismatches += e->top_codes[r].code != codes[r].second || std::abs(e->top_codes[r].drop + codes[r].first) > 1e-12;
    }
    const std::string text = dictionary_to_json(dict);
    const bool identical = dictionary_to_json(dictionary_from_json(text)) == text && dictionary_from_json(text) == dict;
    return std::pair{mismatches == 0 && identical && !dict.entries.empty(),
                     fmt("%.0f mismatches over %.0f entries; round trip byte-identical: %.0f", mismatches,
                         dict.entries.size(), identical)};
  });

  criterion(11, [] {
    WorldSpec spec;
    const World w = generate_world(spec);
    const ConceptSimilarity provider(w);
    std::map<std::uint32_t, std::vector<TokenId>> mono;
    for (TokenId t = 1; t <= w.vocab_size(); ++t)
      if (w.token_table[t].size() == 1) mono[w.token_table[t][0].concept_id].push_back(t);
    auto entry = [](const std::vector<TokenId>& ids) {
      DictionaryEntry e;
      for (std::size_t a = 0; a < ids.size(); ++a)
        e.top_tokens.push_back({ids[a], 1.0, 0, static_cast<std::uint32_t>(a), 0, 0, {}});
      return e;
    };
    std::vector<std::vector<TokenId>> groups;
    for (const auto& [concept_id, toks] : mono)
      if (toks.size() >= 4) groups.push_back(toks);
    if (groups.size() < 2) return std::pair{false, std::string("fixture world lacks two concepts with 4 tokens")};
    const auto& a = groups[0];
    const auto& b = groups[1];
    const double mono_score = entry_coherence(entry({a[0], a[1], a[2], a[3]}), provider, 4);
    const double poly_score = entry_coherence(entry({a[0], b[0], a[1], b[1]}), provider, 4);
    const double closed_form = (4.0 / 2 - 1) / (4.0 - 1);
    return std::pair{std::abs(mono_score - 1.0) < 1e-9 && std::abs(poly_score - closed_form) < 1e-9,
                     fmt("monosemantic %.12f (1.0), balanced two-concept %.12f (1/3)", mono_score, poly_score)};
  });

  criterion(12, [] {
    RunConfig cfg;
    cfg.world.d = 16;
    cfg.world.n_concepts = 8;
    cfg.world.n_codes = 32;
    cfg.world.vocab_size = 64;
    cfg.world.stopword_count = 4;
    cfg.notes.train_count = 150;
    cfg.notes.test_count = 60;
    cfg.head.steps = 100;
    cfg.sae_l1.m = 48;
    cfg.sae_l1.steps = 150;
    cfg.sae_spine.m = 48;
    cfg.sae_spine.steps = 150;
    const fs::path dir = fs::temp_directory_path() / "superlex-acceptance-determinism";
    fs::remove_all(dir);
    Workspace ws(cfg, dir);
    run_gen_world(ws);
    for (const auto& c : component_names()) run_train(ws, c);
    run_build_dict(ws, {});
    auto snapshot = [&] {
      std::map<std::string, std::string> files;
      for (const auto& p : run_eval(ws, "all", {})) files[p.string()] = codec::read_file(p);
      for (const auto& e : fs::directory_iterator(ws.root() / "reports"))
        files[e.path().string()] = codec::read_file(e.path());
      return files;
    };
    const auto first = snapshot();
    Workspace again(cfg, dir);
    std::map<std::string, std::string> second;
    for (const auto& p : run_eval(again, "all", {})) second[p.string()] = codec::read_file(p);
    for (const auto& e : fs::directory_iterator(dir / "reports")) second[e.path().string()] = codec::read_file(e.path());
    std::size_t differing = 0;
    for (const auto& [path, bytes] : first) differing += !second.count(path) || second.at(path) != bytes;
    return std::pair{differing == 0 && first.size() == second.size() && first.size() > 10,
                     fmt("%.0f report files compared, %.0f differ", first.size(), differing)};
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
