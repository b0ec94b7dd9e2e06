#include "superlex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "superlex/baseline_encoders.hpp"
#include "superlex/codec.hpp"
#include "superlex/intervention.hpp"

namespace superlex {

using nlohmann::json;

std::optional<double> ratio_of(double top, double nt) {
  if (!(nt > 0.0)) return std::nullopt;
  return top / nt;
}

std::uint32_t most_probable_code(const Vector& probs) {
  if (probs.empty()) throw DomainError("most_probable_code: no codes");
  // max_element keeps the first maximum, i.e. the lowest id.
  return static_cast<std::uint32_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

namespace {

std::vector<std::size_t> selected_tokens(const LabelHead& head, const Note& note, std::uint32_t code,
                                         bool use_highlighting) {
  if (use_highlighting) return highlight_tokens(head, note, kHighlightPercentile)[code];
  std::vector<std::size_t> all;
  for (std::size_t t = 0; t < note.size(); ++t)
    if (!note.is_pad[t]) all.push_back(t);
  return all;
}

}  // namespace

RatioReport comprehensiveness(const LabelHead& head, std::span<const Note> notes, const FeatureEncoder* encoder,
                              bool use_highlighting, AblationKind kind) {
  if (notes.empty()) throw DomainError("comprehensiveness: no notes");
  if (kind == AblationKind::Features && encoder == nullptr)
    throw MisuseError("comprehensiveness: feature ablation needs an encoder");
  RatioReport rep;
  rep.mode = use_highlighting ? "highlighted" : "all-tokens";
  rep.encoder = kind == AblationKind::Token ? "token" : kind == AblationKind::Null ? "null" : encoder->label();
  rep.notes = notes.size();

  std::vector<double> tops(notes.size()), nts(notes.size());
  parallel_shards(notes.size(), [&](std::size_t n) {
    const Note& note = notes[n];
    const Vector before = predict_probs(head, note);
    const std::uint32_t top = most_probable_code(before);
    Note after = note;
    for (std::size_t t : selected_tokens(head, note, top, use_highlighting)) {
      switch (kind) {
        case AblationKind::Features: after.embeddings[t] = ablate_active_features(*encoder, note.embeddings[t]); break;
        case AblationKind::Token: after = apply_intervention(after, t, ablate_token(after, t)); break;
        case AblationKind::Null: break;
      }
    }
    const Vector p = after.non_pad_count() == 0 ? before : predict_probs(head, after);
    if (after.non_pad_count() == 0) throw DomainError("comprehensiveness: token ablation removed every token");
    tops[n] = before[top] - p[top];
    double other = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c)
      if (c != top) other += std::abs(before[c] - p[c]);
    nts[n] = other;
  });
  for (std::size_t n = 0; n < notes.size(); ++n) {
    rep.top += tops[n];
    rep.nt += nts[n];
  }
  rep.top /= static_cast<double>(notes.size());
  rep.nt /= static_cast<double>(notes.size());
  rep.ratio = ratio_of(rep.top, rep.nt);
  return rep;
}

double sufficiency(const LabelHead& head, std::span<const Note> notes, const FeatureEncoder& encoder,
                   bool use_highlighting) {
  if (notes.empty()) throw DomainError("sufficiency: no notes");
  double total = 0.0;
  for (const auto& note : notes) {
    const Vector before = predict_probs(head, note);
    const std::uint32_t top = most_probable_code(before);
    Note after = note;
    for (std::size_t t : selected_tokens(head, note, top, use_highlighting)) {
      const Vector f = encoder.encode_dense(note.embeddings[t]);
      std::size_t best = 0;
      for (std::size_t i = 1; i < f.size(); ++i)
        if (std::abs(f[i]) > std::abs(f[best])) best = i;
      after.embeddings[t] = encoder.is_active(f[best])
                                ? keep_only_feature(f[best], encoder.feature_embedding(best))
                                : Vector(note.embeddings[t].size(), 0.0);
    }
    total += before[top] - predict_probs(head, after)[top];
  }
  return total / static_cast<double>(notes.size());
}

std::vector<StopwordQuery> collect_stopword_queries(const World& world, const LabelHead& head,
                                                    std::span<const Note> notes, std::uint64_t seed) {
  std::vector<StopwordQuery> out;
  for (std::size_t n = 0; n < notes.size(); ++n) {
    const Note& note = notes[n];
    const auto highlighted = highlight_tokens(head, note, kHighlightPercentile);
    for (std::size_t c = 0; c < highlighted.size(); ++c) {
      if (!note.labels[c]) continue;
      for (std::size_t t : highlighted[c]) {
        if (!world.is_stopword(note.token_ids[t])) continue;
        out.push_back({note.embeddings[t], static_cast<std::uint32_t>(c), n, t, note.token_ids[t]});
      }
    }
  }
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

double hidden_meaning_score(const Dictionary& dict, const FeatureEncoder& encoder,
                            std::span<const StopwordQuery> queries, double activation_percentile) {
  if (queries.empty()) {
    throw DomainError("hidden meaning: no highlighted stop words; sample more notes or raise stopword_count");
  }
  std::vector<std::uint8_t> hit(queries.size(), 0);
  parallel_shards(queries.size(), [&](std::size_t q) {
    for (const auto& h : query_dictionary(dict, encoder, queries[q].embedding, activation_percentile)) {
      if (h.entry && h.entry->has_code(queries[q].label)) {
        hit[q] = 1;
        break;
      }
    }
  });
  const auto hits = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double hidden_meaning_accuracy(const Dictionary& dict, const FeatureEncoder& encoder, const LabelHead& head,
                               const World& world, std::span<const Note> notes, std::uint64_t seed) {
  const auto queries = collect_stopword_queries(world, head, notes, seed);
  return hidden_meaning_score(dict, encoder, queries);
}

SteeringResult steering_eval(const FeatureEncoder& encoder, const LabelHead& head, double clamp_value,
                             std::span<const StopwordQuery> queries) {
  if (encoder.dim() != head.dim()) throw ShapeError("steering: encoder and head disagree on d");
  const auto canvas = pad_canvas(encoder.dim());
  const Vector reference = predict_probs(head, reconstruct_canvas(encoder, canvas));
  const std::size_t m = encoder.n_features();
  const std::size_t C = head.n_codes();

  SteeringResult res;
  res.report.clamp_value = clamp_value;
  res.report.encoder = encoder.label();
  res.features.resize(m);
  parallel_shards(m, [&](std::size_t i) {
    const Vector p = predict_probs(head, clamp_feature(encoder, canvas, i, clamp_value));
    FeatureSteering fs{static_cast<std::uint32_t>(i), Vector(C), 0.0, 0, {}};
    for (std::size_t c = 0; c < C; ++c) {
      fs.increase[c] = p[c] - reference[c];
      if (fs.increase[c] >= kFlipThreshold) fs.flipped.push_back(static_cast<std::uint32_t>(c));
    }
    fs.top_code = most_probable_code(fs.increase);
    fs.max_increase = fs.increase[fs.top_code];
    res.features[i] = std::move(fs);
  });

  std::set<std::uint32_t> flipped_codes;
  res.clamp_dictionary.provenance = {encoder.label() + "+clamp", encoder.model_hash(), "", 0, 0, 0};
  for (const auto& fs : res.features) {
    if (!fs.flipped.empty()) ++res.report.meaningful_features;
    flipped_codes.insert(fs.flipped.begin(), fs.flipped.end());
    DictionaryEntry entry{fs.feature, {}, {}};
    for (std::size_t c = 0; c < C; ++c)
      if (fs.increase[c] > 0.0) entry.top_codes.push_back({static_cast<std::uint32_t>(c), fs.increase[c]});
    std::sort(entry.top_codes.begin(), entry.top_codes.end(), [](const TopCode& a, const TopCode& b) {
      return a.drop != b.drop ? a.drop > b.drop : a.code < b.code;
    });
    if (entry.top_codes.size() > kTopCodes) entry.top_codes.resize(kTopCodes);
    res.clamp_dictionary.entries.emplace(fs.feature, std::move(entry));
  }
  res.report.code_flips = flipped_codes.size();
  if (!queries.empty()) res.report.id_accuracy = hidden_meaning_score(res.clamp_dictionary, encoder, queries);
  return res;
}

std::optional<Vector> ConceptSimilarity::representation(TokenId token) const {
  if (token == kPadToken || token > world_.vocab_size()) return std::nullopt;
  return world_.concept_vector(token);
}

std::optional<Vector> EmbeddingSimilarity::representation(TokenId token) const {
  if (token == kPadToken || token > world_.vocab_size()) return std::nullopt;
  return world_.token_embedding(token);
}

double entry_coherence(const DictionaryEntry& entry, const SimilarityProvider& provider, std::size_t k,
                       std::size_t* skipped) {
  if (k < 2) throw DomainError("coherence: k must be >= 2");
  if (entry.top_tokens.size() < k) throw DomainError("coherence: entry has fewer than k tokens");
  std::vector<std::optional<Vector>> reps;
  for (std::size_t a = 0; a < k; ++a) reps.push_back(provider.representation(entry.top_tokens[a].token_id));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      if (!reps[a] || !reps[b] || norm(*reps[a]) == 0.0 || norm(*reps[b]) == 0.0) {
        if (skipped) ++*skipped;
        continue;
      }
      sum += cosine_sim(*reps[a], *reps[b]);
      ++pairs;
    }
  }
  if (pairs == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / static_cast<double>(pairs);
}

CoherenceReport coherence(const Dictionary& dict, const SimilarityProvider& provider, std::size_t k) {
  CoherenceReport rep;
  rep.k = k;
  rep.provider = provider.name();
  double total = 0.0;
  for (const auto& [id, entry] : dict.entries) {
    if (entry.top_tokens.size() < k) continue;
    const double s = entry_coherence(entry, provider, k, &rep.skipped_pairs);
    if (std::isnan(s)) continue;
    total += s;
    ++rep.features_scored;
  }
  if (rep.features_scored > 0) rep.mean = total / static_cast<double>(rep.features_scored);
  return rep;
}

double IntrusionSet::separable_fraction() const {
  if (instances.empty()) return 0.0;
  const auto n = std::count_if(instances.begin(), instances.end(), [](const auto& i) { return i.separable; });
  return static_cast<double>(n) / static_cast<double>(instances.size());
}

IntrusionSet intrusion_instances(const Dictionary& dict, const FeatureEncoder& encoder, const World& world,
                                 std::uint64_t seed) {
  IntrusionSet set;
  set.seed = seed;
  // Which vocabulary tokens activate each feature (noiseless embeddings).
  const std::size_t V = world.vocab_size();
  std::vector<Vector> vocab_codes(V + 1);
  for (TokenId t = 1; t <= V; ++t) vocab_codes[t] = encoder.encode_dense(world.token_embedding(t));

  for (const auto& [id, entry] : dict.entries) {
    if (entry.top_tokens.size() < 4) {
      set.skipped.push_back({id, "fewer than 4 top tokens"});
      continue;
    }
    std::set<TokenId> activating;
    for (const auto& t : entry.top_tokens) activating.insert(t.token_id);
    for (TokenId t = 1; t <= V; ++t)
      if (encoder.is_active(vocab_codes[t][id])) activating.insert(t);
    std::vector<TokenId> candidates;
    for (TokenId t = 1; t <= V; ++t)
      if (!activating.count(t)) candidates.push_back(t);
    if (candidates.empty()) {
      set.skipped.push_back({id, "no valid intruder: feature activates on the whole vocabulary"});
      continue;
    }
    Rng rng(Rng::derive(seed, id));
    const TokenId intruder = candidates[rng.below(candidates.size())];

    struct Slot {
      TokenId token;
      std::vector<TokenId> context;
      bool intruder;
    };
    std::vector<Slot> slots;
    std::set<std::uint32_t> shared;
    for (std::size_t a = 0; a < 4; ++a) {
      slots.push_back({entry.top_tokens[a].token_id, entry.top_tokens[a].context, false});
      for (const auto& cw : world.token_table[entry.top_tokens[a].token_id]) shared.insert(cw.concept_id);
    }
    slots.push_back({intruder, {intruder}, true});
    rng.shuffle(slots);

    IntrusionInstance inst;
    inst.feature = id;
    inst.separable = std::none_of(world.token_table[intruder].begin(), world.token_table[intruder].end(),
                                  [&](const ConceptWeight& cw) { return shared.count(cw.concept_id) > 0; });
    for (std::size_t s = 0; s < slots.size(); ++s) {
      inst.tokens.push_back(slots[s].token);
      inst.contexts.push_back(slots[s].context);
      if (slots[s].intruder) inst.intruder_index = static_cast<std::uint32_t>(s);
    }
    set.instances.push_back(std::move(inst));
  }
  return set;
}

std::string intrusion_to_json(const IntrusionSet& set) {
  json inst = json::array();
  for (const auto& i : set.instances) {
    inst.push_back({{"feature", i.feature},
                    {"tokens", i.tokens},
                    {"contexts", i.contexts},
                    {"intruder_index", i.intruder_index},
                    {"separable", i.separable}});
  }
  json skipped = json::array();
  for (const auto& s : set.skipped) skipped.push_back({{"feature", s.feature}, {"reason", s.reason}});
  return json{{"version", "intrusion-v1"}, {"seed", set.seed}, {"instances", inst}, {"skipped", skipped}}.dump(1);
}

IntrusionSet intrusion_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("intrusion file: ") + e.what());
  }
  if (doc.value("version", "") != "intrusion-v1") throw FormatError("intrusion file: expected version intrusion-v1");
  IntrusionSet set;
  set.seed = doc.at("seed");
  for (const auto& i : doc.at("instances")) {
    set.instances.push_back({i.at("feature"), i.at("tokens").get<std::vector<TokenId>>(),
                             i.at("contexts").get<std::vector<std::vector<TokenId>>>(), i.at("intruder_index"),
                             i.at("separable")});
  }
  for (const auto& s : doc.at("skipped")) set.skipped.push_back({s.at("feature"), s.at("reason")});
  return set;
}

OverlapReport description_overlap(const Dictionary& dict, const World& world, double drop_threshold) {
  OverlapReport rep;
  rep.drop_threshold = drop_threshold;
  double total = 0.0;
  for (const auto& [id, entry] : dict.entries) {
    if (entry.top_codes.empty() || entry.top_codes.front().drop < drop_threshold || entry.top_tokens.empty()) continue;
    std::set<TokenId> description;
    for (const auto& c : entry.top_codes)
      if (c.drop >= drop_threshold)
        description.insert(world.code_map.at(c.code).description.begin(), world.code_map.at(c.code).description.end());
    const auto inside = std::count_if(entry.top_tokens.begin(), entry.top_tokens.end(),
                                      [&](const TopToken& t) { return description.count(t.token_id) > 0; });
    total += static_cast<double>(inside) / static_cast<double>(entry.top_tokens.size());
    ++rep.qualifying;
  }
  if (rep.qualifying > 0) rep.mean = total / static_cast<double>(rep.qualifying);
  return rep;
}

Projection feature_projection_2d(const FeatureEncoder& encoder, std::span<const FeatureSteering> steering) {
  const std::size_t m = encoder.n_features();
  const std::size_t d = encoder.dim();
  if (m < 2) throw DomainError("projection: need at least two features");
  if (d < 2) throw DomainError("projection: need d >= 2");
  if (!steering.empty() && steering.size() != m) throw ShapeError("projection: steering table size != m");
  Matrix h(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    const Vector e = encoder.feature_embedding(i);
    std::copy(e.begin(), e.end(), h.row(i).begin());
  }
  Vector mean;
  const SymmetricEigen eig = symmetric_eigen(sample_covariance(h, mean));
  Projection p;
  p.eigenvalues = {eig.values[0], eig.values[1]};
  Vector c(d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < d; ++k) c[k] = h(i, k) - mean[k];
    ProjectedFeature pt{static_cast<std::uint32_t>(i), dot(eig.vectors.row(0), c), dot(eig.vectors.row(1), c), 0.0, 0};
    if (!steering.empty()) {
      pt.max_increase = steering[i].max_increase;
      pt.top_code = steering[i].top_code;
    }
    p.points.push_back(pt);
  }
  return p;
}

std::string projection_csv(const Projection& p) {
  std::ostringstream out;
  out << "feature_id,x,y,max_increase,top_code\n";
  for (const auto& pt : p.points) {
    out << pt.feature << ',' << codec::fmt9(pt.x) << ',' << codec::fmt9(pt.y) << ',' << codec::fmt9(pt.max_increase)
        << ',' << pt.top_code << '\n';
  }
  return out.str();
}

std::vector<ConceptMatch> greedy_match(const FeatureEncoder& encoder, const Matrix& concepts) {
  const std::size_t m = encoder.n_features();
  const std::size_t n = concepts.rows();
  std::vector<Vector> h(m);
  std::vector<double> hn(m);
  for (std::size_t i = 0; i < m; ++i) {
    h[i] = encoder.feature_embedding(i);
    hn[i] = norm(h[i]);
  }
  std::vector<ConceptMatch> all;
  all.reserve(m * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double gn = norm(concepts.row(j));
    for (std::size_t i = 0; i < m; ++i) {
      if (hn[i] == 0.0 || gn == 0.0) continue;
      all.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i),
                     std::abs(dot(h[i], concepts.row(j))) / (hn[i] * gn)});
    }
  }
  std::sort(all.begin(), all.end(), [](const ConceptMatch& a, const ConceptMatch& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
    return a.feature < b.feature;
  });
  std::vector<std::uint8_t> used_c(n, 0), used_f(m, 0);
  std::vector<ConceptMatch> out;
  for (const auto& cand : all) {
    if (used_c[cand.concept_id] || used_f[cand.feature]) continue;
    used_c[cand.concept_id] = used_f[cand.feature] = 1;
    out.push_back(cand);
    if (out.size() == std::min(n, m)) break;
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.concept_id < b.concept_id; });
  return out;
}

double recovery_fraction(std::span<const ConceptMatch> matches, std::size_t n_concepts, double threshold) {
  if (n_concepts == 0) throw DomainError("recovery_fraction: no concepts");
  const auto n = std::count_if(matches.begin(), matches.end(), [&](const auto& m) { return m.cosine >= threshold; });
  return static_cast<double>(n) / static_cast<double>(n_concepts);
}

}  // namespace superlex
