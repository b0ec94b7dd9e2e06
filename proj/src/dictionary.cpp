#include "superlex/dictionary.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "superlex/intervention.hpp"

namespace superlex {

using nlohmann::json;

bool DictionaryEntry::has_code(std::uint32_t code) const {
  return std::any_of(top_codes.begin(), top_codes.end(), [&](const TopCode& c) { return c.code == code; });
}

const DictionaryEntry* Dictionary::find(std::uint32_t feature) const {
  auto it = entries.find(feature);
  return it == entries.end() ? nullptr : &it->second;
}

bool top_token_before(const TopToken& a, const TopToken& b) {
  const double ma = std::abs(a.activation);
  const double mb = std::abs(b.activation);
  if (ma != mb) return ma > mb;
  if (a.note_id != b.note_id) return a.note_id < b.note_id;
  return a.token_index < b.token_index;
}

namespace {

struct Accumulator {
  std::vector<std::vector<TopToken>> tokens;  // per feature, kept at <= k after pruning
  std::vector<double> max_drop;               // m x C
  std::vector<std::uint8_t> seen;
};

void prune(std::vector<TopToken>& v, std::size_t k) {
  std::sort(v.begin(), v.end(), top_token_before);
  if (v.size() > k) v.resize(k);
}

void scan_note(const FeatureEncoder& encoder, const LabelHead& head, const Note& note, std::uint32_t note_id,
               std::size_t k, Accumulator& acc) {
  const std::size_t T = note.size();
  const std::size_t m = encoder.n_features();
  const std::size_t C = head.n_codes();
  std::vector<Vector> codes(T);
  for (std::size_t t = 0; t < T; ++t)
    if (!note.is_pad[t]) codes[t] = encoder.encode_dense(note.embeddings[t]);
  auto active = [&](std::size_t t, std::size_t i) { return !note.is_pad[t] && encoder.is_active(codes[t][i]); };

  const ScoredNote scored(head, note);
  for (std::size_t t = 0; t < T; ++t) {
    if (note.is_pad[t]) continue;
    for (std::size_t i = 0; i < m; ++i) {
      if (!active(t, i)) continue;
      acc.seen[i] = 1;

      // Pass 1: top-k activations with spans and context.
      auto& list = acc.tokens[i];
      TopToken cand{note.token_ids[t], codes[t][i], note_id, static_cast<std::uint32_t>(t), 0, 0, {}};
      const bool qualifies = list.size() < k || top_token_before(cand, list.back());
      if (qualifies) {
        std::size_t lo = t, hi = t;
        while (lo > 0 && active(lo - 1, i)) --lo;
        while (hi + 1 < T && active(hi + 1, i)) ++hi;
        cand.span_begin = static_cast<std::uint32_t>(lo);
        cand.span_end = static_cast<std::uint32_t>(hi);
        const std::size_t c_lo = lo >= kContextRadius ? lo - kContextRadius : 0;
        const std::size_t c_hi = std::min(T - 1, hi + kContextRadius);
        for (std::size_t u = c_lo; u <= c_hi; ++u) cand.context.push_back(note.token_ids[u]);
        list.insert(std::upper_bound(list.begin(), list.end(), cand, top_token_before), std::move(cand));
        if (list.size() > k) list.pop_back();
      }

      // Pass 2: one-feature ablation, max drop per code.
      const Vector xt = ablate_feature(note.embeddings[t], codes[t][i], encoder.feature_embedding(i));
      const Vector after = scored.probs_with(t, xt);
      double* drops = &acc.max_drop[i * C];
      for (std::size_t c = 0; c < C; ++c) drops[c] = std::max(drops[c], scored.probs()[c] - after[c]);
    }
  }
}

}  // namespace

Dictionary build_dictionary(const FeatureEncoder& encoder, const LabelHead& head, std::span<const Note> notes,
                            const BuildOptions& options) {
  if (notes.empty()) throw DomainError("build_dictionary: empty note stream");
  if (encoder.dim() != head.dim()) throw ShapeError("build_dictionary: encoder and head disagree on d");
  if (options.k == 0) throw ConfigError("dictionary.k must be >= 1");
  const std::size_t m = encoder.n_features();
  const std::size_t C = head.n_codes();

  constexpr std::size_t kShards = 8;
  std::vector<Accumulator> shards(kShards);
  for (auto& a : shards) {
    a.tokens.assign(m, {});
    a.max_drop.assign(m * C, 0.0);
    a.seen.assign(m, 0);
  }
  parallel_shards(kShards, [&](std::size_t s) {
    for (std::size_t n = s; n < notes.size(); n += kShards)
      scan_note(encoder, head, notes[n], static_cast<std::uint32_t>(n), options.k, shards[s]);
  });

  Dictionary dict;
  dict.provenance = {encoder.label(), encoder.model_hash(), options.world_hash, notes.size(), options.k, options.seed};
  for (std::size_t i = 0; i < m; ++i) {
    bool seen = false;
    std::vector<TopToken> merged;
    std::vector<double> drops(C, 0.0);
    for (auto& a : shards) {
      seen = seen || a.seen[i];
      merged.insert(merged.end(), a.tokens[i].begin(), a.tokens[i].end());
      for (std::size_t c = 0; c < C; ++c) drops[c] = std::max(drops[c], a.max_drop[i * C + c]);
    }
    if (!seen) continue;
    prune(merged, options.k);
    DictionaryEntry entry{static_cast<std::uint32_t>(i), std::move(merged), {}};
    for (std::size_t c = 0; c < C; ++c)
      if (drops[c] > 0.0) entry.top_codes.push_back({static_cast<std::uint32_t>(c), drops[c]});
    std::sort(entry.top_codes.begin(), entry.top_codes.end(), [](const TopCode& a, const TopCode& b) {
      return a.drop != b.drop ? a.drop > b.drop : a.code < b.code;
    });
    if (entry.top_codes.size() > options.top_codes) entry.top_codes.resize(options.top_codes);
    dict.entries.emplace(static_cast<std::uint32_t>(i), std::move(entry));
  }
  return dict;
}

std::vector<QueryHit> query_dictionary(const Dictionary& dict, const FeatureEncoder& encoder,
                                       std::span<const double> x, double activation_percentile) {
  const Vector f = encoder.encode_dense(x);
  Vector magnitudes(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) magnitudes[i] = std::abs(f[i]);
  const double threshold = percentile(magnitudes, activation_percentile);
  std::vector<QueryHit> hits;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!encoder.is_active(f[i]) || magnitudes[i] < threshold) continue;
    const auto* e = dict.find(static_cast<std::uint32_t>(i));
    hits.push_back({static_cast<std::uint32_t>(i), f[i], e ? std::optional<DictionaryEntry>(*e) : std::nullopt});
  }
  std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
    const double ma = std::abs(a.activation), mb = std::abs(b.activation);
    return ma != mb ? ma > mb : a.feature < b.feature;
  });
  return hits;
}

Explanation autocode_explain(const Dictionary& dict, const FeatureEncoder& encoder, const LabelHead& head,
                             const Note& note, std::uint32_t code) {
  if (code >= head.n_codes()) throw DomainError("explain: code id out of range");
  Explanation ex;
  ex.code = code;
  ex.probability = predict_probs(head, note)[code];
  const auto attention = attention_scores(head, note.embeddings, note.is_pad);
  const auto highlighted = highlight_tokens(head, note, kHighlightPercentile);
  for (std::size_t t : highlighted[code]) {
    ExplainedToken tok{t, note.token_ids[t], attention.scores(code, t),
                       query_dictionary(dict, encoder, note.embeddings[t], kQueryPercentile)};
    for (const auto& h : tok.features)
      if (h.entry && h.entry->has_code(code)) ex.hit = true;
    ex.tokens.push_back(std::move(tok));
  }
  return ex;
}

std::string dictionary_to_json(const Dictionary& dict) {
  json entries = json::object();
  for (const auto& [id, e] : dict.entries) {
    json toks = json::array();
    for (const auto& t : e.top_tokens) {
      toks.push_back({{"token", t.token_id},
                      {"activation", t.activation},
                      {"note", t.note_id},
                      {"index", t.token_index},
                      {"span", {t.span_begin, t.span_end}},
                      {"context", t.context}});
    }
    json codes = json::array();
    for (const auto& c : e.top_codes) codes.push_back({c.code, c.drop});
    entries[std::to_string(id)] = {{"top_tokens", std::move(toks)}, {"top_codes", std::move(codes)}};
  }
  const auto& p = dict.provenance;
  json doc{{"version", "dict-v1"},
           {"provenance",
            {{"encoder", p.encoder_label},
             {"encoder_hash", p.encoder_hash},
             {"world_hash", p.world_hash},
             {"sample_size", p.sample_size},
             {"k", p.k},
             {"seed", p.seed}}},
           {"entries", std::move(entries)}};
  return doc.dump(1);
}

Dictionary dictionary_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("dictionary file: ") + e.what());
  }
  if (doc.value("version", "") != "dict-v1") throw FormatError("dictionary file: expected version dict-v1");
  if (!doc.contains("provenance")) throw FormatError("dictionary file: provenance block missing");
  try {
    Dictionary dict;
    const auto& p = doc.at("provenance");
    dict.provenance = {p.at("encoder"), p.at("encoder_hash"), p.at("world_hash"),
                       p.at("sample_size"), p.at("k"), p.at("seed")};
    for (const auto& [key, e] : doc.at("entries").items()) {
      DictionaryEntry entry;
      entry.feature = static_cast<std::uint32_t>(std::stoul(key));
      for (const auto& t : e.at("top_tokens")) {
        entry.top_tokens.push_back({t.at("token"), t.at("activation"), t.at("note"), t.at("index"),
                                    t.at("span").at(0), t.at("span").at(1),
                                    t.at("context").get<std::vector<TokenId>>()});
      }
      for (const auto& c : e.at("top_codes")) entry.top_codes.push_back({c.at(0), c.at(1)});
      dict.entries.emplace(entry.feature, std::move(entry));
    }
    return dict;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dictionary file: ") + e.what());
  }
}

void verify_provenance(const Dictionary& dict, const FeatureEncoder& encoder, const std::string& world_hash) {
  if (dict.provenance.encoder_hash != encoder.model_hash())
    throw FormatError("dictionary provenance: encoder hash does not match the supplied model");
  if (!world_hash.empty() && dict.provenance.world_hash != world_hash)
    throw FormatError("dictionary provenance: world hash does not match the supplied world");
  for (const auto& [id, e] : dict.entries)
    if (id >= encoder.n_features()) throw FormatError("dictionary: feature id " + std::to_string(id) + " >= m");
}

}  // namespace superlex
