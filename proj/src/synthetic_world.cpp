#include "superlex/synthetic_world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

#include "superlex/codec.hpp"

namespace superlex {

using nlohmann::json;

void WorldSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("world." + field + ": " + why);
  };
  if (d == 0) fail("d", "must be >= 1");
  if (n_concepts == 0) fail("n_concepts", "must be >= 1");
  if (n_codes == 0) fail("n_codes", "must be >= 1");
  if (n_concepts > vocab_size) fail("n_concepts", "must not exceed vocab_size");
  if (concepts_per_code < 1) fail("concepts_per_code", "must be >= 1");
  if (concepts_per_code > n_concepts) fail("concepts_per_code", "must not exceed n_concepts");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma", "must be >= 0");
  if (!(polysemantic_fraction >= 0.0 && polysemantic_fraction <= 1.0))
    fail("polysemantic_fraction", "must lie in [0, 1]");
  if (!(label_threshold > 0.0)) fail("label_threshold", "must be > 0");
  const auto n_poly = static_cast<std::size_t>(std::llround(polysemantic_fraction * vocab_size));
  if (stopword_count > n_poly) fail("stopword_count", "exceeds the polysemantic token pool");
  if (n_poly > 0 && n_concepts < 2) fail("n_concepts", "polysemantic tokens need >= 2 concepts");
}

bool World::is_stopword(TokenId t) const {
  return std::binary_search(stopword_ids.begin(), stopword_ids.end(), t);
}

Vector World::token_embedding(TokenId t) const {
  Vector x(spec.d, 0.0);
  for (const auto& cw : token_table.at(t)) axpy(cw.weight, concepts.row(cw.concept_id), x);
  return x;
}

Vector World::concept_vector(TokenId t) const {
  Vector v(spec.n_concepts, 0.0);
  for (const auto& cw : token_table.at(t)) v[cw.concept_id] += cw.weight;
  return v;
}

std::size_t Note::non_pad_count() const {
  return static_cast<std::size_t>(std::count(is_pad.begin(), is_pad.end(), 0));
}

namespace {

// Log-uniform on [0.5, 2].
double draw_weight(Rng& rng) { return std::exp(rng.uniform(std::log(0.5), std::log(2.0))); }

Matrix draw_concepts(const WorldSpec& spec, Rng& rng) {
  Matrix g(spec.n_concepts, spec.d);
  for (double& v : g.data()) v = rng.normal();
  const bool ortho = spec.orthogonalize && spec.n_concepts <= spec.d;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto row = g.row(i);
    if (ortho) {
      // Two passes of modified Gram-Schmidt keep G G^T at identity to ~1e-15.
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t j = 0; j < i; ++j) axpy(-dot(row, g.row(j)), g.row(j), row);
    }
    const double n = norm(row);
    for (double& v : row) v /= n;
  }
  return g;
}

}  // namespace

World generate_world(const WorldSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  World w;
  w.spec = spec;
  w.concepts = draw_concepts(spec, rng);

  const std::size_t V = spec.vocab_size;
  const auto n_poly = static_cast<std::size_t>(std::llround(spec.polysemantic_fraction * V));

  std::vector<TokenId> ids(V);
  for (std::size_t i = 0; i < V; ++i) ids[i] = static_cast<TokenId>(i + 1);
  rng.shuffle(ids);
  std::vector<TokenId> poly(ids.begin(), ids.begin() + static_cast<long>(n_poly));
  std::vector<TokenId> mono(ids.begin() + static_cast<long>(n_poly), ids.end());
  std::sort(poly.begin(), poly.end());
  std::sort(mono.begin(), mono.end());

  w.token_table.assign(V + 1, {});
  // Monosemantic tokens cycle through a concept permutation so every concept
  // gets a name token whenever the vocabulary allows it.
  std::vector<std::uint32_t> concept_perm(spec.n_concepts);
  for (std::size_t j = 0; j < spec.n_concepts; ++j) concept_perm[j] = static_cast<std::uint32_t>(j);
  rng.shuffle(concept_perm);
  for (std::size_t i = 0; i < mono.size(); ++i) {
    w.token_table[mono[i]] = {{concept_perm[i % spec.n_concepts], draw_weight(rng)}};
  }
  for (TokenId t : poly) {
    const std::size_t k = std::min<std::size_t>(2 + rng.below(3), spec.n_concepts);
    std::vector<std::uint32_t> pool(spec.n_concepts);
    for (std::size_t j = 0; j < spec.n_concepts; ++j) pool[j] = static_cast<std::uint32_t>(j);
    rng.shuffle(pool);
    std::vector<std::uint32_t> chosen(pool.begin(), pool.begin() + static_cast<long>(k));
    std::sort(chosen.begin(), chosen.end());
    auto& entry = w.token_table[t];
    for (auto c : chosen) entry.push_back({c, draw_weight(rng)});
  }

  std::vector<TokenId> stop_pool = poly;
  rng.shuffle(stop_pool);
  w.stopword_ids.assign(stop_pool.begin(), stop_pool.begin() + static_cast<long>(spec.stopword_count));
  std::sort(w.stopword_ids.begin(), w.stopword_ids.end());

  std::vector<std::uint32_t> code_perm(spec.n_concepts);
  for (std::size_t j = 0; j < spec.n_concepts; ++j) code_perm[j] = static_cast<std::uint32_t>(j);
  rng.shuffle(code_perm);
  w.code_map.resize(spec.n_codes);
  w.concept_codes.assign(spec.n_concepts, {});
  for (std::size_t c = 0; c < spec.n_codes; ++c) {
    auto& info = w.code_map[c];
    for (std::size_t k = 0; k < spec.concepts_per_code; ++k) {
      info.concepts.push_back(code_perm[(c * spec.concepts_per_code + k) % spec.n_concepts]);
    }
    std::sort(info.concepts.begin(), info.concepts.end());
    info.concepts.erase(std::unique(info.concepts.begin(), info.concepts.end()), info.concepts.end());
    for (auto j : info.concepts) w.concept_codes[j].push_back(static_cast<std::uint32_t>(c));
    for (TokenId t : mono) {
      if (std::binary_search(info.concepts.begin(), info.concepts.end(), w.token_table[t][0].concept_id))
        info.description.push_back(t);
    }
  }
  return w;
}

std::vector<std::uint8_t> derive_labels(const World& world,
                                        const std::vector<std::vector<ConceptWeight>>& trace) {
  std::vector<std::uint8_t> labels(world.n_codes(), 0);
  for (const auto& token : trace)
    for (const auto& cw : token)
      if (cw.weight >= world.spec.label_threshold)
        for (auto c : world.concept_codes[cw.concept_id]) labels[c] = 1;
  return labels;
}

Note sample_note(const World& world, std::size_t length, std::uint64_t seed, std::size_t pad_count) {
  if (length == 0) throw DomainError("sample_note: length must be >= 1");
  Rng rng(seed);
  const std::size_t d = world.d();
  Note note;
  const std::size_t T = length + pad_count;
  note.token_ids.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (t < length) {
      const auto id = static_cast<TokenId>(1 + rng.below(world.vocab_size()));
      note.token_ids.push_back(id);
      note.is_pad.push_back(0);
      note.concept_trace.push_back(world.token_table[id]);
      Vector x = world.token_embedding(id);
      if (world.spec.noise_sigma > 0.0)
        for (double& v : x) v += world.spec.noise_sigma * rng.normal();
      note.embeddings.push_back(std::move(x));
    } else {
      note.token_ids.push_back(kPadToken);
      note.is_pad.push_back(1);
      note.concept_trace.emplace_back();
      note.embeddings.emplace_back(d, 0.0);
    }
  }
  note.labels = derive_labels(world, note.concept_trace);
  return note;
}

std::vector<Note> sample_notes(const World& world, std::size_t count, std::size_t length,
                               std::size_t pad_count, std::uint64_t seed) {
  std::vector<Note> notes;
  notes.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    notes.push_back(sample_note(world, length, Rng::derive(seed, i), pad_count));
  return notes;
}

const std::vector<ConceptWeight>& oracle_active_concepts(const World&, const Note& note, std::size_t t) {
  if (t >= note.size()) throw DomainError("oracle_active_concepts: token index out of range");
  return note.concept_trace[t];
}

Vector concept_token_frequencies(const World& world) {
  Vector freq(world.spec.n_concepts, 0.0);
  for (std::size_t t = 1; t < world.token_table.size(); ++t)
    for (const auto& cw : world.token_table[t]) freq[cw.concept_id] += 1.0;
  for (double& f : freq) f /= static_cast<double>(world.vocab_size());
  return freq;
}

Matrix collect_embeddings(const std::vector<Note>& notes) {
  std::size_t n = 0;
  std::size_t d = 0;
  for (const auto& note : notes) {
    n += note.non_pad_count();
    if (!note.embeddings.empty()) d = note.embeddings.front().size();
  }
  Matrix out(n, d);
  std::size_t r = 0;
  for (const auto& note : notes)
    for (std::size_t t = 0; t < note.size(); ++t)
      if (!note.is_pad[t]) std::copy(note.embeddings[t].begin(), note.embeddings[t].end(), out.row(r++).begin());
  return out;
}

namespace {

json spec_to_json(const WorldSpec& s) {
  return json{{"d", s.d},
              {"n_concepts", s.n_concepts},
              {"n_codes", s.n_codes},
              {"vocab_size", s.vocab_size},
              {"polysemantic_fraction", s.polysemantic_fraction},
              {"stopword_count", s.stopword_count},
              {"noise_sigma", s.noise_sigma},
              {"concepts_per_code", s.concepts_per_code},
              {"seed", s.seed},
              {"orthogonalize", s.orthogonalize},
              {"label_threshold", s.label_threshold}};
}

WorldSpec spec_from_json(const json& j) {
  WorldSpec s;
  s.d = j.at("d");
  s.n_concepts = j.at("n_concepts");
  s.n_codes = j.at("n_codes");
  s.vocab_size = j.at("vocab_size");
  s.polysemantic_fraction = j.at("polysemantic_fraction");
  s.stopword_count = j.at("stopword_count");
  s.noise_sigma = j.at("noise_sigma");
  s.concepts_per_code = j.at("concepts_per_code");
  s.seed = j.at("seed");
  s.orthogonalize = j.at("orthogonalize");
  s.label_threshold = j.at("label_threshold");
  return s;
}

}  // namespace

std::string world_to_json(const World& w) {
  json tokens = json::array();
  for (const auto& entry : w.token_table) {
    json e = json::array();
    for (const auto& cw : entry) e.push_back({cw.concept_id, cw.weight});
    tokens.push_back(std::move(e));
  }
  json codes = json::array();
  for (const auto& c : w.code_map) codes.push_back({{"concepts", c.concepts}, {"description", c.description}});
  json doc{{"version", "world-v1"},
           {"spec", spec_to_json(w.spec)},
           {"concept_matrix",
            {{"rows", w.concepts.rows()}, {"cols", w.concepts.cols()}, {"f64", codec::pack_f64(w.concepts.data())}}},
           {"tokens", std::move(tokens)},
           {"codes", std::move(codes)},
           {"stopwords", w.stopword_ids}};
  return doc.dump(1);
}

World world_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("world file: ") + e.what());
  }
  if (doc.value("version", "") != "world-v1") throw FormatError("world file: expected version world-v1");
  try {
    World w;
    w.spec = spec_from_json(doc.at("spec"));
    const auto& cm = doc.at("concept_matrix");
    const std::size_t rows = cm.at("rows");
    const std::size_t cols = cm.at("cols");
    w.concepts = Matrix(rows, cols, codec::unpack_f64(cm.at("f64").get<std::string>(), rows * cols));
    for (const auto& e : doc.at("tokens")) {
      std::vector<ConceptWeight> entry;
      for (const auto& pair : e) entry.push_back({pair.at(0).get<std::uint32_t>(), pair.at(1).get<double>()});
      w.token_table.push_back(std::move(entry));
    }
    w.concept_codes.assign(w.spec.n_concepts, {});
    for (const auto& c : doc.at("codes")) {
      CodeInfo info;
      info.concepts = c.at("concepts").get<std::vector<std::uint32_t>>();
      info.description = c.at("description").get<std::vector<TokenId>>();
      for (auto j : info.concepts) w.concept_codes.at(j).push_back(static_cast<std::uint32_t>(w.code_map.size()));
      w.code_map.push_back(std::move(info));
    }
    w.stopword_ids = doc.at("stopwords").get<std::vector<TokenId>>();
    if (w.token_table.size() != w.spec.vocab_size + 1 || w.code_map.size() != w.spec.n_codes ||
        w.concepts.rows() != w.spec.n_concepts || w.concepts.cols() != w.spec.d) {
      throw FormatError("world file: table sizes disagree with spec");
    }
    return w;
  } catch (const json::exception& e) {
    throw FormatError(std::string("world file: ") + e.what());
  }
}

std::string world_hash(const World& world) { return codec::hash_hex(world_to_json(world)); }

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FormatError("notes stream truncated");
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += 4;
  return v;
}

}  // namespace

std::string encode_notes_stream(const std::vector<Note>& notes, std::size_t d) {
  std::size_t count = 0;
  for (const auto& n : notes) count += n.size();
  std::string out = "SXW1";
  put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(count));
  out.reserve(out.size() + count * (5 + 4 * d));
  for (const auto& n : notes) {
    for (std::size_t t = 0; t < n.size(); ++t) {
      put_u32(out, n.token_ids[t]);
      out.push_back(static_cast<char>(n.is_pad[t]));
      if (n.embeddings[t].size() != d) throw ShapeError("notes stream: embedding length != d");
      for (double v : n.embeddings[t]) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

std::string encode_notes_index(const std::vector<Note>& notes) {
  json arr = json::array();
  std::size_t offset = 0;
  for (const auto& n : notes) {
    std::vector<std::uint32_t> positive;
    for (std::size_t c = 0; c < n.labels.size(); ++c)
      if (n.labels[c]) positive.push_back(static_cast<std::uint32_t>(c));
    arr.push_back({{"offset", offset}, {"length", n.size()}, {"labels", positive}});
    offset += n.size();
  }
  return json{{"version", "notes-v1"}, {"notes", std::move(arr)}}.dump(1);
}

std::vector<Note> decode_notes(const World& world, const std::string& stream, const std::string& index_json) {
  if (stream.size() < 12 || stream.compare(0, 4, "SXW1") != 0) throw FormatError("notes stream: bad magic");
  std::size_t pos = 4;
  const std::size_t d = get_u32(stream, pos);
  const std::size_t count = get_u32(stream, pos);
  if (d != world.d()) throw FormatError("notes stream: d disagrees with world");
  if (stream.size() != 12 + count * (5 + 4 * d)) throw FormatError("notes stream: size disagrees with header");

  json index;
  try {
    index = json::parse(index_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("notes index: ") + e.what());
  }
  if (index.value("version", "") != "notes-v1") throw FormatError("notes index: expected version notes-v1");

  std::vector<Note> notes;
  std::size_t consumed = 0;
  for (const auto& entry : index.at("notes")) {
    const std::size_t length = entry.at("length");
    if (entry.at("offset").get<std::size_t>() != consumed) throw FormatError("notes index: offsets not contiguous");
    Note note;
    for (std::size_t t = 0; t < length; ++t) {
      const TokenId id = get_u32(stream, pos);
      if (id > world.vocab_size()) throw FormatError("notes stream: token id out of vocabulary");
      const auto pad = static_cast<std::uint8_t>(stream[pos++]);
      Vector x(d);
      for (std::size_t k = 0; k < d; ++k) x[k] = std::bit_cast<float>(get_u32(stream, pos));
      note.token_ids.push_back(id);
      note.is_pad.push_back(pad);
      note.embeddings.push_back(std::move(x));
      note.concept_trace.push_back(pad ? std::vector<ConceptWeight>{} : world.token_table[id]);
    }
    note.labels = derive_labels(world, note.concept_trace);
    std::vector<std::uint8_t> stored(world.n_codes(), 0);
    for (auto c : entry.at("labels").get<std::vector<std::uint32_t>>()) stored.at(c) = 1;
    if (stored != note.labels) throw FormatError("notes index: labels disagree with world oracle");
    consumed += length;
    notes.push_back(std::move(note));
  }
  if (consumed != count) throw FormatError("notes index: token count disagrees with stream");
  return notes;
}

}  // namespace superlex
