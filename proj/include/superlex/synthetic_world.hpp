#pragma once

// Ground-truth superposition world: planted unit-norm concept directions,
// a vocabulary whose tokens carry sparse nonnegative concept mixtures, and a
// code map that turns concept presence into multilabel targets. Every
// experiment is checked against this oracle.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "superlex/numerics.hpp"

namespace superlex {

using TokenId = std::uint32_t;
inline constexpr TokenId kPadToken = 0;

struct ConceptWeight {
  std::uint32_t concept_id = 0;
  double weight = 0.0;
  bool operator==(const ConceptWeight&) const = default;
};

struct WorldSpec {
  std::size_t d = 64;
  std::size_t n_concepts = 32;
  std::size_t n_codes = 128;
  // Real tokens get ids 1..vocab_size; id 0 is the pad token.
  std::size_t vocab_size = 256;
  double polysemantic_fraction = 0.2;
  std::size_t stopword_count = 12;
  double noise_sigma = 0.0;
  std::size_t concepts_per_code = 1;
  std::uint64_t seed = 7;
  // Gram-Schmidt the concept rows when n_concepts <= d.
  bool orthogonalize = true;
  // A code fires when a supporting concept appears with at least this weight.
  double label_threshold = 0.5;

  void validate() const;  // throws ConfigError naming the offending field
  bool operator==(const WorldSpec&) const = default;
};

struct CodeInfo {
  std::vector<std::uint32_t> concepts;
  // Monosemantic tokens naming one of the code's concepts.
  std::vector<TokenId> description;
  bool operator==(const CodeInfo&) const = default;
};

struct World {
  WorldSpec spec;
  Matrix concepts;  // n_concepts x d, unit rows
  // Indexed by token id; entry 0 (pad) is empty.
  std::vector<std::vector<ConceptWeight>> token_table;
  std::vector<CodeInfo> code_map;
  std::vector<TokenId> stopword_ids;
  // Inverse of code_map: the codes each concept drives.
  std::vector<std::vector<std::uint32_t>> concept_codes;

  std::size_t d() const { return spec.d; }
  std::size_t n_codes() const { return spec.n_codes; }
  std::size_t vocab_size() const { return spec.vocab_size; }
  bool is_stopword(TokenId t) const;
  // Noiseless embedding of a vocabulary token.
  Vector token_embedding(TokenId t) const;
  // Concept-space weight vector (length n_concepts) of a vocabulary token.
  Vector concept_vector(TokenId t) const;

  bool operator==(const World&) const = default;
};

struct Note {
  std::vector<TokenId> token_ids;
  std::vector<Vector> embeddings;
  std::vector<std::uint8_t> is_pad;
  std::vector<std::uint8_t> labels;  // length n_codes, 0/1
  std::vector<std::vector<ConceptWeight>> concept_trace;

  std::size_t size() const { return token_ids.size(); }
  std::size_t non_pad_count() const;
};

World generate_world(const WorldSpec& spec);

// Draws `length` content tokens uniformly from the vocabulary, then appends
// `pad_count` pad tokens.
Note sample_note(const World& world, std::size_t length, std::uint64_t seed,
                 std::size_t pad_count = 0);

std::vector<Note> sample_notes(const World& world, std::size_t count, std::size_t length,
                               std::size_t pad_count, std::uint64_t seed);

std::vector<std::uint8_t> derive_labels(const World& world,
                                        const std::vector<std::vector<ConceptWeight>>& trace);

const std::vector<ConceptWeight>& oracle_active_concepts(const World& world, const Note& note,
                                                         std::size_t t);

// Probability that a uniformly sampled vocabulary token carries concept j.
Vector concept_token_frequencies(const World& world);

// Non-pad embeddings of all notes, stacked row-wise.
Matrix collect_embeddings(const std::vector<Note>& notes);

std::string world_to_json(const World& world);
World world_from_json(const std::string& text);
std::string world_hash(const World& world);

// Notes stream: "SXW1", u32 d, u32 token count, then per token u32 id,
// u8 pad flag and d little-endian f32 values. Note boundaries and labels go
// to a JSON index next to it.
std::string encode_notes_stream(const std::vector<Note>& notes, std::size_t d);
std::string encode_notes_index(const std::vector<Note>& notes);
std::vector<Note> decode_notes(const World& world, const std::string& stream,
                               const std::string& index_json);

}  // namespace superlex
