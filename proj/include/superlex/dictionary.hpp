#pragma once

// The literal dictionary: for every feature, the tokens that activate it
// most strongly (with their surrounding context) and the codes whose
// probability drops most when the feature is ablated.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "superlex/encoder.hpp"
#include "superlex/laat_head.hpp"
#include "superlex/synthetic_world.hpp"

namespace superlex {

inline constexpr std::size_t kContextRadius = 3;
inline constexpr std::size_t kTopCodes = 10;
inline constexpr double kQueryPercentile = 96.5;
inline constexpr double kHighlightPercentile = 95.0;

struct TopToken {
  TokenId token_id = 0;
  double activation = 0.0;
  std::uint32_t note_id = 0;
  std::uint32_t token_index = 0;
  // Contiguous run of same-note neighbours on which the feature is active.
  std::uint32_t span_begin = 0;
  std::uint32_t span_end = 0;  // inclusive
  // Token ids of [span_begin - 3, span_end + 3], clipped to the note.
  std::vector<TokenId> context;

  bool operator==(const TopToken&) const = default;
};

struct TopCode {
  std::uint32_t code = 0;
  double drop = 0.0;
  bool operator==(const TopCode&) const = default;
};

struct DictionaryEntry {
  std::uint32_t feature = 0;
  std::vector<TopToken> top_tokens;  // activation magnitude desc
  std::vector<TopCode> top_codes;    // drop desc, only positive drops

  bool has_code(std::uint32_t code) const;
  bool operator==(const DictionaryEntry&) const = default;
};

struct Provenance {
  std::string encoder_label;
  std::string encoder_hash;
  std::string world_hash;
  std::size_t sample_size = 0;  // notes scanned
  std::size_t k = 10;
  std::uint64_t seed = 0;
  bool operator==(const Provenance&) const = default;
};

struct Dictionary {
  std::map<std::uint32_t, DictionaryEntry> entries;
  Provenance provenance;

  const DictionaryEntry* find(std::uint32_t feature) const;
  bool operator==(const Dictionary&) const = default;
};

// Ranking used for top tokens: larger |activation| first, then note id,
// then token index.
bool top_token_before(const TopToken& a, const TopToken& b);

struct BuildOptions {
  std::size_t k = 10;
  std::size_t top_codes = kTopCodes;
  std::string world_hash;
  std::uint64_t seed = 0;
};

Dictionary build_dictionary(const FeatureEncoder& encoder, const LabelHead& head, std::span<const Note> notes,
                            const BuildOptions& options = {});

struct QueryHit {
  std::uint32_t feature = 0;
  double activation = 0.0;
  // nullopt when the feature never fired while the dictionary was built.
  std::optional<DictionaryEntry> entry;
};

// Active features whose |activation| reaches the nearest-rank
// `activation_percentile` of all m activation magnitudes of x.
std::vector<QueryHit> query_dictionary(const Dictionary& dict, const FeatureEncoder& encoder,
                                       std::span<const double> x, double activation_percentile = kQueryPercentile);

struct ExplainedToken {
  std::size_t token_index = 0;
  TokenId token_id = 0;
  double attention = 0.0;
  std::vector<QueryHit> features;
};

struct Explanation {
  std::uint32_t code = 0;
  double probability = 0.0;
  std::vector<ExplainedToken> tokens;
  bool hit = false;  // code appears among some returned feature's top codes
};

Explanation autocode_explain(const Dictionary& dict, const FeatureEncoder& encoder, const LabelHead& head,
                             const Note& note, std::uint32_t code);

std::string dictionary_to_json(const Dictionary& dict);
Dictionary dictionary_from_json(const std::string& text);
// Throws FormatError when the provenance hashes disagree with the inputs.
void verify_provenance(const Dictionary& dict, const FeatureEncoder& encoder, const std::string& world_hash);

}  // namespace superlex
