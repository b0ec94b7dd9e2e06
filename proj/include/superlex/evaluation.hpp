#pragma once

// Metric suite over trained encoders, the label head and the oracle world:
// comprehensiveness ratio, sufficiency, hidden-meaning identification,
// clamp steering, coherence, intrusion instances, description overlap and a
// 2-D projection of the feature embeddings.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "superlex/dictionary.hpp"
#include "superlex/encoder.hpp"
#include "superlex/laat_head.hpp"
#include "superlex/synthetic_world.hpp"

namespace superlex {

// ---- Comprehensiveness -------------------------------------------------

enum class AblationKind { Features, Token, Null };

struct RatioReport {
  double top = 0.0;  // mean drop of each note's most probable code
  double nt = 0.0;   // mean sum of |delta| over the remaining codes
  std::optional<double> ratio;
  std::string encoder;
  std::string mode;  // "highlighted" or "all-tokens"
  std::size_t notes = 0;
};

std::optional<double> ratio_of(double top, double nt);

// Argmax with ties to the lowest code id.
std::uint32_t most_probable_code(const Vector& probs);

// For each note, ablates every active feature of the selected tokens jointly
// (highlighted tokens of the most probable code, or all non-pad tokens).
// `encoder` may be null for Token and Null ablations.
RatioReport comprehensiveness(const LabelHead& head, std::span<const Note> notes, const FeatureEncoder* encoder,
                              bool use_highlighting, AblationKind kind = AblationKind::Features);

// Mean drop of the most probable code when each selected token is replaced
// by its strongest feature alone (f_i h_i).
double sufficiency(const LabelHead& head, std::span<const Note> notes, const FeatureEncoder& encoder,
                   bool use_highlighting);

// ---- Hidden meaning ----------------------------------------------------

struct StopwordQuery {
  Vector embedding;
  std::uint32_t label = 0;
  std::size_t note_id = 0;
  std::size_t token_index = 0;
  TokenId token = 0;
};

// Stop words highlighted (95th percentile) for one of their note's positive
// codes, paired with that code, then shuffled with `seed`.
std::vector<StopwordQuery> collect_stopword_queries(const World& world, const LabelHead& head,
                                                    std::span<const Note> notes, std::uint64_t seed);

// Fraction of queries whose label is among the top codes of some highly
// activated feature. Throws DomainError on an empty query set.
double hidden_meaning_score(const Dictionary& dict, const FeatureEncoder& encoder,
                            std::span<const StopwordQuery> queries, double activation_percentile = kQueryPercentile);

double hidden_meaning_accuracy(const Dictionary& dict, const FeatureEncoder& encoder, const LabelHead& head,
                               const World& world, std::span<const Note> notes, std::uint64_t seed);

// ---- Steering ----------------------------------------------------------

struct FeatureSteering {
  std::uint32_t feature = 0;
  Vector increase;  // p(clamped) - p(reference canvas), per code
  double max_increase = 0.0;
  std::uint32_t top_code = 0;
  std::vector<std::uint32_t> flipped;  // codes with increase >= 0.5
};

struct SteeringReport {
  std::size_t code_flips = 0;
  std::size_t meaningful_features = 0;
  std::optional<double> id_accuracy;
  double clamp_value = 0.0;
  std::string encoder;
};

struct SteeringResult {
  SteeringReport report;
  std::vector<FeatureSteering> features;
  // Per feature, top codes ranked by clamp-induced increase.
  Dictionary clamp_dictionary;
};

// Clamps every feature on a pad canvas. When `queries` is non-empty the
// clamp-built dictionary is scored with hidden_meaning_score.
SteeringResult steering_eval(const FeatureEncoder& encoder, const LabelHead& head, double clamp_value = 50.0,
                             std::span<const StopwordQuery> queries = {});

// ---- Coherence ---------------------------------------------------------

class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::optional<Vector> representation(TokenId token) const = 0;
  virtual std::string name() const = 0;
};

// Concept-space weight vectors from the oracle world.
class ConceptSimilarity final : public SimilarityProvider {
 public:
  explicit ConceptSimilarity(const World& world) : world_(world) {}
  std::optional<Vector> representation(TokenId token) const override;
  std::string name() const override { return "concept"; }

 private:
  const World& world_;
};

// Noiseless token embeddings.
class EmbeddingSimilarity final : public SimilarityProvider {
 public:
  explicit EmbeddingSimilarity(const World& world) : world_(world) {}
  std::optional<Vector> representation(TokenId token) const override;
  std::string name() const override { return "embedding"; }

 private:
  const World& world_;
};

struct CoherenceReport {
  std::size_t k = 0;
  std::optional<double> mean;
  std::size_t features_scored = 0;
  std::size_t skipped_pairs = 0;
  std::string provider;
};

double entry_coherence(const DictionaryEntry& entry, const SimilarityProvider& provider, std::size_t k,
                       std::size_t* skipped = nullptr);
CoherenceReport coherence(const Dictionary& dict, const SimilarityProvider& provider, std::size_t k);

// ---- Intrusion ---------------------------------------------------------

struct IntrusionInstance {
  std::uint32_t feature = 0;
  std::vector<TokenId> tokens;  // 5, shuffled
  std::vector<std::vector<TokenId>> contexts;
  std::uint32_t intruder_index = 0;
  bool separable = false;
  bool operator==(const IntrusionInstance&) const = default;
};

struct IntrusionSkip {
  std::uint32_t feature = 0;
  std::string reason;
  bool operator==(const IntrusionSkip&) const = default;
};

struct IntrusionSet {
  std::vector<IntrusionInstance> instances;
  std::vector<IntrusionSkip> skipped;
  std::uint64_t seed = 0;
  double separable_fraction() const;
  bool operator==(const IntrusionSet&) const = default;
};

IntrusionSet intrusion_instances(const Dictionary& dict, const FeatureEncoder& encoder, const World& world,
                                 std::uint64_t seed);
std::string intrusion_to_json(const IntrusionSet& set);
IntrusionSet intrusion_from_json(const std::string& text);

// ---- Description overlap ----------------------------------------------

struct OverlapReport {
  std::size_t qualifying = 0;
  std::optional<double> mean;
  double drop_threshold = 0.1;
};

OverlapReport description_overlap(const Dictionary& dict, const World& world, double drop_threshold = 0.10);

// ---- Projection --------------------------------------------------------

struct ProjectedFeature {
  std::uint32_t feature = 0;
  double x = 0.0;
  double y = 0.0;
  double max_increase = 0.0;
  std::uint32_t top_code = 0;
};

struct Projection {
  std::vector<ProjectedFeature> points;
  Vector eigenvalues;  // top-2 of the feature-embedding covariance
};

// PCA of the feature embeddings h_i to two components. `steering` may be
// empty; otherwise it supplies each feature's max increase and top code.
Projection feature_projection_2d(const FeatureEncoder& encoder, std::span<const FeatureSteering> steering = {});
std::string projection_csv(const Projection& p);

// ---- Feature recovery --------------------------------------------------

struct ConceptMatch {
  std::uint32_t concept_id = 0;
  std::uint32_t feature = 0;
  double cosine = 0.0;  // |cos(h_feature, G_concept)|
};

// Greedy one-to-one matching of planted concepts to feature embeddings by
// descending |cosine|.
std::vector<ConceptMatch> greedy_match(const FeatureEncoder& encoder, const Matrix& concepts);
double recovery_fraction(std::span<const ConceptMatch> matches, std::size_t n_concepts, double threshold);

}  // namespace superlex
