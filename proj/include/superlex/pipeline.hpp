#pragma once

// Run configuration and the file-backed pipeline stages behind the CLI.
// Every stage reads its inputs from a workspace directory, writes its
// artifacts there, and is a pure function of (config, inputs, seed).

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "superlex/baseline_encoders.hpp"
#include "superlex/dictionary.hpp"
#include "superlex/laat_head.hpp"
#include "superlex/sparse_autoencoder.hpp"
#include "superlex/synthetic_world.hpp"

namespace superlex {

struct NotesConfig {
  std::size_t train_count = 2000;
  std::size_t test_count = 400;
  std::size_t length = 16;
  std::size_t pad = 4;
  bool operator==(const NotesConfig&) const = default;
};

struct EvalConfig {
  std::size_t dictionary_k = 10;
  double clamp_value = 50.0;
  double drop_threshold = 0.10;
  std::vector<std::size_t> coherence_k{2, 4, 10};
  std::string similarity = "concept";  // or "embedding"
  bool operator==(const EvalConfig&) const = default;
};

// The master seed feeds every component; the per-component seed fields of
// the nested configs are derived from it and never read from the document.
struct RunConfig {
  std::uint64_t seed = 7;
  WorldSpec world;
  NotesConfig notes;
  HeadTrainConfig head;
  SaeTrainConfig sae_l1;
  SaeTrainConfig sae_spine;
  std::size_t random_features = 0;  // 0 = d
  FastIcaConfig ica;
  EvalConfig eval;
  std::string output_dir = "run";

  void validate() const;  // ConfigError naming the field
  // Pushes the master seed into every component config.
  RunConfig resolved() const;
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);

// `assignment` is "dotted.path=value"; the value is parsed as JSON when it
// can be, else taken as a string. Unknown paths are rejected.
std::string apply_override(const std::string& config_json, const std::string& assignment);

// Hash of the canonical (resolved) config document.
std::string config_hash(const RunConfig& config);

inline const std::vector<std::string>& component_names() {
  static const std::vector<std::string> names{"head", "sae-l1", "sae-spine", "pca", "ica", "identity", "random"};
  return names;
}
inline const std::vector<std::string>& encoder_names() {
  static const std::vector<std::string> names{"sae-l1", "sae-spine", "pca", "ica", "identity", "random"};
  return names;
}

// Rounds to 9 significant digits so that reports print stably.
double r9(double v);

class Workspace {
 public:
  Workspace(RunConfig config, std::filesystem::path root);

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }
  std::string hash() const { return hash_; }

  std::filesystem::path world_path() const { return root_ / "world.json"; }
  std::filesystem::path notes_path(const std::string& split) const { return root_ / ("notes-" + split + ".sxw"); }
  std::filesystem::path index_path(const std::string& split) const { return root_ / ("notes-" + split + ".json"); }
  std::filesystem::path model_path(const std::string& component) const;
  std::filesystem::path dict_path(const std::string& encoder) const;
  std::filesystem::path report_path(const std::string& name) const;

  // Loaders throw MissingInputError naming the command that produces the
  // file when it is absent.
  const World& world();
  const std::vector<Note>& notes(const std::string& split);
  const LabelHead& head();
  const FeatureEncoder& encoder(const std::string& name);
  const Dictionary& dictionary(const std::string& encoder);
  bool has_model(const std::string& component) const;
  std::vector<std::string> trained_encoders() const;

 private:
  RunConfig config_;
  std::filesystem::path root_;
  std::string hash_;
  std::optional<World> world_;
  std::optional<std::vector<Note>> train_notes_;
  std::optional<std::vector<Note>> test_notes_;
  std::optional<LabelHead> head_;
  std::map<std::string, std::unique_ptr<FeatureEncoder>> encoders_;
  std::map<std::string, Dictionary> dicts_;
};

// Each stage returns the paths it wrote.
std::vector<std::filesystem::path> run_gen_world(Workspace& ws);
std::vector<std::filesystem::path> run_train(Workspace& ws, const std::string& component);
std::vector<std::filesystem::path> run_build_dict(Workspace& ws, const std::vector<std::string>& encoders);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"ratio", "hidden", "steer", "coherence", "intrusion", "overlap", "project"};
  return names;
}
// `metric` is one of metric_names() or "all". Empty `encoders` means every
// trained encoder.
std::vector<std::filesystem::path> run_eval(Workspace& ws, const std::string& metric,
                                            std::vector<std::string> encoders = {});

// Human-readable explanation of one test note for one code.
std::string run_explain(Workspace& ws, const std::string& encoder, std::size_t note_id, std::uint32_t code);

}  // namespace superlex
