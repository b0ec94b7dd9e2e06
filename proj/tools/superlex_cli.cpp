// superlex: command-line driver for the dictionary-learning pipeline.
//
//   superlex gen-world  [--config run.json] [--set path=value]...
//   superlex train      <component>
//   superlex build-dict [--encoder name]...
//   superlex eval       <ratio|hidden|steer|coherence|intrusion|overlap|project|all> [--encoder name]...
//   superlex explain    --encoder name --note id --code id
//   superlex config     (prints the resolved config document)
//
// On failure the first line on stderr is "superlex-error: <tag>", followed
// by a human-readable message.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "superlex/codec.hpp"
#include "superlex/errors.hpp"
#include "superlex/pipeline.hpp"

namespace {

using namespace superlex;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Run config (JSON); built-in defaults when omitted");
  cmd->add_option("--set", opts.overrides, "Override a config field, e.g. --set sae.l1.lambda=2e-5");
  cmd->add_option("-o,--out", opts.out_dir, "Workspace directory (overrides output_dir)");
}

RunConfig load_config(const CommonOptions& opts) {
  std::string text = opts.config_path.empty() ? config_to_json(RunConfig{}) : codec::read_file(opts.config_path);
  // Precedence: file, then SUPERLEX_SEED, then --set.
  if (const char* env = std::getenv("SUPERLEX_SEED")) {
    const std::string s(env);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("SUPERLEX_SEED: expected a non-negative integer, got '" + s + "'");
    text = apply_override(text, "seed=" + s);
  }
  for (const auto& o : opts.overrides) text = apply_override(text, o);
  return config_from_json(text);
}

int fail(const std::string& tag, const std::string& message, int code) {
  std::cerr << "superlex-error: " << tag << '\n' << message << '\n';
  return code;
}

int exit_code_for(const std::string& tag) {
  if (tag == "config") return 2;
  if (tag == "missing-input") return 3;
  if (tag == "io" || tag == "format") return 4;
  return 1;
}

void print_paths(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"superlex: sparse dictionaries over label-attention token embeddings"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (default: all cores)");

  CommonOptions common;
  auto* gen = app.add_subcommand("gen-world", "Generate the world and the train/test note streams");
  add_common(gen, common);

  std::string component;
  auto* train = app.add_subcommand("train", "Train or fit one component");
  add_common(train, common);
  train->add_option("component", component, "head, sae-l1, sae-spine, pca, ica, identity or random")
      ->required()
      ->check(CLI::IsMember(component_names()));

  std::vector<std::string> encoders;
  auto* build = app.add_subcommand("build-dict", "Build dictionaries for trained encoders");
  add_common(build, common);
  build->add_option("-e,--encoder", encoders, "Encoder(s); default: every trained encoder")
      ->check(CLI::IsMember(encoder_names()));

  std::string metric;
  auto* eval = app.add_subcommand("eval", "Run one metric, or all of them");
  add_common(eval, common);
  std::vector<std::string> metric_choices = metric_names();
  metric_choices.push_back("all");
  eval->add_option("metric", metric, "ratio, hidden, steer, coherence, intrusion, overlap, project or all")
      ->required()
      ->check(CLI::IsMember(metric_choices));
  eval->add_option("-e,--encoder", encoders, "Encoder(s); default: every trained encoder")
      ->check(CLI::IsMember(encoder_names()));

  std::string explain_encoder = "sae-l1";
  std::size_t note_id = 0;
  std::uint32_t code = 0;
  auto* explain = app.add_subcommand("explain", "Explain one code prediction on one test note");
  add_common(explain, common);
  explain->add_option("-e,--encoder", explain_encoder, "Encoder whose dictionary is queried")
      ->check(CLI::IsMember(encoder_names()));
  explain->add_option("--note", note_id, "Test note id")->required();
  explain->add_option("--code", code, "Code id")->required();

  auto* show = app.add_subcommand("config", "Print the effective config document");
  add_common(show, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 64);
  }

  try {
    if (threads > 0) set_max_threads(threads);
    const RunConfig cfg = load_config(common);
    if (show->parsed()) {
      std::cout << config_to_json(cfg);
      return 0;
    }
    Workspace ws(cfg, common.out_dir.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(common.out_dir));
    if (gen->parsed()) print_paths(run_gen_world(ws));
    if (train->parsed()) print_paths(run_train(ws, component));
    if (build->parsed()) print_paths(run_build_dict(ws, encoders));
    if (eval->parsed()) print_paths(run_eval(ws, metric, encoders));
    if (explain->parsed()) std::cout << run_explain(ws, explain_encoder, note_id, code);
    return 0;
  } catch (const TrainingError& e) {
    return fail(e.tag(), std::string(e.what()) + " (step " + std::to_string(e.step()) + ")", 1);
  } catch (const Error& e) {
    return fail(e.tag(), e.what(), exit_code_for(e.tag()));
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
