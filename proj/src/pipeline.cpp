#include "superlex/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "superlex/codec.hpp"
#include "superlex/evaluation.hpp"
#include "superlex/intervention.hpp"

namespace superlex {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- Config ------------------------------------------------------------

namespace {

ordered_json config_doc(const RunConfig& c) {
  const auto& w = c.world;
  return ordered_json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"world",
       {{"d", w.d},
        {"n_concepts", w.n_concepts},
        {"n_codes", w.n_codes},
        {"vocab_size", w.vocab_size},
        {"polysemantic_fraction", w.polysemantic_fraction},
        {"stopword_count", w.stopword_count},
        {"noise_sigma", w.noise_sigma},
        {"concepts_per_code", w.concepts_per_code},
        {"orthogonalize", w.orthogonalize},
        {"label_threshold", w.label_threshold}}},
      {"notes",
       {{"train_count", c.notes.train_count},
        {"test_count", c.notes.test_count},
        {"length", c.notes.length},
        {"pad", c.notes.pad}}},
      {"head",
       {{"steps", c.head.steps},
        {"batch_size", c.head.batch_size},
        {"learning_rate", c.head.learning_rate},
        {"weight_decay", c.head.weight_decay},
        {"init_scale", c.head.init_scale}}},
      {"sae",
       {{"l1",
         {{"m", c.sae_l1.m},
          {"lambda", c.sae_l1.lambda_l1},
          {"batch_size", c.sae_l1.batch_size},
          {"steps", c.sae_l1.steps},
          {"learning_rate", c.sae_l1.learning_rate},
          {"weight_decay", c.sae_l1.weight_decay}}},
        {"spine",
         {{"m", c.sae_spine.m},
          {"rho", c.sae_spine.rho},
          {"lambda1", c.sae_spine.lambda1},
          {"lambda2", c.sae_spine.lambda2},
          {"batch_size", c.sae_spine.batch_size},
          {"steps", c.sae_spine.steps},
          {"learning_rate", c.sae_spine.learning_rate},
          {"weight_decay", c.sae_spine.weight_decay}}}}},
      {"baselines",
       {{"random_features", c.random_features},
        {"ica",
         {{"tolerance", c.ica.tolerance},
          {"max_iterations", c.ica.max_iterations},
          {"max_samples", c.ica.max_samples}}}}},
      {"eval",
       {{"dictionary_k", c.eval.dictionary_k},
        {"clamp_value", c.eval.clamp_value},
        {"drop_threshold", c.eval.drop_threshold},
        {"coherence_k", c.eval.coherence_k},
        {"similarity", c.eval.similarity}}}};
}

// Every key of `user` must exist in `shape`, with a compatible JSON type.
void check_shape(const ordered_json& shape, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError(prefix.empty() ? "config: expected an object" : prefix + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!shape.contains(key)) throw ConfigError(path + ": unknown field");
    const auto& ref = shape.at(key);
    if (ref.is_object()) {
      check_shape(ref, value, path);
    } else if (ref.is_number_unsigned()) {
      if (!value.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
    } else if (ref.is_number()) {
      if (!value.is_number()) throw ConfigError(path + ": expected a number");
    } else if (ref.is_boolean()) {
      if (!value.is_boolean()) throw ConfigError(path + ": expected true or false");
    } else if (ref.is_string()) {
      if (!value.is_string()) throw ConfigError(path + ": expected a string");
    } else if (ref.is_array()) {
      if (!value.is_array()) throw ConfigError(path + ": expected an array");
      for (const auto& v : value)
        if (!v.is_number_unsigned()) throw ConfigError(path + ": expected non-negative integers");
    }
  }
}

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
}

template <typename T>
T field(const json& doc, const char* path) {
  const json* cur = &doc;
  std::string p(path);
  std::size_t start = 0;
  while (true) {
    const auto dot = p.find('.', start);
    cur = &cur->at(p.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return cur->get<T>();
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  if (notes.train_count == 0) throw ConfigError("notes.train_count: must be >= 1");
  if (notes.test_count == 0) throw ConfigError("notes.test_count: must be >= 1");
  if (notes.length == 0) throw ConfigError("notes.length: must be >= 1");
  if (head.batch_size == 0) throw ConfigError("head.batch_size: must be >= 1");
  if (!(head.learning_rate > 0.0)) throw ConfigError("head.learning_rate: must be > 0");
  auto sae_check = [](const SaeTrainConfig& s, const std::string& name) {
    try {
      s.validate();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      throw ConfigError("sae." + name + "." + (msg.rfind("sae.", 0) == 0 ? msg.substr(4) : msg));
    }
  };
  sae_check(sae_l1, "l1");
  sae_check(sae_spine, "spine");
  if (!(ica.tolerance > 0.0)) throw ConfigError("baselines.ica.tolerance: must be > 0");
  if (eval.dictionary_k == 0) throw ConfigError("eval.dictionary_k: must be >= 1");
  for (auto k : eval.coherence_k)
    if (k < 2) throw ConfigError("eval.coherence_k: every k must be >= 2");
  if (eval.similarity != "concept" && eval.similarity != "embedding")
    throw ConfigError("eval.similarity: expected \"concept\" or \"embedding\"");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.world.seed = seed;
  r.head.seed = Rng::derive(seed, 11);
  r.sae_l1.seed = Rng::derive(seed, 21);
  r.sae_spine.seed = Rng::derive(seed, 22);
  r.ica.seed = Rng::derive(seed, 31);
  if (r.random_features == 0) r.random_features = r.world.d;
  return r;
}

std::string config_to_json(const RunConfig& config) { return config_doc(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  const json user = parse_config_text(text);
  const RunConfig defaults;
  const ordered_json shape = config_doc(defaults);
  check_shape(shape, user, "");
  if (!user.contains("seed")) throw ConfigError("seed: required");
  json doc = json::parse(shape.dump());
  doc.merge_patch(user);

  RunConfig c;
  c.seed = field<std::uint64_t>(doc, "seed");
  c.output_dir = field<std::string>(doc, "output_dir");
  auto& w = c.world;
  w.d = field<std::size_t>(doc, "world.d");
  w.n_concepts = field<std::size_t>(doc, "world.n_concepts");
  w.n_codes = field<std::size_t>(doc, "world.n_codes");
  w.vocab_size = field<std::size_t>(doc, "world.vocab_size");
  w.polysemantic_fraction = field<double>(doc, "world.polysemantic_fraction");
  w.stopword_count = field<std::size_t>(doc, "world.stopword_count");
  w.noise_sigma = field<double>(doc, "world.noise_sigma");
  w.concepts_per_code = field<std::size_t>(doc, "world.concepts_per_code");
  w.orthogonalize = field<bool>(doc, "world.orthogonalize");
  w.label_threshold = field<double>(doc, "world.label_threshold");
  c.notes.train_count = field<std::size_t>(doc, "notes.train_count");
  c.notes.test_count = field<std::size_t>(doc, "notes.test_count");
  c.notes.length = field<std::size_t>(doc, "notes.length");
  c.notes.pad = field<std::size_t>(doc, "notes.pad");
  c.head.steps = field<std::size_t>(doc, "head.steps");
  c.head.batch_size = field<std::size_t>(doc, "head.batch_size");
  c.head.learning_rate = field<double>(doc, "head.learning_rate");
  c.head.weight_decay = field<double>(doc, "head.weight_decay");
  c.head.init_scale = field<double>(doc, "head.init_scale");
  c.sae_l1.m = field<std::size_t>(doc, "sae.l1.m");
  c.sae_l1.lambda_l1 = field<double>(doc, "sae.l1.lambda");
  c.sae_l1.batch_size = field<std::size_t>(doc, "sae.l1.batch_size");
  c.sae_l1.steps = field<std::size_t>(doc, "sae.l1.steps");
  c.sae_l1.learning_rate = field<double>(doc, "sae.l1.learning_rate");
  c.sae_l1.weight_decay = field<double>(doc, "sae.l1.weight_decay");
  c.sae_spine.m = field<std::size_t>(doc, "sae.spine.m");
  c.sae_spine.rho = field<double>(doc, "sae.spine.rho");
  c.sae_spine.lambda1 = field<double>(doc, "sae.spine.lambda1");
  c.sae_spine.lambda2 = field<double>(doc, "sae.spine.lambda2");
  c.sae_spine.batch_size = field<std::size_t>(doc, "sae.spine.batch_size");
  c.sae_spine.steps = field<std::size_t>(doc, "sae.spine.steps");
  c.sae_spine.learning_rate = field<double>(doc, "sae.spine.learning_rate");
  c.sae_spine.weight_decay = field<double>(doc, "sae.spine.weight_decay");
  c.random_features = field<std::size_t>(doc, "baselines.random_features");
  c.ica.tolerance = field<double>(doc, "baselines.ica.tolerance");
  c.ica.max_iterations = field<std::size_t>(doc, "baselines.ica.max_iterations");
  c.ica.max_samples = field<std::size_t>(doc, "baselines.ica.max_samples");
  c.eval.dictionary_k = field<std::size_t>(doc, "eval.dictionary_k");
  c.eval.clamp_value = field<double>(doc, "eval.clamp_value");
  c.eval.drop_threshold = field<double>(doc, "eval.drop_threshold");
  c.eval.coherence_k = field<std::vector<std::size_t>>(doc, "eval.coherence_k");
  c.eval.similarity = field<std::string>(doc, "eval.similarity");
  c.validate();
  return c;
}

std::string apply_override(const std::string& config_json, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + assignment + ": expected path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json doc = parse_config_text(config_json);
  const ordered_json shape = config_doc(RunConfig{});
  json* cur = &doc;
  const ordered_json* ref = &shape;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (!ref->contains(key)) throw ConfigError(path + ": unknown field");
    ref = &ref->at(key);
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      break;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
  return doc.dump(2);
}

std::string config_hash(const RunConfig& config) {
  ordered_json doc = config_doc(config.resolved());
  doc.erase("output_dir");
  return codec::hash_hex(doc.dump());
}

double r9(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(codec::fmt9(v));
}

// ---- Workspace ---------------------------------------------------------

namespace {

std::string require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingInputError(path.string() + " not found; run `superlex " + producer + "` first");
  }
  return codec::read_file(path);
}

std::string producer_of(const std::string& component) {
  return "train " + component;
}

}  // namespace

Workspace::Workspace(RunConfig config, fs::path root)
    : config_(config.resolved()), root_(std::move(root)), hash_(config_hash(config)) {}

fs::path Workspace::model_path(const std::string& component) const { return root_ / "models" / (component + ".json"); }
fs::path Workspace::dict_path(const std::string& encoder) const { return root_ / "dicts" / (encoder + ".json"); }
fs::path Workspace::report_path(const std::string& name) const { return root_ / "reports" / name; }

const World& Workspace::world() {
  if (!world_) {
    World w = world_from_json(require(world_path(), "gen-world"));
    if (w.spec != config_.world) {
      throw ConfigError("world: " + world_path().string() +
                        " was generated from a different world config; rerun `superlex gen-world`");
    }
    world_ = std::move(w);
  }
  return *world_;
}

const std::vector<Note>& Workspace::notes(const std::string& split) {
  auto& slot = split == "train" ? train_notes_ : test_notes_;
  if (split != "train" && split != "test") throw MisuseError("notes: split must be train or test");
  if (!slot) {
    const auto stream = require(notes_path(split), "gen-world");
    const auto index = require(index_path(split), "gen-world");
    slot = decode_notes(world(), stream, index);
  }
  return *slot;
}

const LabelHead& Workspace::head() {
  if (!head_) head_ = head_from_json(require(model_path("head"), producer_of("head")));
  return *head_;
}

const FeatureEncoder& Workspace::encoder(const std::string& name) {
  auto it = encoders_.find(name);
  if (it == encoders_.end()) {
    auto enc = load_encoder(require(model_path(name), producer_of(name)));
    it = encoders_.emplace(name, std::move(enc)).first;
  }
  return *it->second;
}

const Dictionary& Workspace::dictionary(const std::string& enc) {
  auto it = dicts_.find(enc);
  if (it == dicts_.end()) {
    Dictionary d = dictionary_from_json(require(dict_path(enc), "build-dict --encoder " + enc));
    verify_provenance(d, encoder(enc), world_hash(world()));
    it = dicts_.emplace(enc, std::move(d)).first;
  }
  return it->second;
}

bool Workspace::has_model(const std::string& component) const { return fs::exists(model_path(component)); }

std::vector<std::string> Workspace::trained_encoders() const {
  std::vector<std::string> out;
  for (const auto& name : encoder_names())
    if (has_model(name)) out.push_back(name);
  return out;
}

// ---- Stages ------------------------------------------------------------

namespace {

ordered_json report_header(Workspace& ws, const std::string& kind) {
  return ordered_json{{"report", kind},
                      {"config_hash", ws.hash()},
                      {"seed", ws.config().seed},
                      {"world_hash", world_hash(ws.world())}};
}

fs::path write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  codec::write_file(path, text);
  return path;
}

fs::path write_json(const fs::path& path, const ordered_json& doc) { return write_text(path, doc.dump(2) + "\n"); }

ordered_json rounded(const std::vector<double>& v) {
  ordered_json out = ordered_json::array();
  for (double x : v) out.push_back(r9(x));
  return out;
}

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(r9(*v)) : ordered_json(nullptr); }

}  // namespace

std::vector<fs::path> run_gen_world(Workspace& ws) {
  const auto& cfg = ws.config();
  const World world = generate_world(cfg.world);
  std::vector<fs::path> written;
  written.push_back(write_text(ws.world_path(), world_to_json(world)));
  const std::uint64_t split_seed[] = {Rng::derive(cfg.seed, 1), Rng::derive(cfg.seed, 2)};
  const std::size_t counts[] = {cfg.notes.train_count, cfg.notes.test_count};
  const char* splits[] = {"train", "test"};
  for (int s = 0; s < 2; ++s) {
    const auto notes = sample_notes(world, counts[s], cfg.notes.length, cfg.notes.pad, split_seed[s]);
    written.push_back(write_text(ws.notes_path(splits[s]), encode_notes_stream(notes, world.d())));
    written.push_back(write_text(ws.index_path(splits[s]), encode_notes_index(notes)));
  }
  return written;
}

std::vector<fs::path> run_train(Workspace& ws, const std::string& component) {
  if (std::find(component_names().begin(), component_names().end(), component) == component_names().end())
    throw ConfigError("train: unknown component '" + component + "'");
  const auto& cfg = ws.config();
  const auto& train = ws.notes("train");
  ordered_json report = report_header(ws, "train");
  report["component"] = component;
  std::string model;

  if (component == "head") {
    const auto res = train_head(train, ws.world().n_codes(), cfg.head);
    model = head_to_json(res.head);
    report["loss_curve"] = rounded(res.loss_curve);
    report["final_loss"] = r9(res.final_loss);
    report["test_loss"] = r9(head_bce(res.head, ws.notes("test")));
  } else if (component == "sae-l1" || component == "sae-spine") {
    const bool l1 = component == "sae-l1";
    const auto res = train_sae(collect_embeddings(train), l1 ? cfg.sae_l1 : cfg.sae_spine,
                               l1 ? SaeVariant::L1 : SaeVariant::Spine);
    model = res.model.to_json();
    report["loss_curve"] = rounded(res.report.loss_curve);
    report["initial_loss"] = r9(res.report.initial_loss);
    report["final_loss"] = r9(res.report.final_loss);
    report["dead_features"] = res.report.dead_features;
    report["mean_l0"] = r9(res.report.mean_l0);
    report["concept_recovery_0.85"] =
        r9(recovery_fraction(greedy_match(res.model, ws.world().concepts), ws.world().concepts.rows(), 0.85));
  } else if (component == "pca") {
    const auto enc = fit_pca(collect_embeddings(train));
    model = enc.to_json();
    report["loss_curve"] = nullptr;
    report["near_zero_eigenvalues"] = enc.report.near_zero_eigenvalues;
    report["eigenvalues"] = rounded(enc.eigenvalues());
  } else if (component == "ica") {
    const auto enc = fit_fastica(collect_embeddings(train), cfg.ica);
    model = enc.to_json();
    report["loss_curve"] = nullptr;
    report["converged"] = enc.report.converged;
    report["iterations"] = enc.report.iterations;
    report["near_zero_eigenvalues"] = enc.report.near_zero_eigenvalues;
  } else if (component == "identity") {
    model = make_identity(ws.world().d()).to_json();
    report["loss_curve"] = nullptr;
  } else {
    model = make_random(ws.world().d(), cfg.random_features, Rng::derive(cfg.seed, 32)).to_json();
    report["loss_curve"] = nullptr;
    report["features"] = cfg.random_features;
  }
  return {write_text(ws.model_path(component), model), write_json(ws.report_path("train-" + component + ".json"), report)};
}

std::vector<fs::path> run_build_dict(Workspace& ws, const std::vector<std::string>& encoders) {
  (void)ws.world();
  std::vector<std::string> names = encoders.empty() ? ws.trained_encoders() : encoders;
  if (names.empty()) throw MissingInputError("no trained encoders found; run `superlex train <encoder>` first");
  std::vector<fs::path> written;
  for (const auto& name : names) {
    BuildOptions opt;
    opt.k = ws.config().eval.dictionary_k;
    opt.world_hash = world_hash(ws.world());
    opt.seed = ws.config().seed;
    const Dictionary d = build_dictionary(ws.encoder(name), ws.head(), ws.notes("train"), opt);
    written.push_back(write_text(ws.dict_path(name), dictionary_to_json(d)));
  }
  return written;
}

// ---- Evaluation --------------------------------------------------------

namespace {

// Aligned plain-text table; the first column is left-aligned.
std::string text_table(const std::string& title, const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream out;
  out << title << '\n';
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) out << "  ";
      if (c == 0) out << std::left; else out << std::right;
      out << std::setw(static_cast<int>(width[c])) << r[c];
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

std::string num(double v) { return codec::fmt9(v); }
std::string num(const std::optional<double>& v) { return v ? codec::fmt9(*v) : "n/a"; }

struct MetricOutput {
  ordered_json json;
  std::string text;
  std::vector<fs::path> extra;
};

std::unique_ptr<SimilarityProvider> provider(Workspace& ws) {
  if (ws.config().eval.similarity == "embedding") return std::make_unique<EmbeddingSimilarity>(ws.world());
  return std::make_unique<ConceptSimilarity>(ws.world());
}

std::vector<StopwordQuery> queries(Workspace& ws) {
  return collect_stopword_queries(ws.world(), ws.head(), ws.notes("test"), Rng::derive(ws.config().seed, 41));
}

MetricOutput eval_ratio(Workspace& ws, const std::vector<std::string>& encoders) {
  const auto& head = ws.head();
  const auto& test = ws.notes("test");
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  auto add = [&](const std::string& method, const RatioReport& r, std::optional<double> suff) {
    rows.push_back(ordered_json{{"method", method},
                                {"encoder", r.encoder},
                                {"mode", r.mode},
                                {"top", r9(r.top)},
                                {"nt", r9(r.nt)},
                                {"ratio", opt(r.ratio)},
                                {"sufficiency", opt(suff)}});
    table.push_back({method, r.encoder, r.mode, num(r.top), num(r.nt), num(r.ratio), num(suff)});
  };
  add("LAAT", comprehensiveness(head, test, nullptr, true, AblationKind::Token), std::nullopt);
  for (const auto& name : encoders) {
    const auto& enc = ws.encoder(name);
    add("AutoCodeDL", comprehensiveness(head, test, &enc, true), sufficiency(head, test, enc, true));
    add("DL", comprehensiveness(head, test, &enc, false), sufficiency(head, test, enc, false));
  }
  out.json["rows"] = rows;
  out.text = text_table("Comprehensiveness",
                        {"method", "encoder", "mode", "top", "nt", "ratio", "sufficiency"}, table);
  return out;
}

MetricOutput eval_hidden(Workspace& ws, const std::vector<std::string>& encoders) {
  const auto q = queries(ws);
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& name : encoders) {
    const double acc = hidden_meaning_score(ws.dictionary(name), ws.encoder(name), q);
    rows.push_back(ordered_json{{"encoder", name}, {"accuracy", r9(acc)}});
    table.push_back({name, num(acc)});
  }
  out.json["queries"] = q.size();
  out.json["rows"] = rows;
  out.text = text_table("Hidden meaning identification, " + std::to_string(q.size()) + " queries",
                        {"encoder", "accuracy"}, table);
  return out;
}

std::string steering_csv(const SteeringResult& s) {
  std::ostringstream csv;
  csv << "feature_id,max_increase,top_code,flipped_codes\n";
  for (const auto& f : s.features)
    csv << f.feature << ',' << codec::fmt9(f.max_increase) << ',' << f.top_code << ',' << f.flipped.size() << '\n';
  return csv.str();
}

MetricOutput eval_steer(Workspace& ws, const std::vector<std::string>& encoders) {
  const auto q = queries(ws);
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& name : encoders) {
    const auto res = steering_eval(ws.encoder(name), ws.head(), ws.config().eval.clamp_value, q);
    const auto& r = res.report;
    rows.push_back(ordered_json{{"encoder", name},
                                {"clamp_value", r9(r.clamp_value)},
                                {"code_flips", r.code_flips},
                                {"meaningful_features", r.meaningful_features},
                                {"id_accuracy", opt(r.id_accuracy)}});
    table.push_back({name, std::to_string(r.code_flips), std::to_string(r.meaningful_features), num(r.id_accuracy)});
    out.extra.push_back(write_text(ws.report_path("steer-" + name + ".csv"), steering_csv(res)));
  }
  out.json["rows"] = rows;
  out.text = text_table("Steering at clamp " + num(ws.config().eval.clamp_value),
                        {"encoder", "code flips", "meaningful features", "id accuracy"}, table);
  return out;
}

MetricOutput eval_coherence(Workspace& ws, const std::vector<std::string>& encoders) {
  const auto prov = provider(ws);
  const auto& ks = ws.config().eval.coherence_k;
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"encoder"};
  for (auto k : ks) header.push_back("k=" + std::to_string(k));
  for (const auto& name : encoders) {
    ordered_json row{{"encoder", name}};
    std::vector<std::string> line{name};
    for (auto k : ks) {
      const auto rep = coherence(ws.dictionary(name), *prov, k);
      row["k" + std::to_string(k)] = ordered_json{
          {"mean", opt(rep.mean)}, {"features_scored", rep.features_scored}, {"skipped_pairs", rep.skipped_pairs}};
      line.push_back(num(rep.mean));
    }
    rows.push_back(row);
    table.push_back(line);
  }
  out.json["provider"] = prov->name();
  out.json["rows"] = rows;
  out.text = text_table("Coherence (" + prov->name() + " similarity)", header, table);
  return out;
}

MetricOutput eval_intrusion(Workspace& ws, const std::vector<std::string>& encoders) {
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& name : encoders) {
    const auto set = intrusion_instances(ws.dictionary(name), ws.encoder(name), ws.world(),
                                         Rng::derive(ws.config().seed, 51));
    out.extra.push_back(write_text(ws.report_path("intrusion-" + name + ".json"), intrusion_to_json(set)));
    rows.push_back(ordered_json{{"encoder", name},
                                {"instances", set.instances.size()},
                                {"skipped", set.skipped.size()},
                                {"separable_fraction", r9(set.separable_fraction())}});
    table.push_back({name, std::to_string(set.instances.size()), std::to_string(set.skipped.size()),
                     num(set.separable_fraction())});
  }
  out.json["rows"] = rows;
  out.text = text_table("Intrusion instances", {"encoder", "instances", "skipped", "separable"}, table);
  return out;
}

MetricOutput eval_overlap(Workspace& ws, const std::vector<std::string>& encoders) {
  const double thr = ws.config().eval.drop_threshold;
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& name : encoders) {
    const auto rep = description_overlap(ws.dictionary(name), ws.world(), thr);
    rows.push_back(ordered_json{{"encoder", name}, {"qualifying", rep.qualifying}, {"overlap", opt(rep.mean)}});
    table.push_back({name, std::to_string(rep.qualifying), num(rep.mean)});
  }
  out.json["drop_threshold"] = r9(thr);
  out.json["rows"] = rows;
  out.text = text_table("Description overlap (drop >= " + num(thr) + ")", {"encoder", "qualifying", "overlap"}, table);
  return out;
}

MetricOutput eval_project(Workspace& ws, const std::vector<std::string>& encoders) {
  MetricOutput out;
  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& name : encoders) {
    const auto& enc = ws.encoder(name);
    const auto steer = steering_eval(enc, ws.head(), ws.config().eval.clamp_value);
    const auto p = feature_projection_2d(enc, steer.features);
    out.extra.push_back(write_text(ws.report_path("projection-" + name + ".csv"), projection_csv(p)));
    rows.push_back(ordered_json{{"encoder", name}, {"points", p.points.size()}, {"eigenvalues", rounded(p.eigenvalues)}});
    table.push_back({name, std::to_string(p.points.size()), num(p.eigenvalues[0]), num(p.eigenvalues[1])});
  }
  out.json["rows"] = rows;
  out.text = text_table("Feature projection", {"encoder", "points", "eig 1", "eig 2"}, table);
  return out;
}

MetricOutput eval_metric(Workspace& ws, const std::string& metric, const std::vector<std::string>& encoders) {
  if (metric == "ratio") return eval_ratio(ws, encoders);
  if (metric == "hidden") return eval_hidden(ws, encoders);
  if (metric == "steer") return eval_steer(ws, encoders);
  if (metric == "coherence") return eval_coherence(ws, encoders);
  if (metric == "intrusion") return eval_intrusion(ws, encoders);
  if (metric == "overlap") return eval_overlap(ws, encoders);
  if (metric == "project") return eval_project(ws, encoders);
  throw ConfigError("eval: unknown metric '" + metric + "'");
}

}  // namespace

std::vector<fs::path> run_eval(Workspace& ws, const std::string& metric, std::vector<std::string> encoders) {
  const bool all = metric == "all";
  if (!all && std::find(metric_names().begin(), metric_names().end(), metric) == metric_names().end())
    throw ConfigError("eval: unknown metric '" + metric + "'");
  (void)ws.world();
  if (encoders.empty()) encoders = ws.trained_encoders();
  if (encoders.empty())
    throw MissingInputError("no trained encoders found; run `superlex train <encoder>` (one of sae-l1, sae-spine, "
                            "pca, ica, identity, random) first");
  for (const auto& e : encoders) (void)ws.encoder(e);
  (void)ws.head();

  std::vector<fs::path> written;
  ordered_json combined = report_header(ws, "eval-all");
  combined["encoders"] = encoders;
  std::string combined_text;
  const std::vector<std::string> metrics = all ? metric_names() : std::vector<std::string>{metric};
  for (const auto& m : metrics) {
    MetricOutput res = eval_metric(ws, m, encoders);
    ordered_json doc = report_header(ws, "eval-" + m);
    doc["encoders"] = encoders;
    for (auto& [k, v] : res.json.items()) doc[k] = v;
    written.push_back(write_json(ws.report_path("eval-" + m + ".json"), doc));
    written.push_back(write_text(ws.report_path("eval-" + m + ".txt"), res.text));
    written.insert(written.end(), res.extra.begin(), res.extra.end());
    combined[m] = res.json;
    combined_text += res.text + "\n";
  }
  if (all) {
    written.push_back(write_json(ws.report_path("eval-all.json"), combined));
    written.push_back(write_text(ws.report_path("eval-all.txt"),
                                 "config " + ws.hash() + "  seed " + std::to_string(ws.config().seed) + "\n\n" +
                                     combined_text));
  }
  return written;
}

std::string run_explain(Workspace& ws, const std::string& encoder, std::size_t note_id, std::uint32_t code) {
  const auto& test = ws.notes("test");
  if (note_id >= test.size())
    throw DomainError("explain: note id " + std::to_string(note_id) + " out of range (test split has " +
                      std::to_string(test.size()) + " notes)");
  const auto& note = test[note_id];
  const auto& dict = ws.dictionary(encoder);
  const auto ex = autocode_explain(dict, ws.encoder(encoder), ws.head(), note, code);
  std::ostringstream out;
  out << "note " << note_id << "  code " << code << "  p=" << codec::fmt9(ex.probability)
      << "  label=" << int(note.labels.at(code)) << "  hit=" << (ex.hit ? "yes" : "no") << '\n';
  for (const auto& t : ex.tokens) {
    out << "  token[" << t.token_index << "] id=" << t.token_id
        << (ws.world().is_stopword(t.token_id) ? " (stop word)" : "") << "  attention=" << codec::fmt9(t.attention)
        << '\n';
    if (t.features.empty()) out << "    no feature above the query percentile\n";
    for (const auto& h : t.features) {
      out << "    feature " << h.feature << "  f=" << codec::fmt9(h.activation) << "  top codes:";
      if (!h.entry) {
        out << " (not in dictionary)\n";
        continue;
      }
      for (const auto& c : h.entry->top_codes) out << ' ' << c.code << (c.code == code ? "*" : "");
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace superlex
