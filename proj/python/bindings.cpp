// Python bindings: the world generator, the trainable models, the linear
// baselines, dictionary queries and the file-backed pipeline stages.
// Matrices cross the boundary as float64 numpy arrays (copied).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "superlex/baseline_encoders.hpp"
#include "superlex/dictionary.hpp"
#include "superlex/errors.hpp"
#include "superlex/evaluation.hpp"
#include "superlex/laat_head.hpp"
#include "superlex/pipeline.hpp"
#include "superlex/sparse_autoencoder.hpp"
#include "superlex/synthetic_world.hpp"

namespace py = pybind11;
using namespace superlex;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Vector vector_from(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array");
  return Vector(a.data(), a.data() + a.shape(0));
}

Matrix note_matrix(const Note& n) {
  const std::size_t d = n.embeddings.empty() ? 0 : n.embeddings.front().size();
  Matrix m(n.size(), d);
  for (std::size_t t = 0; t < n.size(); ++t) std::copy(n.embeddings[t].begin(), n.embeddings[t].end(), m.row(t).begin());
  return m;
}

// Keeps the Python-side workspace alive across stage calls.
struct PyWorkspace {
  std::unique_ptr<Workspace> ws;
  PyWorkspace(const std::string& config_json, const std::string& root)
      : ws(std::make_unique<Workspace>(config_from_json(config_json), root)) {}
};

void bind_encoder_surface(py::class_<FeatureEncoder>& cls) {
  cls.def_property_readonly("n_features", &FeatureEncoder::n_features)
      .def_property_readonly("dim", &FeatureEncoder::dim)
      .def_property_readonly("label", &FeatureEncoder::label)
      .def("encode", [](const FeatureEncoder& e, const Array& x) { return e.encode_dense(vector_from(x)); })
      .def("decode", [](const FeatureEncoder& e, const Array& f) { return e.decode_dense(vector_from(f)); })
      .def("feature_embedding", &FeatureEncoder::feature_embedding)
      .def("offset", &FeatureEncoder::offset)
      .def("model_hash", &FeatureEncoder::model_hash)
      .def("to_json", &FeatureEncoder::to_json);
}

}  // namespace

PYBIND11_MODULE(_superlex, m) {
  m.doc() = "Sparse dictionaries over label-attention token embeddings";

  auto base = py::register_exception<Error>(m, "SuperlexError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<MissingInputError>(m, "MissingInputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<MisuseError>(m, "MisuseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("percentile", [](std::vector<double> v, double p) { return percentile(v, p); }, py::arg("values"),
        py::arg("p"));
  m.def("ratio_of", &ratio_of, py::arg("top"), py::arg("nt"));

  // World and notes.
  py::class_<WorldSpec>(m, "WorldSpec")
      .def(py::init<>())
      .def_readwrite("d", &WorldSpec::d)
      .def_readwrite("n_concepts", &WorldSpec::n_concepts)
      .def_readwrite("n_codes", &WorldSpec::n_codes)
      .def_readwrite("vocab_size", &WorldSpec::vocab_size)
      .def_readwrite("polysemantic_fraction", &WorldSpec::polysemantic_fraction)
      .def_readwrite("stopword_count", &WorldSpec::stopword_count)
      .def_readwrite("noise_sigma", &WorldSpec::noise_sigma)
      .def_readwrite("concepts_per_code", &WorldSpec::concepts_per_code)
      .def_readwrite("seed", &WorldSpec::seed)
      .def_readwrite("orthogonalize", &WorldSpec::orthogonalize)
      .def_readwrite("label_threshold", &WorldSpec::label_threshold)
      .def("validate", &WorldSpec::validate);

  py::class_<World>(m, "World")
      .def_readonly("spec", &World::spec)
      .def_property_readonly("d", &World::d)
      .def_property_readonly("n_codes", &World::n_codes)
      .def_property_readonly("vocab_size", &World::vocab_size)
      .def_property_readonly("concepts", [](const World& w) { return to_numpy(w.concepts); })
      .def_readonly("stopword_ids", &World::stopword_ids)
      .def("code_concepts", [](const World& w, std::size_t c) { return w.code_map.at(c).concepts; })
      .def("code_description", [](const World& w, std::size_t c) { return w.code_map.at(c).description; })
      .def("token_concepts",
           [](const World& w, TokenId t) {
             std::vector<std::pair<std::uint32_t, double>> out;
             for (const auto& cw : w.token_table.at(t)) out.emplace_back(cw.concept_id, cw.weight);
             return out;
           })
      .def("token_embedding", &World::token_embedding)
      .def("is_stopword", &World::is_stopword)
      .def("hash", [](const World& w) { return world_hash(w); })
      .def("to_json", [](const World& w) { return world_to_json(w); })
      .def_static("from_json", &world_from_json);
  m.def("generate_world", &generate_world, py::arg("spec"));

  py::class_<Note>(m, "Note")
      .def_readonly("token_ids", &Note::token_ids)
      .def_readonly("is_pad", &Note::is_pad)
      .def_readonly("labels", &Note::labels)
      .def_property_readonly("embeddings", [](const Note& n) { return to_numpy(note_matrix(n)); })
      .def("__len__", &Note::size);
  m.def("sample_notes", &sample_notes, py::arg("world"), py::arg("count"), py::arg("length"), py::arg("pad_count"),
        py::arg("seed"));
  m.def("collect_embeddings", [](const std::vector<Note>& notes) { return to_numpy(collect_embeddings(notes)); });

  // Label-attention head.
  py::class_<HeadTrainConfig>(m, "HeadTrainConfig")
      .def(py::init<>())
      .def_readwrite("steps", &HeadTrainConfig::steps)
      .def_readwrite("batch_size", &HeadTrainConfig::batch_size)
      .def_readwrite("learning_rate", &HeadTrainConfig::learning_rate)
      .def_readwrite("weight_decay", &HeadTrainConfig::weight_decay)
      .def_readwrite("init_scale", &HeadTrainConfig::init_scale)
      .def_readwrite("seed", &HeadTrainConfig::seed);

  py::class_<LabelHead>(m, "LabelHead")
      .def_static("initialize", &LabelHead::initialize, py::arg("n_codes"), py::arg("d"), py::arg("seed"),
                  py::arg("scale"))
      .def_property_readonly("n_codes", &LabelHead::n_codes)
      .def_property_readonly("dim", &LabelHead::dim)
      .def("predict", [](const LabelHead& h, const Note& n) { return predict_probs(h, n); })
      .def("highlight", [](const LabelHead& h, const Note& n, double p) { return highlight_tokens(h, n, p); },
           py::arg("note"), py::arg("percentile") = kHighlightPercentile)
      .def("bce", [](const LabelHead& h, const std::vector<Note>& notes) { return head_bce(h, notes); });

  m.def(
      "train_head",
      [](const std::vector<Note>& notes, std::size_t n_codes, const HeadTrainConfig& cfg) {
        auto res = train_head(notes, n_codes, cfg);
        return py::make_tuple(std::move(res.head), res.loss_curve);
      },
      py::arg("notes"), py::arg("n_codes"), py::arg("config") = HeadTrainConfig{});

  // Encoders.
  py::class_<FeatureEncoder> encoder(m, "FeatureEncoder");
  bind_encoder_surface(encoder);

  py::enum_<SaeVariant>(m, "SaeVariant").value("L1", SaeVariant::L1).value("SPINE", SaeVariant::Spine);

  py::class_<SaeTrainConfig>(m, "SaeTrainConfig")
      .def(py::init<>())
      .def_readwrite("m", &SaeTrainConfig::m)
      .def_readwrite("lambda_l1", &SaeTrainConfig::lambda_l1)
      .def_readwrite("rho", &SaeTrainConfig::rho)
      .def_readwrite("lambda1", &SaeTrainConfig::lambda1)
      .def_readwrite("lambda2", &SaeTrainConfig::lambda2)
      .def_readwrite("batch_size", &SaeTrainConfig::batch_size)
      .def_readwrite("steps", &SaeTrainConfig::steps)
      .def_readwrite("learning_rate", &SaeTrainConfig::learning_rate)
      .def_readwrite("weight_decay", &SaeTrainConfig::weight_decay)
      .def_readwrite("seed", &SaeTrainConfig::seed);

  py::class_<SaeTrainReport>(m, "SaeTrainReport")
      .def_readonly("loss_curve", &SaeTrainReport::loss_curve)
      .def_readonly("initial_loss", &SaeTrainReport::initial_loss)
      .def_readonly("final_loss", &SaeTrainReport::final_loss)
      .def_readonly("dead_features", &SaeTrainReport::dead_features)
      .def_readonly("mean_l0", &SaeTrainReport::mean_l0);

  py::class_<DictionaryModel, FeatureEncoder>(m, "DictionaryModel")
      .def_static("initialize", &DictionaryModel::initialize, py::arg("variant"), py::arg("d"), py::arg("m"),
                  py::arg("seed"))
      .def_static("from_json", &sae_from_json)
      .def_property_readonly("variant", &DictionaryModel::variant)
      .def_property_readonly("encoder_weights", [](const DictionaryModel& s) { return to_numpy(s.encoder_weights()); })
      .def_property_readonly("decoder_rows", [](const DictionaryModel& s) { return to_numpy(s.decoder_rows()); })
      .def_property_readonly("encoder_bias", &DictionaryModel::encoder_bias)
      .def_property_readonly("decoder_bias", &DictionaryModel::decoder_bias)
      .def("loss", [](const DictionaryModel& s, const Array& batch, const SaeTrainConfig& cfg) {
        return sae_loss(s, from_numpy(batch), cfg);
      });

  m.def(
      "train_sae",
      [](const Array& embeddings, const SaeTrainConfig& cfg, SaeVariant variant) {
        auto res = train_sae(from_numpy(embeddings), cfg, variant);
        return py::make_tuple(std::move(res.model), res.report);
      },
      py::arg("embeddings"), py::arg("config"), py::arg("variant") = SaeVariant::L1);

  py::class_<LinearFeatureEncoder, FeatureEncoder>(m, "LinearFeatureEncoder")
      .def_property_readonly("kind", [](const LinearFeatureEncoder& e) { return to_string(e.kind()); })
      .def_property_readonly("weights", [](const LinearFeatureEncoder& e) { return to_numpy(e.weights()); })
      .def_property_readonly("eigenvalues", &LinearFeatureEncoder::eigenvalues)
      .def_property_readonly("converged", [](const LinearFeatureEncoder& e) { return e.report.converged; })
      .def_static("from_json", &linear_from_json);

  py::class_<FastIcaConfig>(m, "FastIcaConfig")
      .def(py::init<>())
      .def_readwrite("n_components", &FastIcaConfig::n_components)
      .def_readwrite("tolerance", &FastIcaConfig::tolerance)
      .def_readwrite("max_iterations", &FastIcaConfig::max_iterations)
      .def_readwrite("max_samples", &FastIcaConfig::max_samples)
      .def_readwrite("seed", &FastIcaConfig::seed);

  m.def("fit_pca", [](const Array& sample) { return fit_pca(from_numpy(sample)); });
  m.def(
      "fit_fastica", [](const Array& sample, const FastIcaConfig& cfg) { return fit_fastica(from_numpy(sample), cfg); },
      py::arg("sample"), py::arg("config") = FastIcaConfig{});
  m.def("make_identity", &make_identity, py::arg("d"));
  m.def("make_random", &make_random, py::arg("d"), py::arg("m"), py::arg("seed"));

  // Dictionaries.
  py::class_<Dictionary>(m, "Dictionary")
      .def_property_readonly("features", [](const Dictionary& d) {
        std::vector<std::uint32_t> ids;
        for (const auto& [id, e] : d.entries) ids.push_back(id);
        return ids;
      })
      .def("top_tokens",
           [](const Dictionary& d, std::uint32_t f) {
             std::vector<std::pair<TokenId, double>> out;
             if (const auto* e = d.find(f))
               for (const auto& t : e->top_tokens) out.emplace_back(t.token_id, t.activation);
             return out;
           })
      .def("top_codes",
           [](const Dictionary& d, std::uint32_t f) {
             std::vector<std::pair<std::uint32_t, double>> out;
             if (const auto* e = d.find(f))
               for (const auto& c : e->top_codes) out.emplace_back(c.code, c.drop);
             return out;
           })
      .def("to_json", [](const Dictionary& d) { return dictionary_to_json(d); })
      .def_static("from_json", &dictionary_from_json);

  m.def(
      "build_dictionary",
      [](const FeatureEncoder& enc, const LabelHead& head, const std::vector<Note>& notes, std::size_t k) {
        BuildOptions opt;
        opt.k = k;
        return build_dictionary(enc, head, notes, opt);
      },
      py::arg("encoder"), py::arg("head"), py::arg("notes"), py::arg("k") = 10);
  m.def(
      "query_dictionary",
      [](const Dictionary& d, const FeatureEncoder& enc, const Array& x, double p) {
        std::vector<std::pair<std::uint32_t, double>> out;
        for (const auto& h : query_dictionary(d, enc, vector_from(x), p)) out.emplace_back(h.feature, h.activation);
        return out;
      },
      py::arg("dictionary"), py::arg("encoder"), py::arg("x"), py::arg("percentile") = kQueryPercentile);

  // Pipeline stages over a workspace directory.
  m.def("default_config", [] { return config_to_json(RunConfig{}); });
  m.def("apply_override", &apply_override, py::arg("config_json"), py::arg("assignment"));
  m.def("config_hash", [](const std::string& text) { return config_hash(config_from_json(text)); });

  py::class_<PyWorkspace>(m, "Workspace")
      .def(py::init<const std::string&, const std::string&>(), py::arg("config_json"), py::arg("root"))
      .def("gen_world", [](PyWorkspace& w) { return run_gen_world(*w.ws); })
      .def("train", [](PyWorkspace& w, const std::string& c) { return run_train(*w.ws, c); })
      .def(
          "build_dict",
          [](PyWorkspace& w, const std::vector<std::string>& e) { return run_build_dict(*w.ws, e); },
          py::arg("encoders") = std::vector<std::string>{})
      .def(
          "eval",
          [](PyWorkspace& w, const std::string& metric, const std::vector<std::string>& e) {
            return run_eval(*w.ws, metric, e);
          },
          py::arg("metric"), py::arg("encoders") = std::vector<std::string>{})
      .def("explain", [](PyWorkspace& w, const std::string& enc, std::size_t note, std::uint32_t code) {
        return run_explain(*w.ws, enc, note, code);
      });
}
