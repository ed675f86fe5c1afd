#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "msd/embed_client.hpp"
#include "msd/error.hpp"
#include "msd/pipeline.hpp"
#include "msd/score.hpp"
#include "msd/stats.hpp"
#include "msd/synth.hpp"

namespace py = pybind11;
using namespace msd;

namespace {

PyObject* g_data_error = nullptr;
PyObject* g_remote_error = nullptr;

std::optional<std::string> optional_field(const py::dict& d, const char* key) {
    if (!d.contains(key) || d[key].is_none()) return std::nullopt;
    return py::cast<std::string>(d[key]);
}

Document to_document(const py::dict& d) {
    Document doc;
    doc.id = py::cast<std::string>(d["id"]);
    doc.text = py::cast<std::string>(d["text"]);
    if (auto label = optional_field(d, "label")) {
        doc.label = parse_label(*label);
        if (!doc.label) throw data_error("unknown label '" + *label + "'");
    }
    doc.group = optional_field(d, "group");
    doc.category = optional_field(d, "category");
    for (const auto& [k, v] : d) {
        const auto key = py::cast<std::string>(k);
        if (key == "id" || key == "text" || key == "label" || key == "group" || key == "category") continue;
        doc.metadata[key] = py::cast<std::string>(v);
    }
    return doc;
}

LabeledCorpus to_corpus(const py::list& docs) {
    std::vector<Document> out;
    for (const auto& d : docs) out.push_back(to_document(py::cast<py::dict>(d)));
    return LabeledCorpus(std::move(out));
}

py::dict from_document(const Document& doc) {
    py::dict d;
    d["id"] = doc.id;
    d["text"] = doc.text;
    if (doc.label) d["label"] = std::string(to_string(*doc.label));
    if (doc.group) d["group"] = *doc.group;
    if (doc.category) d["category"] = *doc.category;
    for (const auto& [k, v] : doc.metadata) d[py::str(k)] = v;
    return d;
}

py::list from_corpus(const LabeledCorpus& corpus) {
    py::list out;
    for (const auto& doc : corpus) out.append(from_document(doc));
    return out;
}

py::object from_json(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::dict from_score(const MsdScore& s) {
    py::dict d;
    d["doc_id"] = s.doc_id;
    d["word_score"] = s.word_score;
    d["context_score"] = s.context_score;
    d["combined"] = s.combined;
    d["bs_meter"] = s.bs_meter;
    d["word_label"] = std::string(to_string(s.word.label));
    d["word_confidence"] = s.word.confidence;
    d["context_label"] = std::string(to_string(s.context.label));
    d["context_confidence"] = s.context.confidence;
    return d;
}

SynthSpec make_spec(std::size_t n_per_class, std::size_t min_tokens, std::size_t max_tokens, double marker_rate,
                    std::size_t context_terms, double context_rate, std::uint64_t seed) {
    SynthSpec s;
    s.n_per_class = n_per_class;
    s.min_tokens = min_tokens;
    s.max_tokens = max_tokens;
    s.marker_rate = marker_rate;
    s.context_terms = context_terms;
    s.context_rate = context_rate;
    s.seed = seed;
    return s;
}

}  // namespace

PYBIND11_MODULE(_msd, m) {
    m.attr("__version__") = MSD_VERSION;

    g_data_error = PyErr_NewException("msd.DataError", PyExc_ValueError, nullptr);
    g_remote_error = PyErr_NewException("msd.RemoteError", PyExc_ConnectionError, nullptr);
    m.attr("DataError") = py::handle(g_data_error);
    m.attr("RemoteError") = py::handle(g_remote_error);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::Io: PyErr_SetString(PyExc_OSError, e.what()); break;
                case ErrorKind::Data: PyErr_SetString(g_data_error, e.what()); break;
                case ErrorKind::Remote: PyErr_SetString(g_remote_error, e.what()); break;
            }
        }
    });

    py::class_<MsdModel>(m, "Model")
        .def_property_readonly("digest", [](const MsdModel& model) { return manifest_digest(model); })
        .def_property_readonly("provider",
                               [](const MsdModel& model) {
                                   return model.context.provider() == EmbeddingProvider::Remote ? "remote" : "builtin";
                               })
        .def(
            "score",
            [](const MsdModel& model, const std::string& text, const std::string& doc_id) {
                Document doc;
                doc.id = doc_id;
                doc.text = text;
                MsdScore score;
                {
                    py::gil_scoped_release release;
                    score = score_document(doc, model);
                }
                return from_score(score);
            },
            py::arg("text"), py::arg("doc_id") = "doc")
        .def(
            "score_corpus",
            [](const MsdModel& model, const py::list& docs, std::size_t threads) {
                const auto corpus = to_corpus(docs);
                std::vector<MsdScore> scores;
                {
                    py::gil_scoped_release release;
                    scores = score_corpus(corpus, model, threads);
                }
                py::list out;
                for (const auto& s : scores) out.append(from_score(s));
                return out;
            },
            py::arg("documents"), py::arg("threads") = 0)
        .def("save", [](const MsdModel& model, const std::filesystem::path& path) { save_manifest(model, path); })
        .def("manifest", [](const MsdModel& model) { return from_json(to_manifest(model)); });

    m.def(
        "train",
        [](const py::list& docs, std::uint64_t seed, int trees, std::size_t epochs, std::size_t dim,
           const std::string& provider, std::optional<std::string> endpoint) {
            const auto corpus = to_corpus(docs);
            TrainConfig config;
            config.seed = seed;
            config.gbdt.n_trees = trees;
            config.context.epochs = epochs;
            config.context.dim = dim;
            if (provider == "remote") {
                config.context.provider = EmbeddingProvider::Remote;
                const auto url = resolve_endpoint(endpoint);
                if (!url) throw io_error("remote provider needs an endpoint or $" + std::string(kEmbedUrlEnv));
                config.context.remote.endpoint = *url;
            } else if (provider != "builtin") {
                throw io_error("unknown provider '" + provider + "'");
            }
            TrainReport report;
            MsdModel model;
            {
                py::gil_scoped_release release;
                model = train_pipeline(corpus, config, &report);
            }
            return py::make_tuple(std::move(model), from_json(report.to_json()));
        },
        py::arg("documents"), py::arg("seed") = 7, py::arg("trees") = 200, py::arg("epochs") = 30,
        py::arg("dim") = 64, py::arg("provider") = "builtin", py::arg("endpoint") = py::none());

    m.def(
        "load_model",
        [](const std::filesystem::path& path, std::optional<std::string> endpoint) {
            py::gil_scoped_release release;
            return load_manifest(path, endpoint);
        },
        py::arg("path"), py::arg("endpoint") = py::none());

    m.def(
        "load_corpus", [](const std::filesystem::path& path) { return from_corpus(load_corpus(path)); },
        py::arg("path"));

    m.def(
        "synth",
        [](std::size_t n_per_class, std::size_t min_tokens, std::size_t max_tokens, double marker_rate,
           std::size_t context_terms, double context_rate, std::uint64_t seed, const std::string& layout) {
            const auto spec =
                make_spec(n_per_class, min_tokens, max_tokens, marker_rate, context_terms, context_rate, seed);
            if (layout == "labeled") return from_corpus(synth_corpus(spec));
            if (layout == "two-group") return from_corpus(synth_two_group(spec));
            if (layout == "factorial") return from_corpus(synth_factorial(spec, true));
            throw io_error("unknown layout '" + layout + "'");
        },
        py::arg("n_per_class") = 50, py::arg("min_tokens") = 200, py::arg("max_tokens") = 400,
        py::arg("marker_rate") = 0.05, py::arg("context_terms") = 0, py::arg("context_rate") = 0.0,
        py::arg("seed") = 7, py::arg("layout") = "labeled");

    m.def(
        "confidence_to_score",
        [](const std::string& label, double confidence) {
            const auto parsed = parse_label(label);
            if (!parsed) throw data_error("unknown label '" + label + "'");
            return confidence_to_score(ClassifierOutput::from_confidence(*parsed, confidence));
        },
        py::arg("label"), py::arg("confidence"));
    m.def("to_bs_meter", [](double combined) { return to_bs_meter(combined); }, py::arg("combined"));

    m.def(
        "welch_t",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = stats::welch_t(a, b);
            return py::dict(py::arg("t") = r.t, py::arg("df") = r.df, py::arg("p") = r.p);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) { return stats::pearson_r(x, y).r; },
        py::arg("x"), py::arg("y"));
}
