#include "promptmerge/errors.hpp"
#include "promptmerge/pipeline.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pm;

namespace {

py::array_t<float> pixels(const DocumentImage& page) {
    py::array_t<float> out({page.height, page.width});
    std::copy(page.pixels.begin(), page.pixels.end(), out.mutable_data());
    return out;
}

py::array_t<double> to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

std::vector<PredictionRecord> records(const std::vector<std::pair<std::string, std::vector<std::string>>>& pairs) {
    std::vector<PredictionRecord> out;
    for (const auto& [pred, gold] : pairs) out.push_back({"", "", pred, gold, 0});
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Prompt-conditioned document understanding core";

    static py::exception<Error> base(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<StageError>(m, "StageError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<CapacityExceeded>(m, "CapacityExceeded", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<SpanTooShort>(m, "SpanTooShort", base.ptr());
    py::register_exception<MalformedSample>(m, "MalformedSample", base.ptr());
    py::register_exception<EmptyEval>(m, "EmptyEval", base.ptr());
    py::register_exception<IndexError>(m, "IndexOutOfRange", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<Box>(m, "Box")
        .def_readonly("x", &Box::x)
        .def_readonly("y", &Box::y)
        .def_readonly("w", &Box::w)
        .def_readonly("h", &Box::h)
        .def("__repr__", [](const Box& b) {
            return "Box(" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " + std::to_string(b.w) + ", " +
                   std::to_string(b.h) + ")";
        });

    py::class_<WordBox>(m, "WordBox")
        .def(py::init([](std::string text, int x, int y, int w, int h) { return WordBox{std::move(text), {x, y, w, h}}; }),
             py::arg("text"), py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
        .def_readonly("text", &WordBox::text)
        .def_readonly("box", &WordBox::box);

    py::class_<DocumentImage>(m, "Page")
        .def_readonly("width", &DocumentImage::width)
        .def_readonly("height", &DocumentImage::height)
        .def_readonly("page_id", &DocumentImage::page_id)
        .def_readonly("words", &DocumentImage::words)
        .def_property_readonly("pixels", &pixels);

    py::class_<VqaTriple>(m, "Question")
        .def_readonly("page_id", &VqaTriple::page_id)
        .def_readonly("question", &VqaTriple::question)
        .def_readonly("answers", &VqaTriple::answers)
        .def_readonly("locality", &VqaTriple::locality);

    m.def(
        "generate_page",
        [](std::uint64_t seed, int word_count, int width, int height, int kv_pairs, const std::string& page_id) {
            SynthConfig c;
            c.word_count = word_count;
            c.width = width;
            c.height = height;
            c.kv_pairs = kv_pairs;
            return generate_page(c, seed, page_id);
        },
        py::arg("seed"), py::arg("word_count") = 12, py::arg("width") = 256, py::arg("height") = 128,
        py::arg("kv_pairs") = 2, py::arg("page_id") = "page");
    m.def("generate_questions", [](const DocumentImage& p, std::uint64_t seed) { return generate_vqa(p, seed); },
          py::arg("page"), py::arg("seed") = 0);
    m.def("render_prompt", &render_prompt_on_image, py::arg("page"), py::arg("prompt"));

    m.def("tokenize", [](const std::string& s) { return Vocabulary::standard().tokenize(s); });
    m.def("detokenize", [](const TokenSequence& ids) { return Vocabulary::standard().detokenize(ids); });
    m.def("vocab_size", [] { return Vocabulary::standard().size(); });
    m.def("raster_text", [](const std::vector<WordBox>& words) { return raster_text(words); });

    m.def(
        "sample_lmpm",
        [](const TokenSequence& tokens, std::uint64_t seed) {
            Rng rng(seed);
            const auto s = sample_lmpm(tokens, rng, Vocabulary::standard());
            py::dict d;
            d["source_span"] = s.source_span;
            d["corrupted"] = s.corrupted;
            d["target"] = s.target;
            d["window_start"] = s.window_start;
            return d;
        },
        py::arg("tokens"), py::arg("seed") = 0);
    m.def("reconstruct", [](const TokenSequence& corrupted, const TokenSequence& target) {
        SpanCorruptionSample s;
        s.corrupted = corrupted;
        s.target = target;
        return reconstruct(s, Vocabulary::standard());
    });

    m.def("levenshtein", [](const std::string& a, const std::string& b) { return levenshtein(a, b); });
    m.def("anls", [](const std::vector<std::pair<std::string, std::vector<std::string>>>& r) { return anls(records(r)); });
    m.def("exact_match",
          [](const std::vector<std::pair<std::string, std::vector<std::string>>>& r) { return exact_match(records(r)); });
    m.def("relaxed_accuracy", [](const std::vector<std::pair<std::string, std::vector<std::string>>>& r) {
        return relaxed_accuracy(records(r));
    });

    m.def(
        "lr_at",
        [](int step, int steps, int warmup, double base_lr, double min_lr) {
            TrainPlan p;
            p.steps = steps;
            p.warmup_steps = warmup;
            p.base_lr = base_lr;
            p.min_lr = min_lr;
            p.validate();
            return lr_at(step, p);
        },
        py::arg("step"), py::arg("steps"), py::arg("warmup"), py::arg("base_lr"), py::arg("min_lr") = 0.0);

    py::class_<Model>(m, "Model")
        .def_static(
            "load",
            [](const std::filesystem::path& dir) {
                Checkpoint c = load_checkpoint(dir);
                return std::move(c).to_model();
            },
            py::arg("path"))
        .def_static(
            "fresh",
            [](bool prompt_merging, std::uint64_t seed) {
                ModelConfig c;
                c.seed = seed;
                if (prompt_merging) {
                    c.encoder.mode = MergeMode::Vilma;
                    c.encoder.vilma_stages = {1, 2, 3, 4};
                }
                return Model(c);
            },
            py::arg("prompt_merging") = true, py::arg("seed") = 0)
        .def_property_readonly("parameter_count",
                               [](const Model& model) {
                                   std::size_t n = 0;
                                   for (const auto& p : model.params()) n += static_cast<std::size_t>(p->value.size());
                                   return n;
                               })
        .def("answer", &Model::answer, py::arg("page"), py::arg("question"), py::arg("prompt_to_lm") = true,
             py::arg("max_len") = 16, py::call_guard<py::gil_scoped_release>())
        .def("attention", [](const Model& model, const DocumentImage& page, const std::string& question) {
            py::list out;
            for (const auto& r : model.capture_attention(page, model.vocab().tokenize(question))) {
                py::dict d;
                d["stage"] = r.stage;
                d["grid"] = py::make_tuple(r.grid_h, r.grid_w);
                d["weights"] = to_numpy(r.head_average());
                out.append(d);
            }
            return out;
        });
}
