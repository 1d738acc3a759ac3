#include "promptmerge/corpus_io.hpp"

#include "promptmerge/errors.hpp"
#include "promptmerge/image_io.hpp"

#include <fstream>

namespace pm {

using nlohmann::json;

namespace {

json box_json(const Box& b) {
    return json::array({b.x, b.y, b.w, b.h});
}

Box box_from(const json& j) {
    return Box{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

} // namespace

json manifest_record(const CorpusEntry& entry, const std::string& image_path) {
    json words = json::array();
    for (const auto& w : entry.page.words) words.push_back({{"text", w.text}, {"box", box_json(w.box)}});
    json vqa = json::array();
    for (const auto& t : entry.triples)
        vqa.push_back({{"question", t.question},
                       {"answers", t.answers},
                       {"locality", box_json(t.locality)},
                       {"kind", to_string(t.kind)}});
    return {{"page_id", entry.page.page_id},
            {"image_path", image_path},
            {"seed", entry.page.seed},
            {"width", entry.page.width},
            {"height", entry.page.height},
            {"words", words},
            {"vqa", vqa}};
}

void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusEntry>& entries, bool write_images) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream out(dir / "manifest.jsonl");
    if (!out) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
    for (const auto& e : entries) {
        const std::string rel = "images/" + e.page.page_id + ".png";
        if (write_images) write_image(dir / rel, page_to_raster(e.page));
        out << manifest_record(e, rel).dump() << '\n';
    }
}

std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.jsonl");
    if (!in) throw IoError("no corpus manifest in " + dir.string());
    std::vector<CorpusEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            CorpusEntry e;
            e.page.page_id = j.at("page_id").get<std::string>();
            e.page.seed = j.at("seed").get<std::uint64_t>();
            for (const auto& w : j.at("words")) e.page.words.push_back({w.at("text").get<std::string>(), box_from(w.at("box"))});
            for (const auto& t : j.at("vqa"))
                e.triples.push_back(VqaTriple{e.page.page_id, t.at("question").get<std::string>(),
                                              t.at("answers").get<std::vector<std::string>>(),
                                              box_from(t.at("locality")),
                                              question_kind_from_string(t.at("kind").get<std::string>())});
            raster_to_page(read_image(dir / j.at("image_path").get<std::string>()), e.page);
            if (e.page.width != j.at("width").get<int>() || e.page.height != j.at("height").get<int>())
                throw IoError("image size disagrees with manifest for " + e.page.page_id);
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw IoError("bad corpus record: " + std::string(ex.what()));
        }
    }
    return out;
}

} // namespace pm
