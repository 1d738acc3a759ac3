#pragma once

// On-disk corpora: images/<page_id>.png plus manifest.jsonl with one record
// per page (id, image path, seed, word boxes, question triples).

#include "promptmerge/doc_synth.hpp"

#include <json.hpp>

#include <filesystem>

namespace pm {

struct CorpusEntry {
    DocumentImage page;
    std::vector<VqaTriple> triples;
};

nlohmann::json manifest_record(const CorpusEntry& entry, const std::string& image_path);

// Overwrites manifest.jsonl; images are written only when write_images is set.
void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusEntry>& entries, bool write_images = true);
// Pixels are read back from the stored images.
std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir);

} // namespace pm
