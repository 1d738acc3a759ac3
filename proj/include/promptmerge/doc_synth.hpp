#pragma once

// Procedural document pages with exact word-level ground truth, templated
// question/answer triples, and density-grouped corpora.

#include "promptmerge/font.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pm {

struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    long long area() const { return static_cast<long long>(w) * h; }
    bool contains(const Box& o) const {
        return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
    }
    friend bool operator==(const Box&, const Box&) = default;
};

long long intersection_area(const Box& a, const Box& b);

struct WordBox {
    std::string text;
    Box box;

    friend bool operator==(const WordBox&, const WordBox&) = default;
};

struct DocumentImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels; // row-major height x width, 1 = ink
    std::vector<WordBox> words;
    std::string page_id;
    std::uint64_t seed = 0;

    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

enum class QuestionKind { WordAfter, KeyValue, LineMember };

std::string to_string(QuestionKind kind);
QuestionKind question_kind_from_string(const std::string& s);

struct VqaTriple {
    std::string page_id;
    std::string question;
    std::vector<std::string> answers;
    Box locality;
    QuestionKind kind = QuestionKind::WordAfter;
};

struct SynthConfig {
    int width = 256;
    int height = 128;
    int word_count = 12;
    // 0 picks the line count automatically.
    int lines = 0;
    // Number of "key: value" pairs embedded in the page (two words each).
    int kv_pairs = 2;
    int margin = 2;
    // One glyph row plus margin, always left blank by the layout.
    int header_height = GlyphFont::cell_height + 2;
    int line_pitch = GlyphFont::cell_height + 1;
    // Fraction of filler words drawn as numbers instead of vocabulary words.
    double number_rate = 0.1;
    std::vector<std::string> vocabulary;
    std::vector<std::string> keys;

    static std::vector<std::string> default_vocabulary();
    static std::vector<std::string> default_keys();

    int line_slots() const { return (height - header_height - GlyphFont::cell_height) / line_pitch + 1; }
    void validate() const;
};

// Deterministic in (config, seed). page_id defaults to "s<seed>".
DocumentImage generate_page(const SynthConfig& config, std::uint64_t seed, const std::string& page_id = {});

struct VqaConfig {
    int max_word_after = 3;
    bool include_key_value = true;
    bool include_line = true;
};

std::vector<VqaTriple> generate_vqa(const DocumentImage& page, std::uint64_t seed, const VqaConfig& config = {});

DocumentImage render_prompt_on_image(const DocumentImage& page, const std::string& prompt);

// Words sorted into raster order (top-to-bottom lines, then left-to-right).
std::vector<WordBox> raster_order(const std::vector<WordBox>& words);
// Key/value rows of the form "<key>: <value>" on one line.
std::vector<std::pair<std::string, WordBox>> key_value_rows(const DocumentImage& page);

struct CorpusConfig {
    SynthConfig page;
    int pages = 10;
    int min_words = 10;
    int max_words = 40;
};

std::vector<DocumentImage> generate_corpus(const CorpusConfig& config, std::uint64_t seed);

struct DensityCorpus {
    std::vector<DocumentImage> pages;
    // threshold -> indices into pages with at least that many words
    std::map<int, std::vector<std::size_t>> groups;
};

std::map<int, std::vector<std::size_t>> density_groups(const std::vector<std::size_t>& word_counts,
                                                      const std::vector<int>& thresholds);
DensityCorpus density_corpus(const CorpusConfig& config, const std::vector<int>& thresholds, std::uint64_t seed);

} // namespace pm
