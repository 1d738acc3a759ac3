#include "promptmerge/doc_synth.hpp"

#include "promptmerge/errors.hpp"
#include "promptmerge/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

namespace pm {

long long intersection_area(const Box& a, const Box& b) {
    const int w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const int h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (w <= 0 || h <= 0) return 0;
    return static_cast<long long>(w) * h;
}

std::string to_string(QuestionKind kind) {
    switch (kind) {
    case QuestionKind::WordAfter: return "word_after";
    case QuestionKind::KeyValue: return "key_value";
    case QuestionKind::LineMember: return "line_member";
    }
    return "word_after";
}

QuestionKind question_kind_from_string(const std::string& s) {
    if (s == "word_after") return QuestionKind::WordAfter;
    if (s == "key_value") return QuestionKind::KeyValue;
    if (s == "line_member") return QuestionKind::LineMember;
    throw ConfigError("unknown question kind: " + s);
}

std::vector<std::string> SynthConfig::default_vocabulary() {
    return {"the",  "of",   "and",  "to",   "in",   "is",   "for",  "on",   "by",   "at",   "an",   "or",
            "as",   "be",   "it",   "no",   "we",   "up",   "so",   "if",   "box",  "cat",  "dog",  "red",
            "sun",  "map",  "pen",  "cup",  "ink",  "oak",  "sea",  "sky",  "ice",  "owl",  "fox",  "bee",
            "jam",  "kit",  "log",  "mud",  "net",  "pig",  "rug",  "van",  "web",  "yak",  "zip",  "gem",
            "hub",  "arc",  "bus",  "car",  "east", "west", "blue", "gold", "iron", "lake", "moon", "nest",
            "palm", "rock", "salt", "tree", "wave", "wind", "yard", "zone"};
}

std::vector<std::string> SynthConfig::default_keys() {
    return {"total", "date", "name", "code", "tax", "fee", "qty", "ref",
            "sum",   "age",  "unit", "rate", "cost", "item", "room", "page"};
}

void SynthConfig::validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("page size must be positive");
    if (word_count < 0) throw ConfigError("word_count must be non-negative");
    if (header_height < GlyphFont::cell_height) throw ConfigError("header band shorter than a glyph row");
    if (line_pitch < GlyphFont::cell_height) throw ConfigError("line pitch shorter than a glyph row");
    if (kv_pairs < 0) throw ConfigError("kv_pairs must be non-negative");
    const GlyphFont& font = GlyphFont::builtin();
    auto check_words = [&](const std::vector<std::string>& list, const char* what) {
        for (const auto& w : list) {
            if (w.empty()) throw ConfigError(std::string(what) + " contains an empty word");
            for (char ch : w)
                if (ch == ' ' || !font.supports(static_cast<unsigned char>(ch)))
                    throw ConfigError(std::string(what) + " word outside the font charset: " + w);
        }
    };
    check_words(vocabulary, "vocabulary");
    check_words(keys, "keys");
}

namespace {

constexpr int kCell = GlyphFont::cell_width;

// A layout unit keeps a key and its value adjacent on one line.
struct Unit {
    std::vector<std::string> words;

    int chars() const {
        int n = 0;
        for (const auto& w : words) n += static_cast<int>(w.size());
        return n + static_cast<int>(words.size()) - 1;
    }
    int pixels() const { return chars() * kCell; }
};

void draw_text(DocumentImage& page, int x, int y, std::u32string_view text) {
    const GlyphFont& font = GlyphFont::builtin();
    for (char32_t ch : text) {
        const auto& bm = font.glyph(ch);
        for (int r = 0; r < GlyphFont::cell_height; ++r)
            for (int c = 0; c < GlyphFont::cell_width; ++c)
                if (bm[r * GlyphFont::cell_width + c]) page.at(y + r, x + c) = 1.0f;
        x += kCell;
    }
}

// Greedy packing of units into lines of at most `capacity` pixels.
std::vector<std::vector<Unit>> pack(const std::vector<Unit>& units, int capacity) {
    std::vector<std::vector<Unit>> lines;
    int used = 0;
    for (const Unit& u : units) {
        const int need = u.pixels();
        if (lines.empty() || used + kCell + need > capacity) {
            lines.emplace_back();
            used = need;
        } else {
            used += kCell + need;
        }
        lines.back().push_back(u);
    }
    return lines;
}

int line_pixels(const std::vector<Unit>& line) {
    int w = 0;
    for (const Unit& u : line) w += u.pixels();
    return w + kCell * (static_cast<int>(line.size()) - 1);
}

std::vector<std::vector<Unit>> distribute(const std::vector<Unit>& units, int lines, int capacity) {
    // Even split by unit count first; fall back to the tightest greedy
    // packing that still fits in `lines` lines.
    std::vector<std::vector<Unit>> out(static_cast<std::size_t>(lines));
    const int n = static_cast<int>(units.size());
    int k = 0;
    bool fits = true;
    for (int l = 0; l < lines; ++l) {
        const int take = n / lines + (l < n % lines ? 1 : 0);
        for (int i = 0; i < take; ++i) out[static_cast<std::size_t>(l)].push_back(units[static_cast<std::size_t>(k++)]);
        if (!out[static_cast<std::size_t>(l)].empty() && line_pixels(out[static_cast<std::size_t>(l)]) > capacity)
            fits = false;
    }
    if (fits) {
        std::erase_if(out, [](const auto& line) { return line.empty(); });
        return out;
    }
    int widest = 0, total = 0;
    for (const Unit& u : units) {
        widest = std::max(widest, u.pixels());
        total += u.pixels() + kCell;
    }
    int lo = widest, hi = capacity;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (static_cast<int>(pack(units, mid).size()) <= lines)
            hi = mid;
        else
            lo = mid + 1;
    }
    return pack(units, lo);
}

std::string random_word(const SynthConfig& config, Rng& rng) {
    if (rng.bernoulli(config.number_rate)) return std::to_string(rng.range(1, 99));
    return config.vocabulary[rng.below(config.vocabulary.size())];
}

} // namespace

DocumentImage generate_page(const SynthConfig& config_in, std::uint64_t seed, const std::string& page_id) {
    SynthConfig config = config_in;
    if (config.vocabulary.empty()) config.vocabulary = SynthConfig::default_vocabulary();
    if (config.keys.empty()) config.keys = SynthConfig::default_keys();
    config.validate();

    Rng rng = named_stream(seed, "page");
    DocumentImage page;
    page.width = config.width;
    page.height = config.height;
    page.pixels.assign(static_cast<std::size_t>(config.width) * config.height, 0.0f);
    page.page_id = page_id.empty() ? "s" + std::to_string(seed) : page_id;
    page.seed = seed;

    const int n = config.word_count;
    const int kv = std::min({config.kv_pairs, n / 2, static_cast<int>(config.keys.size())});
    std::vector<std::string> keys = config.keys;
    for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[rng.below(i)]);

    std::vector<Unit> units;
    for (int i = 0; i < kv; ++i)
        units.push_back(Unit{{keys[static_cast<std::size_t>(i)] + ":", std::to_string(rng.range(1, 999))}});
    for (int i = 0; i < n - 2 * kv; ++i) units.push_back(Unit{{random_word(config, rng)}});
    for (std::size_t i = units.size(); i > 1; --i) std::swap(units[i - 1], units[rng.below(i)]);
    if (units.empty()) return page;

    const int capacity = config.width - 2 * config.margin;
    const int slots = config.line_slots();
    for (const Unit& u : units)
        if (u.pixels() > capacity) throw CapacityExceeded("word wider than the page: " + u.words.front());
    const int min_lines = static_cast<int>(pack(units, capacity).size());
    if (min_lines > slots || slots <= 0)
        throw CapacityExceeded(std::to_string(n) + " words need " + std::to_string(min_lines) + " lines, page has " +
                               std::to_string(slots));
    int lines = config.lines;
    if (lines > 0) {
        if (lines > slots || lines < min_lines)
            throw CapacityExceeded("cannot lay out " + std::to_string(n) + " words on exactly " +
                                   std::to_string(lines) + " lines");
    } else {
        lines = std::min(slots, std::max(min_lines, (n + 5) / 6));
    }
    lines = std::min(lines, static_cast<int>(units.size()));

    const auto rows = distribute(units, lines, capacity);

    // Pick which line slots are used; sorted so y strictly increases.
    std::vector<int> slot_ids(static_cast<std::size_t>(slots));
    std::iota(slot_ids.begin(), slot_ids.end(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t j = i + rng.below(slot_ids.size() - i);
        std::swap(slot_ids[i], slot_ids[j]);
    }
    std::vector<int> chosen(slot_ids.begin(), slot_ids.begin() + static_cast<long>(rows.size()));
    std::sort(chosen.begin(), chosen.end());

    for (std::size_t l = 0; l < rows.size(); ++l) {
        const auto& row = rows[l];
        const int y = config.header_height + chosen[l] * config.line_pitch;
        int slack = capacity - line_pixels(row);
        const int gap_budget = slack / 2;
        int x = config.margin + static_cast<int>(rng.below(static_cast<std::uint64_t>(slack - gap_budget) + 1));
        slack = gap_budget;
        for (std::size_t u = 0; u < row.size(); ++u) {
            if (u > 0) {
                const int extra = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(slack, 2 * kCell)) + 1));
                slack -= extra;
                x += kCell + extra;
            }
            for (std::size_t wi = 0; wi < row[u].words.size(); ++wi) {
                const std::string& text = row[u].words[wi];
                if (wi > 0) x += kCell;
                const int w = static_cast<int>(text.size()) * kCell;
                page.words.push_back(WordBox{text, Box{x, y, w, GlyphFont::cell_height}});
                draw_text(page, x, y, decode_utf8(text));
                x += w;
            }
        }
    }
    return page;
}

std::vector<WordBox> raster_order(const std::vector<WordBox>& words) {
    std::vector<WordBox> out = words;
    std::stable_sort(out.begin(), out.end(), [](const WordBox& a, const WordBox& b) {
        if (a.box.y != b.box.y) return a.box.y < b.box.y;
        return a.box.x < b.box.x;
    });
    return out;
}

std::vector<std::pair<std::string, WordBox>> key_value_rows(const DocumentImage& page) {
    std::vector<std::pair<std::string, WordBox>> out;
    const auto words = raster_order(page.words);
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        const auto& k = words[i];
        if (k.text.size() < 2 || k.text.back() != ':') continue;
        if (words[i + 1].box.y != k.box.y) continue;
        out.emplace_back(k.text.substr(0, k.text.size() - 1), words[i + 1]);
    }
    return out;
}

std::vector<VqaTriple> generate_vqa(const DocumentImage& page, std::uint64_t seed, const VqaConfig& config) {
    if (page.words.size() < 2) throw PreconditionError("generate_vqa: page needs at least two words");
    Rng rng = named_stream(seed, "vqa/" + page.page_id);
    std::vector<VqaTriple> out;
    const auto words = raster_order(page.words);

    if (config.include_key_value) {
        for (const auto& [key, value] : key_value_rows(page))
            out.push_back(VqaTriple{page.page_id, "What is the value of " + key + "?", {value.text}, value.box,
                                    QuestionKind::KeyValue});
    }

    if (config.max_word_after > 0) {
        std::map<std::string, int> counts;
        for (const auto& w : words) ++counts[w.text];
        std::vector<std::size_t> anchors;
        for (std::size_t i = 0; i + 1 < words.size(); ++i) {
            const auto& w = words[i];
            if (counts[w.text] != 1 || w.text.back() == ':') continue;
            anchors.push_back(i);
        }
        for (std::size_t i = anchors.size(); i > 1; --i) std::swap(anchors[i - 1], anchors[rng.below(i)]);
        const std::size_t take = std::min(anchors.size(), static_cast<std::size_t>(config.max_word_after));
        std::vector<std::size_t> picked(anchors.begin(), anchors.begin() + static_cast<long>(take));
        std::sort(picked.begin(), picked.end());
        for (std::size_t i : picked) {
            const auto& next = words[i + 1];
            out.push_back(VqaTriple{page.page_id, "what is the word after " + words[i].text + "?", {next.text},
                                    next.box, QuestionKind::WordAfter});
        }
    }

    if (config.include_line) {
        std::vector<int> line_ys;
        for (const auto& w : words)
            if (line_ys.empty() || line_ys.back() != w.box.y) line_ys.push_back(w.box.y);
        const std::size_t line = rng.below(line_ys.size());
        VqaTriple t{page.page_id, "which word appears in line " + std::to_string(line + 1) + "?", {}, {},
                    QuestionKind::LineMember};
        for (const auto& w : words) {
            if (w.box.y != line_ys[line]) continue;
            if (t.answers.empty()) t.locality = w.box;
            if (std::find(t.answers.begin(), t.answers.end(), w.text) == t.answers.end()) t.answers.push_back(w.text);
        }
        out.push_back(std::move(t));
    }
    return out;
}

DocumentImage render_prompt_on_image(const DocumentImage& page, const std::string& prompt) {
    const int band = std::min(page.height, GlyphFont::cell_height + 2);
    for (int r = 0; r < band; ++r)
        for (int c = 0; c < page.width; ++c)
            if (page.at(r, c) != 0.0f) throw PreconditionError("render_prompt_on_image: header band is not blank");
    const std::u32string text = decode_utf8(prompt);
    const int margin = 2;
    if (static_cast<int>(text.size()) * GlyphFont::cell_width > page.width - 2 * margin || band < GlyphFont::cell_height + 1)
        throw CapacityExceeded("prompt of " + std::to_string(text.size()) + " characters does not fit the header band");
    DocumentImage out = page;
    draw_text(out, margin, 1, text);
    return out;
}

std::vector<DocumentImage> generate_corpus(const CorpusConfig& config, std::uint64_t seed) {
    if (config.pages < 0) throw ConfigError("pages must be non-negative");
    if (config.min_words < 0 || config.max_words < config.min_words) throw ConfigError("invalid word-count range");
    Rng rng = named_stream(seed, "corpus");
    std::vector<DocumentImage> pages;
    pages.reserve(static_cast<std::size_t>(config.pages));
    for (int i = 0; i < config.pages; ++i) {
        SynthConfig pc = config.page;
        pc.word_count = static_cast<int>(rng.range(config.min_words, config.max_words));
        char id[32];
        std::snprintf(id, sizeof(id), "p%05d", i);
        pages.push_back(generate_page(pc, stream_seed(seed, id), id));
    }
    return pages;
}

std::map<int, std::vector<std::size_t>> density_groups(const std::vector<std::size_t>& word_counts,
                                                      const std::vector<int>& thresholds) {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1]) throw PreconditionError("density thresholds must strictly increase");
    std::map<int, std::vector<std::size_t>> groups;
    for (int t : thresholds) {
        auto& g = groups[t];
        for (std::size_t i = 0; i < word_counts.size(); ++i)
            if (static_cast<long long>(word_counts[i]) >= t) g.push_back(i);
    }
    return groups;
}

DensityCorpus density_corpus(const CorpusConfig& config, const std::vector<int>& thresholds, std::uint64_t seed) {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1]) throw PreconditionError("density thresholds must strictly increase");
    DensityCorpus out;
    out.pages = generate_corpus(config, seed);
    std::vector<std::size_t> counts;
    for (const auto& p : out.pages) counts.push_back(p.words.size());
    out.groups = density_groups(counts, thresholds);
    return out;
}

} // namespace pm
