#include "promptmerge/text_codec.hpp"

#include "promptmerge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pm {

namespace {

constexpr const char* kSpaceToken = "<space>";

std::string encode_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::string sentinel_name(int k) {
    return "<extra_id_" + std::to_string(k) + ">";
}

} // namespace

Vocabulary Vocabulary::character_level(std::string_view charset, int num_sentinels) {
    if (num_sentinels < 1) throw ConfigError("vocabulary needs at least one sentinel");
    Vocabulary v;
    v.tokens_ = {"<pad>", "</s>", "<unk>"};
    for (char ch : charset) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 128) throw ConfigError("character vocabulary must be ASCII");
        if (v.ascii_to_id_[c] != unk) throw ConfigError("duplicate character in charset");
        v.ascii_to_id_[c] = static_cast<int>(v.tokens_.size());
        v.tokens_.push_back(ch == ' ' ? std::string(kSpaceToken) : std::string(1, ch));
    }
    v.first_sentinel_ = static_cast<int>(v.tokens_.size());
    v.num_sentinels_ = num_sentinels;
    for (int k = 0; k < num_sentinels; ++k) v.tokens_.push_back(sentinel_name(k));
    return v;
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary vocab = character_level(GlyphFont::builtin().charset(), 16);
    return vocab;
}

int Vocabulary::sentinel(int k) const {
    if (k < 0 || k >= num_sentinels_) throw IndexError("sentinel index out of range: " + std::to_string(k));
    return first_sentinel_ + k;
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
    TokenSequence ids;
    for (char32_t cp : decode_utf8(text)) ids.push_back(cp < 128 ? ascii_to_id_[cp] : unk);
    return ids;
}

std::string Vocabulary::detokenize(const TokenSequence& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == pad || id == eos) continue;
        if (id == unk) {
            out += encode_utf8(placeholder);
        } else if (is_sentinel(id)) {
            out += token(id);
        } else {
            const std::string& t = token(id);
            out += (t == kSpaceToken) ? std::string(" ") : t;
        }
    }
    return out;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream is{std::string(text)};
    while (std::getline(is, line)) lines.push_back(line);
    if (lines.size() < 4 || lines[0] != "<pad>" || lines[1] != "</s>" || lines[2] != "<unk>")
        throw ConfigError("vocabulary file must start with <pad>, </s>, <unk>");
    std::string charset;
    std::size_t i = 3;
    for (; i < lines.size() && lines[i].rfind("<extra_id_", 0) != 0; ++i) {
        if (lines[i] == kSpaceToken)
            charset.push_back(' ');
        else if (lines[i].size() == 1)
            charset.push_back(lines[i][0]);
        else
            throw ConfigError("unexpected vocabulary entry: " + lines[i]);
    }
    const int sentinels = static_cast<int>(lines.size() - i);
    for (int k = 0; k < sentinels; ++k)
        if (lines[i + static_cast<std::size_t>(k)] != sentinel_name(k)) throw ConfigError("sentinel block out of order");
    return character_level(charset, sentinels);
}

bool is_well_formed(const TokenSequence& seq, std::size_t max_len) {
    if (max_len > 0 && seq.size() > max_len) return false;
    bool seen_pad = false;
    for (int id : seq) {
        if (id == Vocabulary::pad)
            seen_pad = true;
        else if (seen_pad)
            return false;
    }
    return true;
}

std::string raster_text(const std::vector<WordBox>& words, double line_tolerance) {
    std::vector<const WordBox*> order;
    order.reserve(words.size());
    for (const auto& w : words) order.push_back(&w);
    auto centre = [](const WordBox* w) { return w->box.y + w->box.h / 2.0; };
    // Total order so the result does not depend on the input permutation.
    std::sort(order.begin(), order.end(), [&](const WordBox* a, const WordBox* b) {
        if (centre(a) != centre(b)) return centre(a) < centre(b);
        if (a->box.x != b->box.x) return a->box.x < b->box.x;
        if (a->text != b->text) return a->text < b->text;
        if (a->box.w != b->box.w) return a->box.w < b->box.w;
        return a->box.h < b->box.h;
    });
    std::vector<std::vector<const WordBox*>> lines;
    double previous = 0.0;
    for (const WordBox* w : order) {
        // Chained (single-linkage) grouping on the vertical centre.
        if (lines.empty() || centre(w) - previous > line_tolerance) lines.emplace_back();
        lines.back().push_back(w);
        previous = centre(w);
    }
    std::string text;
    for (auto& line : lines) {
        std::stable_sort(line.begin(), line.end(), [](const WordBox* a, const WordBox* b) {
            if (a->box.x != b->box.x) return a->box.x < b->box.x;
            return a->text < b->text;
        });
        for (const WordBox* w : line) {
            if (!text.empty()) text += ' ';
            text += w->text;
        }
    }
    return text;
}

TokenSequence serialize_raster(const std::vector<WordBox>& words, const Vocabulary& vocab,
                               const RasterOptions& options) {
    TokenSequence ids = vocab.tokenize(raster_text(words, options.line_tolerance));
    if (options.max_len > 0 && ids.size() + 1 > options.max_len) ids.resize(options.max_len - 1);
    ids.push_back(Vocabulary::eos);
    return ids;
}

SpanCorruptionSample corrupt_span(const TokenSequence& span, const std::vector<MaskedSpan>& mask,
                                  const Vocabulary& vocab) {
    if (static_cast<int>(mask.size()) + 1 > vocab.num_sentinels())
        throw ConfigError("not enough sentinels for " + std::to_string(mask.size()) + " masked sub-spans");
    SpanCorruptionSample s;
    s.source_span = span;
    s.mask_map = mask;
    int cursor = 0;
    int k = 0;
    for (const MaskedSpan& m : mask) {
        if (m.position < cursor || m.length <= 0 || m.position + m.length > static_cast<int>(span.size()))
            throw PreconditionError("mask sub-spans must be sorted, non-overlapping and inside the span");
        s.corrupted.insert(s.corrupted.end(), span.begin() + cursor, span.begin() + m.position);
        s.corrupted.push_back(vocab.sentinel(k));
        s.target.push_back(vocab.sentinel(k));
        s.target.insert(s.target.end(), span.begin() + m.position, span.begin() + m.position + m.length);
        cursor = m.position + m.length;
        ++k;
    }
    s.corrupted.insert(s.corrupted.end(), span.begin() + cursor, span.end());
    s.target.push_back(vocab.sentinel(k));
    return s;
}

namespace {

// Splits `items` into `segments` positive parts, uniformly over compositions.
std::vector<int> random_segmentation(int items, int segments, Rng& rng) {
    std::vector<int> cuts;
    if (segments > 1) {
        std::vector<int> pool(static_cast<std::size_t>(items - 1));
        for (int i = 0; i < items - 1; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
        for (int i = 0; i < segments - 1; ++i) {
            const std::size_t j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        cuts.assign(pool.begin(), pool.begin() + segments - 1);
        std::sort(cuts.begin(), cuts.end());
    }
    std::vector<int> lengths;
    int prev = 0;
    for (int c : cuts) {
        lengths.push_back(c - prev);
        prev = c;
    }
    lengths.push_back(items - prev);
    return lengths;
}

} // namespace

std::vector<MaskedSpan> random_span_mask(int length, const LmpmConfig& config, int max_spans, Rng& rng) {
    if (length <= 1 || config.corruption_rate <= 0.0) return {};
    int noise = static_cast<int>(std::lround(length * config.corruption_rate));
    noise = std::clamp(noise, 1, length - 1);
    int spans = static_cast<int>(std::lround(noise / config.mean_span));
    spans = std::clamp(spans, 1, std::min({noise, length - noise, max_spans}));
    const auto noise_lengths = random_segmentation(noise, spans, rng);
    const auto clean_lengths = random_segmentation(length - noise, spans, rng);
    std::vector<MaskedSpan> mask;
    int pos = 0;
    for (int i = 0; i < spans; ++i) {
        pos += clean_lengths[static_cast<std::size_t>(i)];
        mask.push_back(MaskedSpan{pos, noise_lengths[static_cast<std::size_t>(i)]});
        pos += noise_lengths[static_cast<std::size_t>(i)];
    }
    return mask;
}

SpanCorruptionSample sample_lmpm(const TokenSequence& doc_tokens, Rng& rng, const Vocabulary& vocab,
                                 const LmpmConfig& config) {
    if (config.span_min < 1 || config.span_max < config.span_min) throw ConfigError("invalid LMPM span bounds");
    std::size_t n = doc_tokens.size();
    while (n > 0 && (doc_tokens[n - 1] == Vocabulary::eos || doc_tokens[n - 1] == Vocabulary::pad)) --n;
    if (static_cast<int>(n) < config.span_min)
        throw SpanTooShort("document has " + std::to_string(n) + " tokens, span needs " +
                           std::to_string(config.span_min));
    const int len = static_cast<int>(rng.range(config.span_min, std::min<long long>(config.span_max, static_cast<long long>(n))));
    const int start = static_cast<int>(rng.range(0, static_cast<long long>(n) - len));
    TokenSequence span(doc_tokens.begin() + start, doc_tokens.begin() + start + len);
    auto mask = random_span_mask(len, config, vocab.num_sentinels() - 1, rng);
    SpanCorruptionSample s = corrupt_span(span, mask, vocab);
    s.window_start = start;
    return s;
}

TokenSequence reconstruct(const SpanCorruptionSample& sample, const Vocabulary& vocab) {
    // Split the target into sentinel-delimited runs: runs[k] follows S_k.
    std::vector<TokenSequence> runs;
    for (int id : sample.target) {
        if (vocab.is_sentinel(id)) {
            if (vocab.sentinel_index(id) != static_cast<int>(runs.size()))
                throw MalformedSample("target sentinels out of order");
            runs.emplace_back();
        } else {
            if (runs.empty()) throw MalformedSample("target must start with the first sentinel");
            runs.back().push_back(id);
        }
    }
    if (runs.empty()) throw MalformedSample("target has no sentinel");
    if (!runs.back().empty()) throw MalformedSample("target must end with the terminal sentinel");

    TokenSequence out;
    int expected = 0;
    for (int id : sample.corrupted) {
        if (!vocab.is_sentinel(id)) {
            out.push_back(id);
            continue;
        }
        if (vocab.sentinel_index(id) != expected) throw MalformedSample("input sentinels not in ascending order");
        if (expected + 1 >= static_cast<int>(runs.size())) throw MalformedSample("input has more sentinels than target");
        const auto& run = runs[static_cast<std::size_t>(expected)];
        out.insert(out.end(), run.begin(), run.end());
        ++expected;
    }
    if (expected + 1 != static_cast<int>(runs.size())) throw MalformedSample("target has more sentinels than input");
    return out;
}

} // namespace pm
