#pragma once

// Character-level tokenizer, raster-scan transcript serialization and
// sentinel-based span corruption for masked prompt modeling.

#include "promptmerge/doc_synth.hpp"
#include "promptmerge/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace pm {

using TokenSequence = std::vector<int>;

class Vocabulary {
public:
    static constexpr int pad = 0;
    static constexpr int eos = 1;
    static constexpr int unk = 2;
    static constexpr char32_t placeholder = U'#';

    // Specials, then one token per charset character, then the sentinel block.
    static Vocabulary character_level(std::string_view charset, int num_sentinels);
    // Font charset with 16 sentinels.
    static const Vocabulary& standard();

    int size() const { return static_cast<int>(tokens_.size()); }
    int num_sentinels() const { return num_sentinels_; }
    int sentinel(int k) const;
    bool is_sentinel(int id) const { return id >= first_sentinel_ && id < first_sentinel_ + num_sentinels_; }
    int sentinel_index(int id) const { return id - first_sentinel_; }
    bool is_special(int id) const { return id == pad || id == eos || id == unk || is_sentinel(id); }

    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    TokenSequence tokenize(std::string_view text) const;
    // PAD and EOS are dropped, UNK becomes the placeholder character and
    // sentinels render as <extra_id_k>.
    std::string detokenize(const TokenSequence& ids) const;

    // One token per line; line index is the id.
    std::string serialize() const;
    static Vocabulary parse(std::string_view text);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::vector<int> ascii_to_id_ = std::vector<int>(128, unk);
    int first_sentinel_ = 0;
    int num_sentinels_ = 0;
};

// PAD may only appear as trailing padding; length bounded when max_len > 0.
bool is_well_formed(const TokenSequence& seq, std::size_t max_len = 0);

struct RasterOptions {
    double line_tolerance = GlyphFont::cell_height / 2.0;
    // 0 = unlimited; otherwise the transcript is cut so that tokens + EOS fit.
    std::size_t max_len = 0;
};

// Groups words into lines by vertical centre, orders lines top-to-bottom and
// words left-to-right, joins with single spaces and appends EOS.
std::string raster_text(const std::vector<WordBox>& words, double line_tolerance = GlyphFont::cell_height / 2.0);
TokenSequence serialize_raster(const std::vector<WordBox>& words, const Vocabulary& vocab,
                               const RasterOptions& options = {});

struct LmpmConfig {
    double corruption_rate = 0.15;
    double mean_span = 3.0;
    int span_min = 16;
    int span_max = 64;
};

struct MaskedSpan {
    int position = 0;
    int length = 0;
    friend bool operator==(const MaskedSpan&, const MaskedSpan&) = default;
};

struct SpanCorruptionSample {
    TokenSequence source_span;
    TokenSequence corrupted; // fed to the model as the prompt
    TokenSequence target;    // sentinel-delimited masked runs + terminal sentinel
    std::vector<MaskedSpan> mask_map;
    int window_start = 0;
};

// Replaces each masked sub-span with the next sentinel. mask must be sorted
// and non-overlapping.
SpanCorruptionSample corrupt_span(const TokenSequence& span, const std::vector<MaskedSpan>& mask,
                                  const Vocabulary& vocab);

// T5-style noise mask over `length` tokens: alternating clean / masked runs,
// starting clean.
std::vector<MaskedSpan> random_span_mask(int length, const LmpmConfig& config, int max_spans, Rng& rng);

// Samples a local window of the document transcript (trailing EOS/PAD are
// ignored) and corrupts it.
SpanCorruptionSample sample_lmpm(const TokenSequence& doc_tokens, Rng& rng, const Vocabulary& vocab,
                                 const LmpmConfig& config = {});

TokenSequence reconstruct(const SpanCorruptionSample& sample, const Vocabulary& vocab);

} // namespace pm
