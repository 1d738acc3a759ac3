#include "promptmerge/errors.hpp"
#include "promptmerge/text_codec.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

using namespace pm;

namespace {

const Vocabulary& vocab() { return Vocabulary::standard(); }

WordBox word(std::string text, int x, int y, int w = 10, int h = 8) { return {std::move(text), {x, y, w, h}}; }

// Union-find over words whose vertical centres are within tolerance of each
// other; lines ordered by their smallest centre, words by (x, text).
std::string clustered_text(const std::vector<WordBox>& words, double tol) {
    const std::size_t n = words.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    auto centre = [&](std::size_t i) { return words[i].box.y + words[i].box.h / 2.0; };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(centre(i) - centre(j)) <= tol) parent[find(i)] = find(j);
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
    std::vector<std::vector<std::size_t>> lines;
    for (auto& [root, members] : groups) lines.push_back(members);
    auto top = [&](const std::vector<std::size_t>& line) {
        double m = centre(line.front());
        for (auto i : line) m = std::min(m, centre(i));
        return m;
    };
    std::sort(lines.begin(), lines.end(), [&](const auto& a, const auto& b) { return top(a) < top(b); });
    std::string out;
    for (auto& line : lines) {
        std::sort(line.begin(), line.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(words[a].box.x, words[a].text) < std::tie(words[b].box.x, words[b].text);
        });
        for (auto i : line) {
            if (!out.empty()) out += ' ';
            out += words[i].text;
        }
    }
    return out;
}

TokenSequence tokens_of(const std::string& s) { return vocab().tokenize(s); }

} // namespace

TEST_CASE("vocabulary layout") {
    const auto& v = vocab();
    CHECK(Vocabulary::pad == 0);
    CHECK(v.num_sentinels() == 16);
    for (int k = 1; k < v.num_sentinels(); ++k) CHECK(v.sentinel(k) == v.sentinel(k - 1) + 1);
    CHECK(v.sentinel(v.num_sentinels() - 1) == v.size() - 1);
    CHECK_THROWS(v.sentinel(16));
    CHECK(Vocabulary::parse(v.serialize()) == v);
}

TEST_CASE("tokenize and detokenize") {
    const auto& v = vocab();
    const auto ids = v.tokenize("ab a");
    REQUIRE(ids.size() == 4);
    CHECK(ids[0] == ids[3]);
    CHECK(v.detokenize({ids[2]}) == " ");
    CHECK(v.detokenize(ids) == "ab a");
    CHECK(v.tokenize("").empty());
    const auto unk = v.tokenize("a\xce\xb2");
    CHECK(std::count(unk.begin(), unk.end(), Vocabulary::unk) == 1);
    CHECK(v.detokenize(unk) == "a#");
    CHECK(v.detokenize({v.sentinel(2)}) == "<extra_id_2>");
}

TEST_CASE("tokenize round-trips charset strings") {
    const std::string charset = "abcdefghijklmnopqrstuvwxyz0123456789 :?.";
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string s;
        const auto len = rng.range(0, 40);
        for (long long i = 0; i < len; ++i)
            s += charset[static_cast<std::size_t>(rng.range(0, static_cast<long long>(charset.size()) - 1))];
        const auto ids = vocab().tokenize(s);
        CHECK(ids.size() == s.size());
        CHECK(vocab().detokenize(ids) == s);
    }
}

TEST_CASE("well-formed sequences") {
    CHECK(is_well_formed({5, 6, 0, 0}));
    CHECK_FALSE(is_well_formed({5, 0, 6}));
    CHECK_FALSE(is_well_formed({5, 6, 7}, 2));
}

TEST_CASE("raster order examples") {
    const std::vector<WordBox> words = {word("a", 50, 10), word("b", 5, 10), word("c", 20, 40)};
    CHECK(raster_text(words) == "b a c");
    auto shuffled = words;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(serialize_raster(shuffled, vocab()) == serialize_raster(words, vocab()));
    const auto seq = serialize_raster(words, vocab());
    CHECK(seq.back() == Vocabulary::eos);
    CHECK(vocab().detokenize(seq) == "b a c");

    // Centres 2px apart with a 4px tolerance share a line.
    CHECK(raster_text({word("a", 40, 10), word("b", 5, 12)}, 4.0) == "b a");
    CHECK(raster_text({word("a", 40, 10), word("b", 5, 20)}, 4.0) == "a b");
}

TEST_CASE("raster truncation keeps room for EOS") {
    RasterOptions opt;
    opt.max_len = 4;
    const auto seq = serialize_raster({word("abcdef", 0, 0)}, vocab(), opt);
    CHECK(seq.size() == 4);
    CHECK(seq.back() == Vocabulary::eos);
    CHECK(vocab().detokenize(seq) == "abc");
}

TEST_CASE("raster text matches line clustering on random layouts") {
    Rng rng(17);
    const std::vector<std::string> lexicon = {"aa", "b", "cat", "dog", "e", "fig"};
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<WordBox> words;
        const auto n = rng.range(1, 12);
        for (long long i = 0; i < n; ++i)
            words.push_back(word(lexicon[static_cast<std::size_t>(rng.range(0, 5))], static_cast<int>(rng.range(0, 60)),
                                 static_cast<int>(rng.range(0, 40)), 8, static_cast<int>(rng.range(6, 10))));
        const double tol = 4.0;
        const std::string expected = clustered_text(words, tol);
        CHECK(raster_text(words, tol) == expected);
        for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.below(i)]);
        CHECK(raster_text(words, tol) == expected);
    }
}

TEST_CASE("span corruption with a fixed mask") {
    const auto& v = vocab();
    const TokenSequence span = tokens_of("abcde");
    const auto s = corrupt_span(span, {{1, 2}}, v);
    CHECK(s.corrupted == TokenSequence{span[0], v.sentinel(0), span[3], span[4]});
    CHECK(s.target == TokenSequence{v.sentinel(0), span[1], span[2], v.sentinel(1)});
    CHECK(reconstruct(s, v) == span);

    const auto clean = corrupt_span(span, {}, v);
    CHECK(clean.corrupted == span);
    CHECK(clean.target == TokenSequence{v.sentinel(0)});
    CHECK(reconstruct(clean, v) == span);

    CHECK_THROWS_AS(corrupt_span(span, {{2, 2}, {1, 1}}, v), PreconditionError);
    CHECK_THROWS_AS(corrupt_span(span, {{4, 3}}, v), PreconditionError);
}

TEST_CASE("reconstruct rejects sentinel mismatches") {
    const auto& v = vocab();
    const TokenSequence span = tokens_of("abcdefg");
    auto s = corrupt_span(span, {{1, 1}, {4, 1}}, v);
    auto swapped = s;
    for (auto& id : swapped.corrupted) {
        if (id == v.sentinel(0)) id = v.sentinel(1);
        else if (id == v.sentinel(1)) id = v.sentinel(0);
    }
    CHECK_THROWS_AS(reconstruct(swapped, v), MalformedSample);
    auto no_terminal = s;
    no_terminal.target.pop_back();
    no_terminal.target.push_back(span[0]);
    CHECK_THROWS_AS(reconstruct(no_terminal, v), MalformedSample);
    auto extra = s;
    extra.target.push_back(v.sentinel(3));
    CHECK_THROWS_AS(reconstruct(extra, v), MalformedSample);
}

TEST_CASE("sample_lmpm round-trips and keeps sentinel order") {
    const auto& v = vocab();
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        TokenSequence doc;
        const auto n = rng.range(16, 200);
        for (long long i = 0; i < n; ++i) doc.push_back(static_cast<int>(rng.range(3, 40)));
        doc.push_back(Vocabulary::eos);
        const auto s = sample_lmpm(doc, rng, v);
        const int len = static_cast<int>(s.source_span.size());
        REQUIRE(len >= 16);
        REQUIRE(len <= 64);
        CHECK(TokenSequence(doc.begin() + s.window_start, doc.begin() + s.window_start + len) == s.source_span);
        CHECK(reconstruct(s, v) == s.source_span);
        int expected = 0;
        for (int id : s.corrupted)
            if (v.is_sentinel(id)) CHECK(v.sentinel_index(id) == expected++);
        CHECK(expected == static_cast<int>(s.mask_map.size()));
        CHECK(v.is_sentinel(s.target.back()));
        CHECK(v.sentinel_index(s.target.back()) == expected);
    }
}

TEST_CASE("masked fraction tracks the corruption rate") {
    const auto& v = vocab();
    Rng rng(2024);
    TokenSequence doc(300, 7);
    double total = 0.0;
    const int samples = 10000;
    for (int i = 0; i < samples; ++i) {
        const auto s = sample_lmpm(doc, rng, v);
        int masked = 0;
        for (const auto& m : s.mask_map) masked += m.length;
        total += static_cast<double>(masked) / static_cast<double>(s.source_span.size());
    }
    CHECK(std::abs(total / samples - 0.15) <= 0.02);

    LmpmConfig none;
    none.corruption_rate = 0.0;
    const auto s = sample_lmpm(doc, rng, v, none);
    CHECK(s.corrupted == s.source_span);
    CHECK(s.target == TokenSequence{v.sentinel(0)});
}

TEST_CASE("sample_lmpm needs a long enough document") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_lmpm(TokenSequence(15, 7), rng, vocab()), SpanTooShort);
    TokenSequence padded(15, 7);
    padded.insert(padded.end(), {Vocabulary::eos, Vocabulary::pad, Vocabulary::pad});
    CHECK_THROWS_AS(sample_lmpm(padded, rng, vocab()), SpanTooShort);
    CHECK_NOTHROW(sample_lmpm(TokenSequence(16, 7), rng, vocab()));
}
