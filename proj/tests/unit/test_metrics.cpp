#include "promptmerge/errors.hpp"
#include "promptmerge/metrics.hpp"
#include "promptmerge/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace pm;

namespace {

// Textbook recursion over the first characters, no table.
std::size_t brute_distance(std::string_view a, std::string_view b) {
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    if (a.front() == b.front()) return brute_distance(a.substr(1), b.substr(1));
    return 1 + std::min({brute_distance(a.substr(1), b), brute_distance(a, b.substr(1)),
                         brute_distance(a.substr(1), b.substr(1))});
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
    std::vector<std::string> out = {""};
    for (std::size_t begin = 0; begin < out.size(); ++begin) {
        if (out[begin].size() == max_len) continue;
        for (char c : alphabet) out.push_back(out[begin] + c);
    }
    return out;
}

PredictionRecord rec(std::string pred, std::vector<std::string> gold, int words = 0) {
    return {"p", "q", std::move(pred), std::move(gold), words};
}

} // namespace

TEST_CASE("levenshtein worked examples") {
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("same", "same") == 0);
}

TEST_CASE("levenshtein matches brute force on every short pair") {
    const auto strings = all_strings("abc", 5);
    REQUIRE(strings.size() == 364);
    std::size_t mismatches = 0;
    for (const auto& a : strings)
        for (const auto& b : strings) mismatches += levenshtein(a, b) != brute_distance(a, b);
    CHECK(mismatches == 0);
}

TEST_CASE("levenshtein is a metric") {
    Rng rng(8);
    auto random_string = [&] {
        std::string s;
        const auto n = rng.range(0, 7);
        for (long long i = 0; i < n; ++i) s += static_cast<char>('a' + rng.range(0, 3));
        return s;
    };
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_string(), b = random_string(), c = random_string();
        CHECK(levenshtein(a, b) == levenshtein(b, a));
        CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
        CHECK((levenshtein(a, b) == 0) == (a == b));
        CHECK(levenshtein(a, b) == brute_distance(a, b));
    }
}

TEST_CASE("folding") {
    CHECK(fold("  Hello \t  World ") == "hello world");
    CHECK(fold("") == "");
}

TEST_CASE("anls examples") {
    CHECK(anls({rec("Monday", {"monday"})}) == 1.0);
    CHECK(std::abs(anls({rec("mondey", {"monday"})}) - (1.0 - 1.0 / 6.0)) <= 1e-6);
    CHECK(anls({rec("", {"monday"})}) == 0.0);
    CHECK(anls({rec("abc", {"xyz", "abd"})}) == doctest::Approx(2.0 / 3.0));
    // NL of exactly the threshold scores zero.
    CHECK(anls({rec("ab", {"cd"})}) == 0.0);
    CHECK(anls({rec("ab", {"ax"})}) == 0.0);
    CHECK(anls({rec("abc", {"abx"})}, {0.5, 0.05}) == doctest::Approx(2.0 / 3.0));
    CHECK(anls({rec("x", {"x"}), rec("y", {"z"})}) == 0.5);
    CHECK_THROWS_AS(anls({}), EmptyEval);
}

TEST_CASE("anls does not increase with edit distance") {
    const std::string gold = "abcdefgh";
    double previous = 1.0;
    for (std::size_t k = 0; k <= gold.size(); ++k) {
        std::string pred = gold;
        for (std::size_t i = 0; i < k; ++i) pred[i] = 'z';
        const double s = anls({rec(pred, {gold})});
        CHECK(s <= previous);
        previous = s;
    }
}

TEST_CASE("relaxed accuracy examples") {
    CHECK(relaxed_correct(rec("10.2", {"10.0"})));
    CHECK_FALSE(relaxed_correct(rec("10.6", {"10.0"})));
    CHECK(relaxed_correct(rec("ten", {"ten"})));
    CHECK_FALSE(relaxed_correct(rec("ten", {"10"})));
    CHECK_FALSE(relaxed_correct(rec("10x", {"10"})));
    CHECK(relaxed_correct(rec("0", {"0"})));
    CHECK_FALSE(relaxed_correct(rec("0.001", {"0"})));
    CHECK(relaxed_accuracy({rec("10.2", {"10.0"}), rec("10.6", {"10.0"})}) == 0.5);
    CHECK_THROWS_AS(relaxed_accuracy({}), EmptyEval);
}

TEST_CASE("exact match examples") {
    CHECK(exact_match({rec("42 ", {"42"})}) == 1.0);
    CHECK(exact_match({rec("42.", {"42"})}) == 0.0);
    CHECK(exact_match({rec("b", {"a", "B"})}) == 1.0);
    CHECK_THROWS_AS(exact_match({}), EmptyEval);
}

TEST_CASE("metrics stay in range and agree on perfect predictions") {
    Rng rng(4);
    std::vector<PredictionRecord> records;
    for (int i = 0; i < 300; ++i) {
        std::string p, g;
        for (int k = 0; k < 4; ++k) {
            p += static_cast<char>('a' + rng.range(0, 2));
            g += static_cast<char>('a' + rng.range(0, 2));
        }
        records.push_back(rec(p, {g}));
        CHECK(anls_score(records.back()) >= 0.0);
        CHECK(anls_score(records.back()) <= 1.0);
        const auto same = rec(g, {g});
        CHECK(anls_score(same) == 1.0);
        CHECK(relaxed_correct(same));
        CHECK(exact_correct(same));
    }
    for (Metric m : {Metric::Anls, Metric::RelaxedAccuracy, Metric::ExactMatch}) {
        const double s = score(m, records);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK(metric_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(metric_from_string("bleu"), ConfigError);
}

TEST_CASE("density groups") {
    std::vector<PredictionRecord> records = {rec("a", {"a"}, 25), rec("b", {"x"}, 45), rec("c", {"c"}, 70),
                                             rec("d", {"d"}, 110), rec("e", {"x"}, 10)};
    const auto report = density_eval(records, {20, 40, 60, 80, 100});
    CHECK(report.n == 5);
    CHECK(report.score == doctest::Approx(0.6));
    REQUIRE(report.groups.size() == 5);
    const std::vector<std::size_t> sizes = {4, 3, 2, 1, 1};
    for (std::size_t i = 0; i < sizes.size(); ++i) CHECK(report.groups[i].n == sizes[i]);
    CHECK(report.groups[0].score == doctest::Approx(0.75));
    CHECK(report.groups[1].score == doctest::Approx(2.0 / 3.0));
    CHECK(report.groups[2].score == 1.0);

    const auto single = density_eval(records, {0});
    CHECK(single.groups.size() == 1);
    CHECK(single.groups[0].score == single.score);
    CHECK(density_eval(records, {200}).groups.empty());
    CHECK_THROWS_AS(density_eval(records, {40, 20}), PreconditionError);
    CHECK(report.to_json()["groups"].size() == 5);
    CHECK(report.table().find("100") != std::string::npos);
}

TEST_CASE("key-value extraction") {
    DocumentImage page;
    page.page_id = "kv";
    page.width = 128;
    page.height = 64;
    page.words = {{"total:", {2, 12, 36, 8}}, {"42", {44, 12, 12, 8}}, {"apple", {2, 30, 30, 8}}};
    const auto records = relaxed_kv_predictions({page}, [](const DocumentImage&, const std::string&) { return "42"; });
    REQUIRE(records.size() == 1);
    CHECK(records[0].question == "What is the value of total?");
    CHECK(records[0].gold == std::vector<std::string>{"42"});

    const Predictor perfect = [](const DocumentImage& p, const std::string& q) {
        for (const auto& [key, value] : key_value_rows(p))
            if (kv_question(key) == q) return value.text;
        return std::string();
    };
    SynthConfig c;
    c.kv_pairs = 3;
    std::vector<DocumentImage> pages;
    for (std::uint64_t s = 0; s < 5; ++s) pages.push_back(generate_page(c, s, "k" + std::to_string(s)));
    const auto report = relaxed_kv_eval(pages, perfect);
    CHECK(report.n == 15);
    CHECK(report.score == 1.0);

    DocumentImage bare = page;
    bare.words = {{"apple", {2, 30, 30, 8}}};
    const auto empty = relaxed_kv_eval({bare}, perfect);
    CHECK(empty.n == 0);
}

TEST_CASE("prediction records round-trip through jsonl") {
    const auto path = std::filesystem::temp_directory_path() / "promptmerge_preds.jsonl";
    const std::vector<PredictionRecord> records = {rec("a b", {"a", "b"}, 12), rec("", {"x"}, 0)};
    write_predictions(path, records);
    const auto back = read_predictions(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].prediction == "a b");
    CHECK(back[0].gold == records[0].gold);
    CHECK(back[0].word_count == 12);
    CHECK(back[1].prediction.empty());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_predictions(path), IoError);
}
