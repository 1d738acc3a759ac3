#include "promptmerge/metrics.hpp"

#include "promptmerge/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pm {

using nlohmann::json;

void to_json(json& j, const PredictionRecord& r) {
    j = {{"page_id", r.page_id},
         {"question", r.question},
         {"prediction", r.prediction},
         {"gold", r.gold},
         {"word_count", r.word_count}};
}

void from_json(const json& j, PredictionRecord& r) {
    j.at("page_id").get_to(r.page_id);
    j.at("question").get_to(r.question);
    j.at("prediction").get_to(r.prediction);
    j.at("gold").get_to(r.gold);
    j.at("word_count").get_to(r.word_count);
    if (r.gold.empty()) throw MalformedSample("prediction record without gold answers");
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << json(r).dump() << '\n';
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<PredictionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line).get<PredictionRecord>());
        } catch (const json::exception& e) {
            throw IoError("bad prediction record: " + std::string(e.what()));
        }
    }
    return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

std::string fold(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string to_string(Metric m) {
    switch (m) {
    case Metric::Anls: return "anls";
    case Metric::RelaxedAccuracy: return "ra";
    case Metric::ExactMatch: return "em";
    }
    return "?";
}

Metric metric_from_string(const std::string& s) {
    if (s == "anls") return Metric::Anls;
    if (s == "ra" || s == "relaxed-accuracy") return Metric::RelaxedAccuracy;
    if (s == "em" || s == "exact-match") return Metric::ExactMatch;
    throw ConfigError("unknown metric: " + s);
}

namespace {

void require_gold(const PredictionRecord& r) {
    if (r.gold.empty()) throw MalformedSample("prediction record without gold answers");
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <typename F>
double mean_over(const std::vector<PredictionRecord>& records, F per_record) {
    if (records.empty()) throw EmptyEval("no records to score");
    double total = 0.0;
    for (const auto& r : records) total += per_record(r);
    return total / static_cast<double>(records.size());
}

} // namespace

double anls_score(const PredictionRecord& r, const MetricOptions& opt) {
    require_gold(r);
    const std::string pred = fold(r.prediction);
    double best = 0.0;
    for (const auto& g : r.gold) {
        const std::string gold = fold(g);
        const std::size_t longest = std::max(pred.size(), gold.size());
        const double nl = longest == 0 ? 0.0 : static_cast<double>(levenshtein(pred, gold)) / longest;
        if (nl < opt.anls_threshold) best = std::max(best, 1.0 - nl);
    }
    return best;
}

bool relaxed_correct(const PredictionRecord& r, const MetricOptions& opt) {
    require_gold(r);
    const std::string pred = fold(r.prediction);
    for (const auto& g : r.gold) {
        const std::string gold = fold(g);
        if (auto gv = parse_number(gold)) {
            auto pv = parse_number(pred);
            if (!pv) continue;
            if (*gv == 0.0 ? *pv == 0.0 : std::abs(*pv - *gv) <= opt.relaxed_tolerance * std::abs(*gv)) return true;
        } else if (pred == gold) {
            return true;
        }
    }
    return false;
}

bool exact_correct(const PredictionRecord& r) {
    require_gold(r);
    const std::string pred = fold(r.prediction);
    return std::any_of(r.gold.begin(), r.gold.end(), [&](const std::string& g) { return fold(g) == pred; });
}

double anls(const std::vector<PredictionRecord>& records, const MetricOptions& opt) {
    return mean_over(records, [&](const PredictionRecord& r) { return anls_score(r, opt); });
}

double relaxed_accuracy(const std::vector<PredictionRecord>& records, const MetricOptions& opt) {
    return mean_over(records, [&](const PredictionRecord& r) { return relaxed_correct(r, opt) ? 1.0 : 0.0; });
}

double exact_match(const std::vector<PredictionRecord>& records) {
    return mean_over(records, [](const PredictionRecord& r) { return exact_correct(r) ? 1.0 : 0.0; });
}

double score(Metric m, const std::vector<PredictionRecord>& records, const MetricOptions& opt) {
    switch (m) {
    case Metric::Anls: return anls(records, opt);
    case Metric::RelaxedAccuracy: return relaxed_accuracy(records, opt);
    case Metric::ExactMatch: return exact_match(records);
    }
    return 0.0;
}

json EvalReport::to_json() const {
    json groups_json = json::array();
    for (const auto& g : groups) groups_json.push_back({{"min_words", g.threshold}, {"score", g.score}, {"n", g.n}});
    return {{"metric", metric}, {"score", score}, {"n", n}, {"groups", groups_json}};
}

std::string EvalReport::table() const {
    std::ostringstream out;
    char line[96];
    std::snprintf(line, sizeof line, "%-12s %10s %8s\n", "group", metric.c_str(), "n");
    out << line;
    std::snprintf(line, sizeof line, "%-12s %10.4f %8zu\n", "all", score, n);
    out << line;
    for (const auto& g : groups) {
        const std::string label = ">=" + std::to_string(g.threshold);
        std::snprintf(line, sizeof line, "%-12s %10.4f %8zu\n", label.c_str(), g.score, g.n);
        out << line;
    }
    return out.str();
}

EvalReport density_eval(const std::vector<PredictionRecord>& records, const std::vector<int>& thresholds,
                        Metric metric, const MetricOptions& opt) {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1]) throw PreconditionError("density thresholds must increase");
    EvalReport report;
    report.metric = to_string(metric);
    report.n = records.size();
    report.score = records.empty() ? 0.0 : score(metric, records, opt);
    for (int t : thresholds) {
        std::vector<PredictionRecord> group;
        for (const auto& r : records)
            if (r.word_count >= t) group.push_back(r);
        if (group.empty()) continue;
        report.groups.push_back({t, score(metric, group, opt), group.size()});
    }
    return report;
}

std::string kv_question(const std::string& key) {
    return "What is the value of " + key + "?";
}

std::vector<PredictionRecord> relaxed_kv_predictions(const std::vector<DocumentImage>& pages,
                                                     const Predictor& predictor) {
    std::vector<PredictionRecord> out;
    for (const auto& page : pages) {
        for (const auto& [key, value] : key_value_rows(page)) {
            PredictionRecord r;
            r.page_id = page.page_id;
            r.question = kv_question(key);
            r.prediction = predictor(page, r.question);
            r.gold = {value.text};
            r.word_count = static_cast<int>(page.words.size());
            out.push_back(std::move(r));
        }
    }
    return out;
}

EvalReport relaxed_kv_eval(const std::vector<DocumentImage>& pages, const Predictor& predictor,
                           const MetricOptions& opt) {
    const auto records = relaxed_kv_predictions(pages, predictor);
    EvalReport report;
    report.metric = to_string(Metric::Anls);
    report.n = records.size();
    report.score = records.empty() ? 0.0 : anls(records, opt);
    return report;
}

} // namespace pm
