#pragma once

// ANLS, relaxed accuracy and exact match over prediction records, plus
// density-stratified and key/value evaluation.

#include "promptmerge/doc_synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pm {

struct PredictionRecord {
    std::string page_id;
    std::string question;
    std::string prediction;
    std::vector<std::string> gold;
    int word_count = 0;
};

void to_json(nlohmann::json& j, const PredictionRecord& r);
void from_json(const nlohmann::json& j, PredictionRecord& r);

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

std::size_t levenshtein(std::string_view a, std::string_view b);

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string fold(std::string_view s);

struct MetricOptions {
    double anls_threshold = 0.5;
    double relaxed_tolerance = 0.05;
};

enum class Metric { Anls, RelaxedAccuracy, ExactMatch };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

double anls_score(const PredictionRecord& r, const MetricOptions& opt = {});
bool relaxed_correct(const PredictionRecord& r, const MetricOptions& opt = {});
bool exact_correct(const PredictionRecord& r);

// EmptyEval on an empty record list for all three.
double anls(const std::vector<PredictionRecord>& records, const MetricOptions& opt = {});
double relaxed_accuracy(const std::vector<PredictionRecord>& records, const MetricOptions& opt = {});
double exact_match(const std::vector<PredictionRecord>& records);
double score(Metric m, const std::vector<PredictionRecord>& records, const MetricOptions& opt = {});

struct GroupScore {
    int threshold = 0;
    double score = 0.0;
    std::size_t n = 0;
};

struct EvalReport {
    std::string metric;
    double score = 0.0;
    std::size_t n = 0;
    // Groups with no records are left out.
    std::vector<GroupScore> groups;

    nlohmann::json to_json() const;
    std::string table() const;
};

// Group t holds every record with word_count >= t; groups overlap.
EvalReport density_eval(const std::vector<PredictionRecord>& records, const std::vector<int>& thresholds,
                        Metric metric = Metric::ExactMatch, const MetricOptions& opt = {});

// Prompts the predictor with "What is the value of <key>?" for every key row
// and scores ANLS against the value. Pages without keys add nothing.
using Predictor = std::function<std::string(const DocumentImage& page, const std::string& question)>;
std::string kv_question(const std::string& key);
std::vector<PredictionRecord> relaxed_kv_predictions(const std::vector<DocumentImage>& pages,
                                                     const Predictor& predictor);
EvalReport relaxed_kv_eval(const std::vector<DocumentImage>& pages, const Predictor& predictor,
                           const MetricOptions& opt = {});

} // namespace pm
