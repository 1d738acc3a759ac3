#pragma once

// End-to-end helpers shared by the CLI and the acceptance runs: question
// answering over a corpus and the baseline-vs-prompt-merging comparison.

#include "promptmerge/metrics.hpp"
#include "promptmerge/trainer.hpp"

namespace pm {

// Greedy answers for every triple. Arms decide whether the page gets the
// question drawn on it; the question always reaches the LM.
std::vector<PredictionRecord> predict_vqa(const Model& model, Arm arm, const VqaCorpus& corpus, int max_len = 16);

VqaCorpus make_vqa_corpus(const CorpusConfig& config, std::uint64_t seed, const VqaConfig& vqa = {});

struct TrendConfig {
    CorpusConfig corpus;
    int train_pages = 200;
    int eval_pages = 100;
    ModelConfig model;
    TrainPlan ltr;
    TrainPlan lmpm;
    TrainPlan finetune;
    std::vector<int> thresholds = {20, 60, 100};

    // Dense pages (60-120 words) and the default staged recipe.
    static TrendConfig defaults();
};

struct TrendSeedResult {
    std::uint64_t seed = 0;
    EvalReport baseline;
    EvalReport vilma;
    double gap = 0.0;               // vilma - baseline, overall EM
    std::vector<double> group_gaps; // per threshold present in both reports
    bool gap_non_decreasing = false;
    double seconds = 0.0;
};

// One seed: shared LtR, then baseline fine-tune and LMPM + prompt-merging
// fine-tune, both scored by EM on held-out pages.
TrendSeedResult run_trend_seed(const TrendConfig& config, std::uint64_t seed,
                               const std::function<void(const std::string&)>& log = {});

} // namespace pm
