#include "promptmerge/pipeline.hpp"

#include "promptmerge/errors.hpp"

#include <chrono>

namespace pm {

std::vector<PredictionRecord> predict_vqa(const Model& model, Arm arm, const VqaCorpus& corpus, int max_len) {
    std::vector<PredictionRecord> out;
    out.reserve(corpus.triples.size());
    for (const auto& t : corpus.triples) {
        const DocumentImage& page = corpus.page(t.page_id);
        PredictionRecord r;
        r.page_id = t.page_id;
        r.question = t.question;
        r.prediction = model.answer(arm_view(arm, page, t.question), t.question, true, max_len);
        r.gold = t.answers;
        r.word_count = static_cast<int>(page.words.size());
        out.push_back(std::move(r));
    }
    return out;
}

VqaCorpus make_vqa_corpus(const CorpusConfig& config, std::uint64_t seed, const VqaConfig& vqa) {
    VqaCorpus c;
    c.pages = generate_corpus(config, seed);
    for (const auto& p : c.pages) {
        auto triples = generate_vqa(p, seed, vqa);
        c.triples.insert(c.triples.end(), triples.begin(), triples.end());
    }
    return c;
}

TrendConfig TrendConfig::defaults() {
    TrendConfig c;
    c.corpus.min_words = 60;
    c.corpus.max_words = 120;
    c.ltr.stage = Stage::LtR;
    c.ltr.steps = 2000;
    c.ltr.warmup_steps = 100;
    c.ltr.base_lr = 1e-3;
    c.lmpm.stage = Stage::Lmpm;
    c.lmpm.steps = 4000;
    c.lmpm.warmup_steps = 200;
    c.lmpm.base_lr = 1e-3;
    c.finetune.stage = Stage::FineTune;
    c.finetune.steps = 2000;
    c.finetune.warmup_steps = 100;
    c.finetune.base_lr = 5e-4;
    c.model.lm.max_target = 320;
    return c;
}

namespace {

template <typename F>
double timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

TrendSeedResult run_trend_seed(const TrendConfig& config, std::uint64_t seed,
                               const std::function<void(const std::string&)>& log) {
    auto say = [&](const std::string& s) {
        if (log) log(s);
    };
    TrendSeedResult result;
    result.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();

    CorpusConfig train_cfg = config.corpus;
    train_cfg.pages = config.train_pages;
    CorpusConfig eval_cfg = config.corpus;
    eval_cfg.pages = config.eval_pages;
    const VqaCorpus train = make_vqa_corpus(train_cfg, stream_seed(seed, "trend.train"));
    const VqaCorpus eval = make_vqa_corpus(eval_cfg, stream_seed(seed, "trend.eval"));

    auto progress = [&](const std::string& tag, int every) {
        return TrainHooks{[&, tag, every](const StepRecord& r) {
            if (r.step % every == 0) say(tag + " step " + std::to_string(r.step) + " loss " + std::to_string(r.loss));
        }};
    };

    TrainPlan ltr = config.ltr;
    ltr.seed = stream_seed(seed, "ltr");
    ModelConfig plain = config.model;
    plain.encoder.mode = MergeMode::Plain;
    plain.encoder.vilma_stages.clear();
    TrainResult base_ltr;
    say("ltr: " + std::to_string(timed([&] { base_ltr = run_ltr(ltr, plain, train.pages, progress("ltr", 250)); })) +
        " s");

    TrainPlan ft = config.finetune;
    ft.seed = stream_seed(seed, "finetune");
    ft.arm = Arm::Baseline;
    TrainResult base_ft;
    say("baseline finetune: " + std::to_string(timed([&] {
            base_ft = run_finetune(ft, clone(base_ltr.checkpoint), train, progress("baseline", 250));
        })) + " s");
    const Model baseline = std::move(base_ft.checkpoint).to_model();
    const auto base_preds = predict_vqa(baseline, Arm::Baseline, eval);
    result.baseline = density_eval(base_preds, config.thresholds, Metric::ExactMatch);

    TrainPlan lmpm = config.lmpm;
    lmpm.seed = stream_seed(seed, "lmpm");
    TrainResult vf_lmpm;
    say("lmpm: " + std::to_string(timed([&] {
            vf_lmpm = run_lmpm(lmpm, std::move(base_ltr.checkpoint), train.pages, progress("lmpm", 500));
        })) + " s");
    ft.arm = Arm::Vilma;
    TrainResult vf_ft;
    say("vilma finetune: " + std::to_string(timed([&] {
            vf_ft = run_finetune(ft, std::move(vf_lmpm.checkpoint), train, progress("vilma", 250));
        })) + " s");
    const Model vilma = std::move(vf_ft.checkpoint).to_model();
    const auto vf_preds = predict_vqa(vilma, Arm::Vilma, eval);
    result.vilma = density_eval(vf_preds, config.thresholds, Metric::ExactMatch);

    result.gap = result.vilma.score - result.baseline.score;
    for (const auto& g : result.vilma.groups)
        for (const auto& b : result.baseline.groups)
            if (g.threshold == b.threshold) result.group_gaps.push_back(g.score - b.score);
    result.gap_non_decreasing = result.group_gaps.size() == config.thresholds.size();
    for (std::size_t i = 1; i < result.group_gaps.size(); ++i)
        if (result.group_gaps[i] < result.group_gaps[i - 1]) result.gap_non_decreasing = false;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace pm
