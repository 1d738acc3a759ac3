// Acceptance runner. One PASS/FAIL line per criterion; exit status is zero
// only when every selected criterion passes.
//
//   acceptance                 all criteria
//   acceptance --criterion 6   one criterion (repeatable)
//   acceptance --trend-seeds 1 shorter trend run for local checks

#include "fixtures.hpp"
#include "gradcheck.hpp"

#include "promptmerge/errors.hpp"
#include "promptmerge/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

using namespace pm;
using namespace pm::testing;

namespace {

// Pinned tolerances and budgets.
constexpr double layer_grad_tol = 1e-4;
constexpr double e2e_grad_tol = 1e-3;
constexpr double row_sum_tol = 1e-6;
constexpr double masked_fraction_target = 0.15;
constexpr double masked_fraction_tol = 0.02;
constexpr double metric_tol = 1e-6;
constexpr double ltr_overfit_loss = 0.05;
constexpr double lmpm_overfit_loss = 0.1;
constexpr double trend_min_gap = 0.05;
constexpr int trend_min_monotone_seeds = 2;
constexpr double inclusion_tol = 0.03;
constexpr double lr_tol = 1e-12;

constexpr double budget_grad = 120, budget_shape = 60, budget_codec = 60, budget_metric = 120, budget_migration = 60,
                 budget_overfit_each = 600, budget_trend = 7200;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
    template <typename T>
    Outcome& note(const std::string& key, const T& value) {
        detail << key << "=" << value << " ";
        return *this;
    }
};

DocumentImage noise_image(int w, int h, std::uint64_t seed) {
    DocumentImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h);
    Rng rng(seed);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    return img;
}

std::vector<Parameter*> with_prefix(ParameterStore& store, const std::string& prefix) {
    std::vector<Parameter*> out;
    for (auto& p : store)
        if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    return out;
}

EncoderConfig site_config() {
    EncoderConfig c;
    c.image_height = 16;
    c.image_width = 16;
    c.patch_size = 4;
    c.depths = {1, 1};
    c.base_width = 8;
    c.window = 2;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.mode = MergeMode::Vilma;
    c.vilma_stages = {1};
    return c;
}

ModelConfig vilma_config() {
    ModelConfig c;
    c.encoder.mode = MergeMode::Vilma;
    c.encoder.vilma_stages = {1, 2, 3, 4};
    return c;
}

// --- 1 ---------------------------------------------------------------------------------

void gradient_suite(Outcome& o) {
    const auto t0 = Clock::now();
    double worst_layer = 0.0;

    {
        ParameterStore store;
        VisionEncoder enc(site_config(), 6, store, 5);
        store.at("encoder.merge1.xnorm.gain").value = random_matrix(1, 8, 30);
        store.at("encoder.merge1.xnorm.shift").value = random_matrix(1, 8, 31);
        Matrix x = random_matrix(16, 8, 9);
        Matrix prompt = random_matrix(3, 6, 10);
        const std::vector<std::uint8_t> mask{1, 1, 1};
        const Matrix proj = random_matrix(4, 16, 11);
        auto f = [&](Graph& g, const Var& fv, const Var& pv) {
            return weighted_sum(enc.vilma_merge(g, fv, 4, 4, 1, pv, mask), proj);
        };
        worst_layer = std::max(worst_layer, check_input([&](Graph& g, const Var& v) { return f(g, v, g.constant(prompt)); }, x));
        worst_layer = std::max(worst_layer, check_input([&](Graph& g, const Var& v) { return f(g, g.constant(x), v); }, prompt));
        const LossFn lf = [&](Graph& g) { return f(g, g.constant(x), g.constant(prompt)); };
        worst_layer = std::max(worst_layer, check_parameters(lf, with_prefix(store, "encoder.merge1.")));

        const Matrix proj2 = random_matrix(4, 16, 12);
        auto pf = [&](Graph& g, const Var& fv) { return weighted_sum(enc.plain_merge(g, fv, 4, 4, 1), proj2); };
        worst_layer = std::max(worst_layer, check_input(pf, x));
        const LossFn plf = [&](Graph& g) { return pf(g, g.constant(x)); };
        worst_layer = std::max(worst_layer, check_parameters(plf, with_prefix(store, "encoder.merge1.reduction")));
    }
    {
        ParameterStore store;
        const Projector proj(6, 5, store, 4);
        const Matrix x = random_matrix(4, 6, 9);
        const Matrix w = random_matrix(4, 5, 10);
        const LossFn lf = [&](Graph& g) { return weighted_sum(proj(g, g.constant(x)), w); };
        worst_layer = std::max(worst_layer, check_parameters(lf, store.trainable()));
    }

    const ModelConfig cfg = ModelConfig::tiny();
    Model model(cfg);
    const DocumentImage page = noise_image(cfg.encoder.image_width, cfg.encoder.image_height, 8);
    const TokenSequence prompt = model.vocab().tokenize("ab?");
    const TokenSequence target = {5, 9, Vocabulary::eos};
    const LossFn e2e = [&](Graph& g) { return model.forward(g, page, prompt, target, true).out.loss; };
    const double worst_e2e = check_parameters(e2e, model.params().trainable());

    const double seconds = since(t0);
    o.note("layer_rel_err", worst_layer).note("e2e_rel_err", worst_e2e);
    o.require(worst_layer <= layer_grad_tol, "layer-level relative error");
    o.require(worst_e2e <= e2e_grad_tol, "end-to-end relative error");
    o.require(seconds < budget_grad, "runtime");
}

// --- 2 ---------------------------------------------------------------------------------

void shape_suite(Outcome& o) {
    const auto t0 = Clock::now();
    const ModelConfig cfg = vilma_config();
    const Model model(cfg);
    const EncoderConfig& ec = cfg.encoder;
    Graph g(false);
    const Var prompt = model.prompt_encoder().encode(g, model.vocab().tokenize("what is the word after cat?"));
    const std::vector<std::uint8_t> pmask(static_cast<std::size_t>(prompt.rows()), 1);
    bool shape_law = true;
    for (int s = 1; s < ec.num_stages(); ++s) {
        const auto [h, w] = ec.stage_grid(s);
        const Index c = ec.stage_width(s);
        const Var x = g.constant(random_matrix(static_cast<Index>(h) * w, c, 40 + s));
        const Var plain = model.vision().plain_merge(g, x, h, w, s);
        const Var merged = model.vision().vilma_merge(g, x, h, w, s, prompt, pmask);
        for (const Var& y : {plain, merged})
            shape_law = shape_law && y.rows() == static_cast<Index>(h / 2) * (w / 2) && y.cols() == 2 * c;
    }
    o.require(shape_law, "merge shape law");

    const DocumentImage img = noise_image(ec.image_width, ec.image_height, 3);
    double worst_row = 0.0;
    for (const auto& r : model.capture_attention(img, model.vocab().tokenize("total?")))
        for (const auto& w : r.heads)
            for (Index i = 0; i < w.rows(); ++i) worst_row = std::max(worst_row, std::abs(w.row(i).sum() - 1.0));
    o.note("max_row_sum_err", worst_row);
    o.require(worst_row <= row_sum_tol, "attention rows sum to one");

    bool single_exact = true;
    for (const auto& r : model.capture_attention(img, model.vocab().tokenize("a")))
        for (const auto& w : r.heads) single_exact = single_exact && (w.array() == 1.0).all();
    o.require(single_exact, "single prompt token gets weight exactly one");

    const Model plain(ModelConfig{});
    const Var a = plain.visual_tokens(g, img, model.vocab().tokenize("what is the value of total?"));
    const Var b = plain.visual_tokens(g, img, model.vocab().tokenize("which word appears in line 2?"));
    const Var c = plain.visual_tokens(g, img, {});
    o.require(a.value() == b.value() && a.value() == c.value(), "plain mode prompt independence");
    o.require(a.rows() == ec.output_tokens(), "output token count");

    const double seconds = since(t0);
    o.require(seconds < budget_shape, "runtime");
}

// --- 3 ---------------------------------------------------------------------------------

void codec_suite(Outcome& o) {
    const auto t0 = Clock::now();
    const Vocabulary& vocab = Vocabulary::standard();
    Rng rng(5);
    int exact = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        TokenSequence doc;
        const auto n = rng.range(16, 300);
        for (long long k = 0; k < n; ++k) doc.push_back(static_cast<int>(rng.range(3, vocab.size() - vocab.num_sentinels() - 1)));
        const auto s = sample_lmpm(doc, rng, vocab);
        const TokenSequence window(doc.begin() + s.window_start,
                                   doc.begin() + s.window_start + static_cast<long>(s.source_span.size()));
        exact += reconstruct(s, vocab) == window && window == s.source_span;
    }
    o.note("round_trips", std::to_string(exact) + "/" + std::to_string(trials));
    o.require(exact == trials, "span-corruption round trip");

    Rng mrng(2024);
    const TokenSequence doc(300, 7);
    double total = 0.0;
    const int samples = 10000;
    for (int i = 0; i < samples; ++i) {
        const auto s = sample_lmpm(doc, mrng, vocab);
        int masked = 0;
        for (const auto& m : s.mask_map) masked += m.length;
        total += static_cast<double>(masked) / static_cast<double>(s.source_span.size());
    }
    const double fraction = total / samples;
    o.note("masked_fraction", fraction);
    o.require(std::abs(fraction - masked_fraction_target) <= masked_fraction_tol, "masked fraction");

    Rng lrng(17);
    const std::vector<std::string> lexicon = {"aa", "b", "cat", "dog", "e", "fig"};
    int invariant = 0;
    for (int t = 0; t < trials; ++t) {
        std::vector<WordBox> words;
        const auto n = lrng.range(1, 15);
        for (long long i = 0; i < n; ++i)
            words.push_back({lexicon[static_cast<std::size_t>(lrng.range(0, 5))],
                             {static_cast<int>(lrng.range(0, 200)), static_cast<int>(lrng.range(0, 100)), 12,
                              static_cast<int>(lrng.range(6, 10))}});
        const auto reference = serialize_raster(words, vocab);
        bool same = true;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[lrng.below(i)]);
            same = same && serialize_raster(words, vocab) == reference;
        }
        invariant += same;
    }
    o.note("permutation_invariant", std::to_string(invariant) + "/" + std::to_string(trials));
    o.require(invariant == trials, "raster permutation invariance");
    o.require(since(t0) < budget_codec, "runtime");
}

// --- 4 ---------------------------------------------------------------------------------

std::size_t brute_distance(std::string_view a, std::string_view b) {
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    if (a.front() == b.front()) return brute_distance(a.substr(1), b.substr(1));
    return 1 + std::min({brute_distance(a.substr(1), b), brute_distance(a, b.substr(1)),
                         brute_distance(a.substr(1), b.substr(1))});
}

void metric_suite(Outcome& o) {
    const auto t0 = Clock::now();
    std::vector<std::string> strings = {""};
    for (std::size_t i = 0; i < strings.size(); ++i)
        if (strings[i].size() < 5)
            for (char c : std::string("abc")) strings.push_back(strings[i] + c);
    std::size_t pairs = 0, agree = 0;
    for (const auto& a : strings)
        for (const auto& b : strings) {
            ++pairs;
            agree += levenshtein(a, b) == brute_distance(a, b);
        }
    o.note("levenshtein_pairs", std::to_string(agree) + "/" + std::to_string(pairs));
    o.require(agree == pairs, "levenshtein vs brute force");

    auto rec = [](std::string p, std::vector<std::string> g) { return PredictionRecord{"p", "q", std::move(p), std::move(g), 0}; };
    struct Example {
        const char* name;
        double got;
        double want;
    };
    const Example examples[] = {
        {"lev kitten/sitting", static_cast<double>(levenshtein("kitten", "sitting")), 3.0},
        {"lev empty", static_cast<double>(levenshtein("", "abc")), 3.0},
        {"anls case", anls({rec("Monday", {"monday"})}), 1.0},
        {"anls typo", anls({rec("mondey", {"monday"})}), 1.0 - 1.0 / 6.0},
        {"anls empty", anls({rec("", {"monday"})}), 0.0},
        {"ra within", relaxed_accuracy({rec("10.2", {"10.0"})}), 1.0},
        {"ra outside", relaxed_accuracy({rec("10.6", {"10.0"})}), 0.0},
        {"ra string", relaxed_accuracy({rec("ten", {"ten"})}), 1.0},
        {"em trim", exact_match({rec("42 ", {"42"})}), 1.0},
        {"em punct", exact_match({rec("42.", {"42"})}), 0.0},
    };
    int ok = 0;
    for (const auto& e : examples) {
        const bool match = std::abs(e.got - e.want) <= metric_tol;
        ok += match;
        if (!match) o.require(false, e.name);
    }
    o.note("worked_examples", std::to_string(ok) + "/" + std::to_string(std::size(examples)));
    o.require(since(t0) < budget_metric, "runtime");
}

// --- 5 ---------------------------------------------------------------------------------

void migration_suite(Outcome& o) {
    const auto t0 = Clock::now();
    SynthConfig sc;
    const std::vector<DocumentImage> pages = {generate_page(sc, 1, "a"), generate_page(sc, 2, "b")};
    TrainPlan plan;
    plan.stage = Stage::LtR;
    plan.steps = 3;
    plan.warmup_steps = 1;
    plan.batch_size = 1;
    plan.seed = 4;
    const auto ltr = run_ltr(plan, ModelConfig{}, pages);
    const auto again = run_ltr(plan, ModelConfig{}, pages);
    bool reproducible = ltr.checkpoint.tensors->size() == again.checkpoint.tensors->size();
    for (const auto& p : *ltr.checkpoint.tensors)
        reproducible = reproducible && again.checkpoint.tensors->at(p->name).value == p->value;
    o.require(reproducible, "seeded ltr reproducibility");

    const std::vector<int> stages = {1, 2, 3, 4};
    const auto a = migrate_to_lmpm(ltr.checkpoint, stages, 9);
    const auto b = migrate_to_lmpm(ltr.checkpoint, stages, 9);
    std::set<std::string> added;
    bool carried = true, fresh_reproducible = true;
    for (const auto& p : *a.tensors) {
        if (const Parameter* old = ltr.checkpoint.tensors->find(p->name)) {
            carried = carried && old->value == p->value && old->trainable == p->trainable;
        } else {
            added.insert(p->name);
            fresh_reproducible = fresh_reproducible && b.tensors->at(p->name).value == p->value;
        }
    }
    for (const auto& p : *ltr.checkpoint.tensors) carried = carried && a.tensors->contains(p->name);
    EncoderConfig enc = ltr.checkpoint.meta.model.encoder;
    enc.mode = MergeMode::Vilma;
    enc.vilma_stages = stages;
    const auto declared = VisionEncoder::vilma_tensor_names(enc);
    o.note("carried", ltr.checkpoint.tensors->size()).note("new", added.size());
    o.require(carried, "carried tensors bitwise");
    o.require(added == std::set<std::string>(declared.begin(), declared.end()), "new tensor set");
    o.require(fresh_reproducible, "new tensors reproducible from seed");

    bool stage_gate = false;
    try {
        migrate_to_lmpm(a, stages, 9);
    } catch (const StageError&) {
        stage_gate = true;
    }
    o.require(stage_gate, "migration rejects non-ltr source");

    const auto dir = std::filesystem::temp_directory_path() / "promptmerge_acceptance_ckpt";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, a);
    const auto back = load_checkpoint(dir);
    bool roundtrip = back.tensors->size() == a.tensors->size();
    for (const auto& p : *a.tensors) roundtrip = roundtrip && back.tensors->at(p->name).value == p->value;
    std::filesystem::remove_all(dir);
    o.require(roundtrip, "checkpoint round trip bitwise");
    o.require(since(t0) < budget_migration, "runtime");
}

// --- 6 ---------------------------------------------------------------------------------

void overfit_suite(Outcome& o) {
    const Vocabulary& vocab = Vocabulary::standard();
    SynthConfig sc;

    // (a) learn to read a single page
    {
        const auto t0 = Clock::now();
        const DocumentImage page = generate_page(sc, 5, "p0");
        TrainPlan plan;
        plan.stage = Stage::LtR;
        plan.steps = 300;
        plan.batch_size = 1;
        plan.warmup_steps = 20;
        plan.base_lr = 3e-3;
        plan.seed = 1;
        auto res = run_ltr(plan, ModelConfig{}, {page});
        const double loss = res.log.back().loss;
        const Model m = std::move(res.checkpoint).to_model();
        const std::string got = vocab.detokenize(m.generate(page, {}, false, 200));
        const std::string want = raster_text(page.words);
        const double seconds = since(t0);
        o.note("a_loss", loss).note("a_seconds", seconds);
        o.require(loss < ltr_overfit_loss, "a: ltr loss");
        o.require(got == want, "a: transcript regenerated");
        o.require(seconds < budget_overfit_each, "a: runtime");
    }

    // (b) masked prompt modeling on four pages, then (c) fine-tuning on eight questions
    SynthConfig small = sc;
    small.word_count = 6;
    std::vector<DocumentImage> pages;
    for (int i = 0; i < 4; ++i) pages.push_back(generate_page(small, 100 + static_cast<std::uint64_t>(i), "q" + std::to_string(i)));
    Checkpoint lmpm;
    {
        const auto t0 = Clock::now();
        TrainPlan plan;
        plan.stage = Stage::LtR;
        plan.steps = 300;
        plan.batch_size = 4;
        plan.warmup_steps = 20;
        plan.base_lr = 2e-3;
        plan.seed = 1;
        auto ltr = run_ltr(plan, ModelConfig{}, pages);
        TrainPlan lp = plan;
        lp.stage = Stage::Lmpm;
        lp.arm = Arm::Vilma;
        // rho stays at its default; 6k steps is about what fits the runtime budget
        lp.steps = 6000;
        lp.warmup_steps = 50;
        lp.base_lr = 3e-3;
        auto res = run_lmpm(lp, std::move(ltr.checkpoint), pages);
        double tail = 0.0;
        const std::size_t window = 20;
        for (std::size_t i = res.log.size() - window; i < res.log.size(); ++i) tail += res.log[i].loss;
        tail /= window;
        lmpm = std::move(res.checkpoint);
        const double seconds = since(t0);
        o.note("b_loss_last20", tail).note("b_seconds", seconds);
        o.require(tail < lmpm_overfit_loss, "b: lmpm loss");
        o.require(seconds < budget_overfit_each, "b: runtime");
    }
    {
        const auto t0 = Clock::now();
        VqaCorpus corpus;
        corpus.pages = pages;
        for (const auto& p : pages) {
            const auto triples = generate_vqa(p, 3);
            corpus.triples.insert(corpus.triples.end(), triples.begin(), triples.begin() + 2);
        }
        TrainPlan plan;
        plan.stage = Stage::FineTune;
        plan.arm = Arm::Vilma;
        plan.steps = 400;
        plan.batch_size = 4;
        plan.warmup_steps = 20;
        plan.base_lr = 2e-3;
        plan.seed = 1;
        auto res = run_finetune(plan, std::move(lmpm), corpus);
        const Model m = std::move(res.checkpoint).to_model();
        const double em = exact_match(predict_vqa(m, Arm::Vilma, corpus));
        const double seconds = since(t0);
        o.note("c_triples", corpus.triples.size()).note("c_em", em).note("c_seconds", seconds);
        o.require(corpus.triples.size() == 8, "c: eight triples");
        o.require(em == 1.0, "c: exact match 100%");
        o.require(seconds < budget_overfit_each, "c: runtime");
    }
}

// --- 7 ---------------------------------------------------------------------------------

void trend_suite(Outcome& o, int seeds) {
    const auto t0 = Clock::now();
    const TrendConfig cfg = TrendConfig::defaults();
    double baseline = 0.0, vilma = 0.0;
    int monotone = 0;
    for (int s = 1; s <= seeds; ++s) {
        const auto r = run_trend_seed(cfg, static_cast<std::uint64_t>(s), [](const std::string& line) {
            std::cerr << "  " << line << '\n';
        });
        baseline += r.baseline.score;
        vilma += r.vilma.score;
        monotone += r.gap_non_decreasing;
        std::ostringstream gaps;
        for (std::size_t i = 0; i < r.group_gaps.size(); ++i) gaps << (i ? "," : "") << r.group_gaps[i];
        o.note("seed" + std::to_string(s), "baseline:" + std::to_string(r.baseline.score) +
                                                "/vilma:" + std::to_string(r.vilma.score) + "/gaps:" + gaps.str());
    }
    baseline /= seeds;
    vilma /= seeds;
    const double seconds = since(t0);
    o.note("mean_gap", vilma - baseline).note("monotone_seeds", monotone).note("seconds", seconds);
    o.require(vilma >= baseline + trend_min_gap, "mean EM gap");
    o.require(monotone >= std::min(trend_min_monotone_seeds, seeds), "gap non-decreasing across density groups");
    o.require(seconds < budget_trend, "runtime");
}

// --- 8 ---------------------------------------------------------------------------------

double closed_form_lr(int step, const TrainPlan& p) {
    if (step < p.warmup_steps) return p.base_lr * static_cast<double>(step) / p.warmup_steps;
    const double t = static_cast<double>(step - p.warmup_steps) / static_cast<double>(p.steps - p.warmup_steps);
    return p.min_lr + 0.5 * (p.base_lr - p.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

void dropout_suite(Outcome& o) {
    const auto pages = small_corpus(4, 21);
    TrainPlan lp = quick_plan(Stage::LtR, Arm::Baseline, 5);
    const auto ltr = run_ltr(lp, small_config(), pages);
    TrainPlan plan = quick_plan(Stage::Lmpm, Arm::Vilma, 3000);
    plan.warmup_steps = 100;
    plan.rho = 0.5;
    plan.seed = 3;
    const auto res = run_lmpm(plan, clone(ltr.checkpoint), pages);
    double included = 0.0, worst_lr = 0.0;
    for (const auto& r : res.log) {
        included += r.prompt_included_fraction;
        worst_lr = std::max(worst_lr, std::abs(r.lr - closed_form_lr(r.step, plan)));
    }
    const double fraction = included / static_cast<double>(res.log.size());
    o.note("steps", res.log.size()).note("samples", res.log.size() * static_cast<std::size_t>(plan.batch_size));
    o.note("inclusion_fraction", fraction).note("max_lr_err", worst_lr);
    o.require(res.log.size() >= 3000, "at least 3k steps");
    o.require(std::abs(fraction - plan.rho) <= inclusion_tol, "inclusion fraction");
    o.require(worst_lr <= lr_tol, "lr closed form");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> selected;
    int seeds = 3;
    app.add_option("--criterion", selected, "Criterion number (1-8); repeatable")->check(CLI::Range(1, 8));
    app.add_option("--trend-seeds", seeds, "Seeds for the trend criterion")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

    const char* names[] = {"",
                           "gradient suite",
                           "shape/normalization suite",
                           "codec suite",
                           "metric oracle suite",
                           "stage-migration suite",
                           "overfit runs",
                           "mechanism trend",
                           "dropout statistics"};
    bool all = true;
    for (int c : selected) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            switch (c) {
            case 1: gradient_suite(o); break;
            case 2: shape_suite(o); break;
            case 3: codec_suite(o); break;
            case 4: metric_suite(o); break;
            case 5: migration_suite(o); break;
            case 6: overfit_suite(o); break;
            case 7: trend_suite(o, seeds); break;
            case 8: dropout_suite(o); break;
            }
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::cout << "criterion " << c << " (" << names[c] << "): " << (o.pass ? "PASS" : "FAIL") << "  "
                  << o.detail.str() << std::fixed << std::setprecision(1) << "[" << since(t0) << " s]"
                  << std::defaultfloat << std::setprecision(6) << std::endl;
    }
    return all ? 0 : 1;
}
