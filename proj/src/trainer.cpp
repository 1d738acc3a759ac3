#include "promptmerge/trainer.hpp"

#include "promptmerge/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

namespace pm {

using nlohmann::json;

void TrainPlan::validate() const {
    if (!(steps > warmup_steps && warmup_steps >= 0))
        throw ConfigError("plan needs steps > warmup_steps >= 0");
    if (!(base_lr > min_lr && min_lr >= 0.0)) throw ConfigError("plan needs base_lr > min_lr >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
    if (!(lmpm.corruption_rate >= 0.0 && lmpm.corruption_rate < 1.0) || lmpm.mean_span <= 0.0 ||
        lmpm.span_min <= 1 || lmpm.span_max < lmpm.span_min)
        throw ConfigError("invalid lmpm sampling config");
}

void to_json(json& j, const TrainPlan& p) {
    j = {{"stage", to_string(p.stage)},
         {"arm", to_string(p.arm)},
         {"steps", p.steps},
         {"batch_size", p.batch_size},
         {"base_lr", p.base_lr},
         {"warmup_steps", p.warmup_steps},
         {"min_lr", p.min_lr},
         {"rho", p.rho},
         {"vilma_stages", p.vilma_stages},
         {"seed", p.seed},
         {"weight_decay", p.weight_decay},
         {"clip_norm", p.clip_norm},
         {"beta1", p.beta1},
         {"beta2", p.beta2},
         {"adam_eps", p.adam_eps},
         {"lmpm_corruption_rate", p.lmpm.corruption_rate},
         {"lmpm_mean_span", p.lmpm.mean_span},
         {"lmpm_span_min", p.lmpm.span_min},
         {"lmpm_span_max", p.lmpm.span_max}};
}

void from_json(const json& j, TrainPlan& p) {
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "stage") p.stage = stage_from_string(v.get<std::string>());
            else if (key == "arm") p.arm = arm_from_string(v.get<std::string>());
            else if (key == "steps") v.get_to(p.steps);
            else if (key == "batch_size") v.get_to(p.batch_size);
            else if (key == "base_lr") v.get_to(p.base_lr);
            else if (key == "warmup_steps") v.get_to(p.warmup_steps);
            else if (key == "min_lr") v.get_to(p.min_lr);
            else if (key == "rho") v.get_to(p.rho);
            else if (key == "vilma_stages") v.get_to(p.vilma_stages);
            else if (key == "seed") v.get_to(p.seed);
            else if (key == "weight_decay") v.get_to(p.weight_decay);
            else if (key == "clip_norm") v.get_to(p.clip_norm);
            else if (key == "beta1") v.get_to(p.beta1);
            else if (key == "beta2") v.get_to(p.beta2);
            else if (key == "adam_eps") v.get_to(p.adam_eps);
            else if (key == "lmpm_corruption_rate") v.get_to(p.lmpm.corruption_rate);
            else if (key == "lmpm_mean_span") v.get_to(p.lmpm.mean_span);
            else if (key == "lmpm_span_min") v.get_to(p.lmpm.span_min);
            else if (key == "lmpm_span_max") v.get_to(p.lmpm.span_max);
            else throw ConfigError("unknown plan key: " + key);
        } catch (const json::exception& e) {
            throw ConfigError("bad value for plan key " + key + ": " + e.what());
        }
    }
}

std::string TrainPlan::hash() const {
    const std::string text = json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double lr_at(int step, const TrainPlan& plan) {
    if (step < plan.warmup_steps) return plan.base_lr * step / plan.warmup_steps;
    const double t = static_cast<double>(step - plan.warmup_steps) / (plan.steps - plan.warmup_steps);
    return plan.min_lr + (plan.base_lr - plan.min_lr) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

json to_json(const StepRecord& r) {
    return {{"step", r.step},
            {"stage", to_string(r.stage)},
            {"loss", r.loss},
            {"lr", r.lr},
            {"prompt_included_fraction", r.prompt_included_fraction},
            {"grad_norm", r.grad_norm},
            {"prompt_path_grad_norm", r.prompt_path_grad_norm}};
}

// --- optimizer --------------------------------------------------------------------

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_prompt_site_tensor(const std::string& name) {
    return name.find(".xattn.") != std::string::npos || name.find(".xnorm.") != std::string::npos;
}

} // namespace

AdamW::AdamW(std::vector<Parameter*> params, const TrainPlan& plan)
    : params_(std::move(params)), beta1_(plan.beta1), beta2_(plan.beta2), eps_(plan.adam_eps),
      weight_decay_(plan.weight_decay) {
    for (Parameter* p : params_) {
        if (!p->trainable) throw PreconditionError("frozen tensor handed to the optimizer: " + p->name);
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        // Biases, norms and the relative-position tables are not decayed.
        decay_.push_back(!(ends_with(p->name, ".bias") || ends_with(p->name, ".gain") ||
                           ends_with(p->name, ".shift") || ends_with(p->name, ".rel_bias")));
    }
}

double AdamW::clip(double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params_) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm)
        for (Parameter* p : params_) p->grad *= max_norm / norm;
    return norm;
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
        if (decay_[i]) p.value *= 1.0 - lr * weight_decay_;
        p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

// --- data -------------------------------------------------------------------------

const DocumentImage& VqaCorpus::page(const std::string& page_id) const {
    for (const auto& p : pages)
        if (p.page_id == page_id) return p;
    throw IndexError("no page with id " + page_id);
}

DocumentImage arm_view(Arm arm, const DocumentImage& page, const std::string& question) {
    if (arm == Arm::Render) return render_prompt_on_image(page, question);
    return page;
}

TokenSequence ltr_target(const DocumentImage& page, const Vocabulary& vocab, int max_len) {
    RasterOptions opt;
    opt.max_len = static_cast<std::size_t>(max_len);
    return serialize_raster(page.words, vocab, opt);
}

TokenSequence answer_target(const std::string& answer, const Vocabulary& vocab) {
    TokenSequence t = vocab.tokenize(answer);
    t.push_back(Vocabulary::eos);
    return t;
}

// --- loop -------------------------------------------------------------------------

namespace {

struct StepContext {
    Rng data;
    Rng dropout;
};

using SampleFn = std::function<Model::Step(Graph&, const Model&, StepContext&)>;

TrainResult train_loop(const TrainPlan& plan, Model model, CheckpointMeta meta,
                       const std::map<std::string, std::string>& provenance, const TrainHooks& hooks,
                       const SampleFn& sample) {
    StepContext ctx{named_stream(plan.seed, "data." + to_string(plan.stage)),
                    named_stream(plan.seed, "prompt_dropout")};
    AdamW opt(model.params().trainable(), plan);
    std::vector<Parameter*> site_params;
    for (Parameter* p : opt.params())
        if (is_prompt_site_tensor(p->name)) site_params.push_back(p);

    TrainResult result;
    for (int step = 1; step <= plan.steps; ++step) {
        model.params().zero_grad();
        double loss = 0.0;
        int included = 0;
        for (int b = 0; b < plan.batch_size; ++b) {
            Graph g(true);
            Model::Step s = sample(g, model, ctx);
            Var scaled = scale(s.out.loss, 1.0 / plan.batch_size);
            g.backward(scaled);
            loss += s.out.loss.item();
            included += s.prompt_included ? 1 : 0;
        }
        StepRecord rec;
        rec.step = step;
        rec.stage = plan.stage;
        rec.loss = loss / plan.batch_size;
        if (!std::isfinite(rec.loss)) throw Error("non-finite loss at step " + std::to_string(step));
        rec.prompt_included_fraction = static_cast<double>(included) / plan.batch_size;
        double site_sq = 0.0;
        for (const Parameter* p : site_params) site_sq += p->grad.squaredNorm();
        rec.prompt_path_grad_norm = std::sqrt(site_sq);
        rec.grad_norm = opt.clip(plan.clip_norm);
        rec.lr = lr_at(step, plan);
        opt.step(rec.lr);
        if (hooks.on_step) hooks.on_step(rec);
        result.log.push_back(rec);
    }
    meta.stage = plan.stage;
    meta.step = plan.steps;
    meta.plan_hash = plan.hash();
    meta.rng_state = ctx.data.state();
    meta.arm = plan.arm;
    meta.extra["plan"] = plan;
    result.checkpoint = make_checkpoint(std::move(model), meta, provenance);
    return result;
}

} // namespace

TrainResult run_ltr(const TrainPlan& plan, const ModelConfig& config, const std::vector<DocumentImage>& pages,
                    const TrainHooks& hooks) {
    plan.validate();
    if (plan.stage != Stage::LtR) throw StageError("run_ltr needs an ltr plan");
    if (config.encoder.mode != MergeMode::Plain) throw ConfigError("learn-to-read runs with plain merging");
    if (pages.empty()) throw PreconditionError("empty training corpus");
    ModelConfig cfg = config;
    cfg.seed = plan.seed;
    Model model(cfg);
    const Vocabulary& vocab = model.vocab();
    std::vector<TokenSequence> targets;
    for (const auto& p : pages) targets.push_back(ltr_target(p, vocab, cfg.lm.max_target));
    CheckpointMeta meta;
    meta.model = cfg;
    return train_loop(plan, std::move(model), meta, {}, hooks, [&](Graph& g, const Model& m, StepContext& ctx) {
        const auto i = static_cast<std::size_t>(ctx.data.below(pages.size()));
        return m.forward(g, pages[i], {}, targets[i], false);
    });
}

TrainResult run_lmpm(const TrainPlan& plan, Checkpoint source, const std::vector<DocumentImage>& pages,
                     const TrainHooks& hooks) {
    plan.validate();
    if (plan.stage != Stage::Lmpm) throw StageError("run_lmpm needs an lmpm plan");
    if (pages.empty()) throw PreconditionError("empty training corpus");
    if (source.meta.stage == Stage::LtR)
        source = migrate_to_lmpm(source, plan.vilma_stages, plan.seed);
    else if (source.meta.stage != Stage::Lmpm || source.meta.step != 0)
        throw StageError("lmpm starts from an ltr checkpoint, got " + to_string(source.meta.stage));
    const CheckpointMeta meta = source.meta;
    const auto provenance = source.provenance;
    Model model = std::move(source).to_model();
    if (model.config().encoder.mode != MergeMode::Vilma)
        throw ConfigError("masked prompt modeling needs prompt-conditioned merging");
    const Vocabulary& vocab = model.vocab();
    const int max_target = model.config().lm.max_target;
    std::vector<TokenSequence> transcripts;
    for (const auto& p : pages) transcripts.push_back(serialize_raster(p.words, vocab));
    const DropoutPolicy policy{plan.rho};
    return train_loop(plan, std::move(model), meta, provenance, hooks,
                      [&](Graph& g, const Model& m, StepContext& ctx) {
                          const auto i = static_cast<std::size_t>(ctx.data.below(pages.size()));
                          SpanCorruptionSample s = sample_lmpm(transcripts[i], ctx.data, vocab, plan.lmpm);
                          TokenSequence target = s.target;
                          target.push_back(Vocabulary::eos);
                          if (static_cast<int>(target.size()) > max_target)
                              target.resize(static_cast<std::size_t>(max_target));
                          return m.forward(g, pages[i], s.corrupted, target, true, policy, true, &ctx.dropout);
                      });
}

TrainResult run_finetune(const TrainPlan& plan, Checkpoint source, const VqaCorpus& corpus,
                         const TrainHooks& hooks) {
    plan.validate();
    if (plan.stage != Stage::FineTune) throw StageError("run_finetune needs a finetune plan");
    const Stage expected = plan.arm == Arm::Vilma ? Stage::Lmpm : Stage::LtR;
    if (source.meta.stage != expected)
        throw StageError(to_string(plan.arm) + " fine-tuning starts from a " + to_string(expected) +
                         " checkpoint, got " + to_string(source.meta.stage));
    if (corpus.triples.empty()) throw PreconditionError("empty fine-tuning corpus");
    CheckpointMeta meta = source.meta;
    const auto provenance = source.provenance;
    Model model = std::move(source).to_model();
    const bool vilma_model = model.config().encoder.mode == MergeMode::Vilma;
    if (vilma_model != (plan.arm == Arm::Vilma))
        throw ConfigError("checkpoint merge mode does not match arm " + to_string(plan.arm));
    const Vocabulary& vocab = model.vocab();
    struct Item {
        const DocumentImage* page;
        std::optional<DocumentImage> rendered;
        TokenSequence prompt;
        TokenSequence target;
    };
    std::vector<Item> items;
    for (const auto& t : corpus.triples) {
        if (t.answers.empty()) throw PreconditionError("triple without answers");
        const DocumentImage& page = corpus.page(t.page_id);
        std::optional<DocumentImage> rendered;
        if (plan.arm == Arm::Render) rendered = arm_view(plan.arm, page, t.question);
        items.push_back({&page, std::move(rendered), vocab.tokenize(t.question), answer_target(t.answers.front(), vocab)});
    }
    return train_loop(plan, std::move(model), meta, provenance, hooks,
                      [&](Graph& g, const Model& m, StepContext& ctx) {
                          const Item& it = items[static_cast<std::size_t>(ctx.data.below(items.size()))];
                          return m.forward(g, it.rendered ? *it.rendered : *it.page, it.prompt, it.target, true);
                      });
}

} // namespace pm
