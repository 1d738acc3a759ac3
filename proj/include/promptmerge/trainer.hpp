#pragma once

// Three-stage training: learn-to-read on raster transcripts, masked prompt
// modeling with freshly initialized prompt-conditioned merges, then VQA
// fine-tuning for one of the arms.

#include "promptmerge/checkpoint.hpp"

#include <functional>

namespace pm {

struct TrainPlan {
    Stage stage = Stage::LtR;
    Arm arm = Arm::Vilma;
    int steps = 2000;
    int batch_size = 8;
    double base_lr = 1e-3;
    int warmup_steps = 100;
    double min_lr = 1e-5;
    double rho = 0.5;
    std::vector<int> vilma_stages = {1, 2, 3, 4};
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LmpmConfig lmpm;

    void validate() const;
    std::string hash() const;
};

void to_json(nlohmann::json& j, const TrainPlan& p);
// Fields missing from `j` keep their current value; unknown keys throw.
void from_json(const nlohmann::json& j, TrainPlan& p);

// Linear warmup to base_lr, then cosine decay to min_lr at plan.steps.
double lr_at(int step, const TrainPlan& plan);

struct StepRecord {
    int step = 0; // 1-based optimizer update index
    Stage stage = Stage::LtR;
    double loss = 0.0;
    double lr = 0.0;
    double prompt_included_fraction = 0.0;
    double grad_norm = 0.0;
    // Gradient norm of the cross-attention / norm tensors at prompt sites.
    double prompt_path_grad_norm = 0.0;
};

nlohmann::json to_json(const StepRecord& r);

class AdamW {
public:
    AdamW(std::vector<Parameter*> params, const TrainPlan& plan);

    // Scales gradients to the clip norm; returns the norm before clipping.
    double clip(double max_norm);
    void step(double lr);
    std::size_t size() const { return params_.size(); }
    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::vector<bool> decay_;
    double beta1_, beta2_, eps_, weight_decay_;
    long long t_ = 0;
};

struct VqaCorpus {
    std::vector<DocumentImage> pages;
    std::vector<VqaTriple> triples;

    const DocumentImage& page(const std::string& page_id) const;
};

struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepRecord> log;
};

TrainResult run_ltr(const TrainPlan& plan, const ModelConfig& model, const std::vector<DocumentImage>& pages,
                    const TrainHooks& hooks = {});
// Accepts an LtR checkpoint (migrated first) or an already migrated one.
TrainResult run_lmpm(const TrainPlan& plan, Checkpoint source, const std::vector<DocumentImage>& pages,
                     const TrainHooks& hooks = {});
TrainResult run_finetune(const TrainPlan& plan, Checkpoint source, const VqaCorpus& corpus,
                         const TrainHooks& hooks = {});

// The page the model sees for a question under `arm`.
DocumentImage arm_view(Arm arm, const DocumentImage& page, const std::string& question);
// Target sequences for each stage.
TokenSequence ltr_target(const DocumentImage& page, const Vocabulary& vocab, int max_len);
TokenSequence answer_target(const std::string& answer, const Vocabulary& vocab);

} // namespace pm
