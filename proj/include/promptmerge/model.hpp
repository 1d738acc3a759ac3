#pragma once

// The full document model: frozen prompt encoder, vision encoder, projector
// and language model sharing one parameter store.

#include "promptmerge/encoder.hpp"
#include "promptmerge/language_head.hpp"

#include <json.hpp>

#include <memory>

namespace pm {

// How the question reaches the model during fine-tuning and evaluation.
enum class Arm {
    Baseline, // plain merging, prompt to the LM only
    Render,   // plain merging, prompt also drawn into the page header
    Vilma,    // prompt-conditioned merging plus prompt to the LM
};

std::string to_string(Arm arm);
Arm arm_from_string(const std::string& s);

struct ModelConfig {
    EncoderConfig encoder;
    PromptEncoderConfig prompt;
    LmConfig lm;
    std::uint64_t seed = 0;

    void validate() const;
    // Smallest configuration used by gradient checks.
    static ModelConfig tiny();
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const PromptEncoderConfig& c);
void from_json(const nlohmann::json& j, PromptEncoderConfig& c);
void to_json(nlohmann::json& j, const LmConfig& c);
void from_json(const nlohmann::json& j, LmConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

class Model {
public:
    // Fresh parameters drawn from config.seed (prompt encoder from its own seed).
    explicit Model(const ModelConfig& config);
    // Adopts an existing store holding every tensor the config needs.
    Model(const ModelConfig& config, std::unique_ptr<ParameterStore> store);

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return *store_; }
    const ParameterStore& params() const { return *store_; }
    const Vocabulary& vocab() const { return Vocabulary::standard(); }
    std::unique_ptr<ParameterStore> release_params() && { return std::move(store_); }

    const PromptEncoder& prompt_encoder() const { return *prompt_encoder_; }
    const VisionEncoder& vision() const { return *vision_; }
    const Projector& projector() const { return *projector_; }
    const LanguageModel& lm() const { return *lm_; }

    // Encoder + projector. The prompt only matters in prompt-conditioned mode.
    Var visual_tokens(Graph& g, const DocumentImage& image, const TokenSequence& prompt,
                      std::vector<AttentionRecord>* capture = nullptr) const;

    struct Step {
        LmOutput out;
        bool prompt_included = false;
    };
    // prompt_to_lm == false keeps the prompt out of the LM input entirely.
    // When training, the policy decides inclusion per call.
    Step forward(Graph& g, const DocumentImage& image, const TokenSequence& prompt, const TokenSequence& target,
                 bool prompt_to_lm, const DropoutPolicy& policy = {1.0}, bool training = false,
                 Rng* rng = nullptr) const;

    TokenSequence generate(const DocumentImage& image, const TokenSequence& prompt, bool prompt_to_lm,
                           int max_len) const;
    std::string answer(const DocumentImage& image, const std::string& question, bool prompt_to_lm,
                       int max_len = 16) const;

    // Per-site cross-attention weights, detached. ConfigError in plain mode.
    std::vector<AttentionRecord> capture_attention(const DocumentImage& image, const TokenSequence& prompt) const;

private:
    void bind();

    ModelConfig config_;
    std::unique_ptr<ParameterStore> store_;
    std::unique_ptr<PromptEncoder> prompt_encoder_;
    std::unique_ptr<VisionEncoder> vision_;
    std::unique_ptr<Projector> projector_;
    std::unique_ptr<LanguageModel> lm_;
};

} // namespace pm
