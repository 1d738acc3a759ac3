#pragma once

// Visual projector and a small encoder-decoder language model. The LM
// encoder reads [prompt token embeddings] ++ [projected visual tokens]; the
// decoder is teacher-forced during training and greedy at inference.

#include "promptmerge/nn.hpp"
#include "promptmerge/text_codec.hpp"

#include <vector>

namespace pm {

struct LmConfig {
    int width = 64;
    int heads = 4;
    int hidden = 256;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int max_source = 160;
    int max_target = 320;

    void validate() const;
};

// Prompt-concat dropout: during pre-training the prompt reaches the LM only
// when a uniform draw falls below rho.
struct DropoutPolicy {
    double rho = 0.5;

    void validate() const;
    bool include(Rng& rng) const { return rng.uniform() < rho; }
};

class Projector {
public:
    Projector(Index in_width, Index out_width, ParameterStore& store, std::uint64_t seed);
    static Projector bind(ParameterStore& store);

    Var operator()(Graph& g, const Var& visual) const;

private:
    Projector() = default;
    nn::Mlp mlp_;
};

struct LmInput {
    Var source;                       // T_src x width
    std::vector<std::uint8_t> mask;   // one flag per source row
    int prompt_tokens = 0;            // leading rows that came from the prompt
    bool prompt_included = false;
};

struct LmOutput {
    Var loss;   // 1x1
    Var logits; // target_len x vocab
};

class LanguageModel {
public:
    LanguageModel(const LmConfig& config, int vocab_size, ParameterStore& store, std::uint64_t seed);
    static LanguageModel bind(const LmConfig& config, ParameterStore& store);

    const LmConfig& config() const { return config_; }
    int vocab_size() const { return vocab_size_; }

    // With training == false the prompt is always included and rng is not
    // touched. A null prompt pointer means there is no prompt at all.
    LmInput assemble_input(Graph& g, const TokenSequence* prompt, const Var& projected, const DropoutPolicy& policy,
                           bool training, Rng* rng) const;

    Var encode_source(Graph& g, const LmInput& input) const;
    Var decode(Graph& g, const Var& memory, const std::vector<std::uint8_t>& memory_mask,
               const TokenSequence& decoder_input) const;

    // Teacher-forced cross-entropy; PAD targets are ignored.
    LmOutput forward_loss(Graph& g, const LmInput& input, const TokenSequence& target) const;
    TokenSequence generate(Graph& g, const LmInput& input, int max_len) const;

    // Decoder input for a target: start token followed by target[:-1].
    static TokenSequence shift_right(const TokenSequence& target);

private:
    LanguageModel() = default;

    Var embed(Graph& g, const TokenSequence& tokens) const;

    LmConfig config_;
    int vocab_size_ = 0;
    Parameter* embedding_ = nullptr;
    Parameter* source_pos_ = nullptr;
    Parameter* target_pos_ = nullptr;
    std::vector<nn::TransformerLayer> encoder_;
    nn::LayerNorm encoder_norm_;
    std::vector<nn::TransformerLayer> decoder_;
    nn::LayerNorm decoder_norm_;
    nn::Linear head_;
};

} // namespace pm
