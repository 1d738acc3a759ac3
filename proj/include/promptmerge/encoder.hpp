#pragma once

// Hierarchical windowed-attention vision encoder. Between stages, 2x2 patch
// merging halves the grid and doubles the width. In prompt mode the merges
// at the configured stages first mix the frozen prompt encoding into the
// feature map through multi-head cross-attention:
//
//     F~ = F + Norm(MHCA(query = F, key = value = emb(p)))
//
// and then apply the same concatenate-and-project reduction as a plain merge.

#include "promptmerge/doc_synth.hpp"
#include "promptmerge/nn.hpp"
#include "promptmerge/text_codec.hpp"

#include <optional>
#include <vector>

namespace pm {

enum class MergeMode { Plain, Vilma };

std::string to_string(MergeMode mode);

struct EncoderConfig {
    int image_height = 128;
    int image_width = 256;
    int patch_size = 4;
    std::vector<int> depths = {1, 1, 2, 1};
    int base_width = 16;
    int window = 4;
    int heads = 2;
    int mlp_ratio = 4;
    MergeMode mode = MergeMode::Plain;
    // 1-based stage indices whose merge is prompt-conditioned. Stages before
    // the last end in a 2x2 merge; the last stage has no reduction, so a
    // prompt site there only adds the cross-attention residual.
    std::vector<int> vilma_stages;
    double vilma_norm_gain = 1.0;

    int num_stages() const { return static_cast<int>(depths.size()); }
    int stage_width(int stage) const { return base_width << (stage - 1); }
    // Token grid (rows, cols) entering stage `stage`.
    std::pair<int, int> stage_grid(int stage) const;
    int output_width() const { return stage_width(num_stages()); }
    int output_tokens() const;
    bool is_vilma_stage(int stage) const;
    void validate() const;
};

struct PromptEncoderConfig {
    int width = 64;
    int heads = 2;
    int hidden = 128;
    int max_len = 128;
    // The frozen encoder is drawn once from this seed and never trained.
    std::uint64_t seed = 0x5eed5eedULL;
};

struct PromptEncoding {
    Matrix embeddings; // T_p x d_p
    std::vector<std::uint8_t> mask;
};

// One record per prompt-conditioned site.
struct AttentionRecord {
    int stage = 0;
    int grid_h = 0;
    int grid_w = 0;
    // Per head: (grid_h * grid_w) x T_p, rows sum to one.
    std::vector<Matrix> heads;

    Matrix head_average() const;
    Index prompt_length() const { return heads.empty() ? 0 : heads.front().cols(); }
};

class PromptEncoder {
public:
    PromptEncoder(const PromptEncoderConfig& config, int vocab_size, ParameterStore& store);
    static PromptEncoder bind(const PromptEncoderConfig& config, ParameterStore& store);

    // Empty prompts are replaced by a single PAD token, which then stays
    // visible to attention as a null key.
    static TokenSequence normalize(const TokenSequence& prompt);
    static std::vector<std::uint8_t> key_mask(const TokenSequence& normalized);

    Var encode(Graph& g, const TokenSequence& prompt) const;
    PromptEncoding encode(const TokenSequence& prompt) const;

    const PromptEncoderConfig& config() const { return config_; }

private:
    PromptEncoder() = default;

    PromptEncoderConfig config_;
    Parameter* embedding_ = nullptr;
    nn::TransformerLayer layer_;
    nn::LayerNorm final_norm_;
};

class VisionEncoder {
public:
    // Creates every parameter for `config`. Each sub-module draws from its
    // own named stream of `seed`.
    VisionEncoder(const EncoderConfig& config, int prompt_width, ParameterStore& store, std::uint64_t seed);
    static VisionEncoder bind(const EncoderConfig& config, ParameterStore& store);

    // Names of the tensors that exist only at prompt-conditioned sites.
    static std::vector<std::string> vilma_tensor_names(const EncoderConfig& config);

    const EncoderConfig& config() const { return config_; }

    Var patch_embed(Graph& g, const DocumentImage& image) const;
    Var stage_blocks(Graph& g, const Var& x, int stage) const;
    // h x w x c -> (h/2) x (w/2) x 2c
    Var plain_merge(Graph& g, const Var& x, int h, int w, int stage) const;
    Var vilma_merge(Graph& g, const Var& x, int h, int w, int stage, const Var& prompt,
                    const std::vector<std::uint8_t>& prompt_mask, AttentionRecord* capture = nullptr) const;
    // The residual cross-attention half of a prompt-conditioned merge.
    Var prompt_residual(Graph& g, const Var& x, int h, int w, int stage, const Var& prompt,
                        const std::vector<std::uint8_t>& prompt_mask, AttentionRecord* capture) const;

    // Full encoder. `prompt` must be valid iff mode is Vilma.
    Var encode(Graph& g, const DocumentImage& image, const Var& prompt = {},
               const std::vector<std::uint8_t>& prompt_mask = {},
               std::vector<AttentionRecord>* capture = nullptr) const;

private:
    VisionEncoder() = default;

    struct Block {
        nn::LayerNorm norm1;
        nn::MultiHeadAttention attn;
        Parameter* rel_bias = nullptr;
        nn::LayerNorm norm2;
        nn::Mlp mlp;
    };
    struct Stage {
        std::vector<Block> blocks;
        int window = 0;
        std::vector<Index> window_order;
        std::vector<Index> rel_index;
    };
    struct Site {
        bool vilma = false;
        bool has_reduction = false;
        nn::Linear reduction;
        nn::MultiHeadAttention xattn;
        nn::LayerNorm xnorm;
    };

    void build_layout();
    Var block_forward(Graph& g, const Var& x, const Stage& st, const Block& b) const;

    EncoderConfig config_;
    nn::Linear patch_;
    Parameter* pos_embed_ = nullptr;
    std::vector<Stage> stages_;
    std::vector<Site> sites_;
    nn::LayerNorm final_norm_;
};

// Patchifies an image into (H/p * W/p) x p^2 rows; ShapeError if the image
// is not divisible by the patch size.
Matrix patchify(const DocumentImage& image, int patch_size);

} // namespace pm
