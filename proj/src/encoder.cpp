#include "promptmerge/encoder.hpp"

#include "promptmerge/errors.hpp"

#include <algorithm>

namespace pm {

std::string to_string(MergeMode mode) {
    return mode == MergeMode::Vilma ? "vilma" : "plain";
}

std::pair<int, int> EncoderConfig::stage_grid(int stage) const {
    const int div = patch_size << (stage - 1);
    return {image_height / div, image_width / div};
}

int EncoderConfig::output_tokens() const {
    const auto [h, w] = stage_grid(num_stages());
    return h * w;
}

bool EncoderConfig::is_vilma_stage(int stage) const {
    return mode == MergeMode::Vilma && std::find(vilma_stages.begin(), vilma_stages.end(), stage) != vilma_stages.end();
}

void EncoderConfig::validate() const {
    if (depths.empty()) throw ConfigError("encoder needs at least one stage");
    if (patch_size <= 0 || base_width <= 0 || window <= 0 || heads <= 0 || mlp_ratio <= 0)
        throw ConfigError("encoder sizes must be positive");
    for (int d : depths)
        if (d < 0) throw ConfigError("stage depth must be non-negative");
    const int div = patch_size << (num_stages() - 1);
    if (image_height % div != 0 || image_width % div != 0)
        throw ConfigError("image " + std::to_string(image_width) + "x" + std::to_string(image_height) +
                          " not divisible by " + std::to_string(div));
    if (base_width % heads != 0) throw ConfigError("base width must be divisible by heads");
    if ((mode == MergeMode::Vilma) != !vilma_stages.empty())
        throw ConfigError("vilma_stages must be non-empty exactly when mode is vilma");
    for (int s : vilma_stages)
        if (s < 1 || s > num_stages()) throw ConfigError("vilma stage out of range: " + std::to_string(s));
    for (int s = 1; s <= num_stages(); ++s) {
        const auto [h, w] = stage_grid(s);
        const int ws = std::min({window, h, w});
        if (h % ws != 0 || w % ws != 0)
            throw ConfigError("stage " + std::to_string(s) + " grid not divisible by its window");
    }
}

Matrix AttentionRecord::head_average() const {
    if (heads.empty()) return {};
    Matrix avg = heads.front();
    for (std::size_t h = 1; h < heads.size(); ++h) avg += heads[h];
    return avg / static_cast<double>(heads.size());
}

// --- prompt encoder ----------------------------------------------------------------

PromptEncoder::PromptEncoder(const PromptEncoderConfig& config, int vocab_size, ParameterStore& store)
    : config_(config) {
    Rng rng = named_stream(config.seed, "prompt_encoder");
    embedding_ = &store.add("prompt_encoder.embedding", nn::normal_matrix(vocab_size, config.width, 1.0, rng), false);
    layer_ = nn::TransformerLayer::create(store, "prompt_encoder.layer0", config.width, config.heads, config.hidden,
                                          false, rng, false);
    final_norm_ = nn::LayerNorm::create(store, "prompt_encoder.norm", config.width, 1.0, false);
}

PromptEncoder PromptEncoder::bind(const PromptEncoderConfig& config, ParameterStore& store) {
    PromptEncoder p;
    p.config_ = config;
    p.embedding_ = &store.at("prompt_encoder.embedding");
    p.layer_ = nn::TransformerLayer::bind(store, "prompt_encoder.layer0", config.heads, false);
    p.final_norm_ = nn::LayerNorm::bind(store, "prompt_encoder.norm");
    return p;
}

TokenSequence PromptEncoder::normalize(const TokenSequence& prompt) {
    if (prompt.empty()) return {Vocabulary::pad};
    return prompt;
}

std::vector<std::uint8_t> PromptEncoder::key_mask(const TokenSequence& normalized) {
    std::vector<std::uint8_t> mask(normalized.size());
    bool any = false;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        mask[i] = normalized[i] != Vocabulary::pad;
        any = any || mask[i];
    }
    if (!any) std::fill(mask.begin(), mask.end(), 1);
    return mask;
}

Var PromptEncoder::encode(Graph& g, const TokenSequence& prompt) const {
    TokenSequence ids = normalize(prompt);
    if (static_cast<int>(ids.size()) > config_.max_len) ids.resize(static_cast<std::size_t>(config_.max_len));
    std::vector<Index> rows(ids.begin(), ids.end());
    Var x = gather_rows(g.param(*embedding_), rows);
    x = add(x, g.constant(nn::sinusoidal_positions(static_cast<Index>(ids.size()), config_.width)));
    AttentionSpec spec;
    spec.key_valid = key_mask(ids);
    x = layer_(g, x, spec);
    return final_norm_(g, x);
}

PromptEncoding PromptEncoder::encode(const TokenSequence& prompt) const {
    Graph g(false);
    Var v = encode(g, prompt);
    TokenSequence ids = normalize(prompt);
    if (static_cast<int>(ids.size()) > config_.max_len) ids.resize(static_cast<std::size_t>(config_.max_len));
    return PromptEncoding{v.value(), key_mask(ids)};
}

// --- vision encoder ----------------------------------------------------------------

namespace {

std::string stage_prefix(int stage) {
    return "encoder.stage" + std::to_string(stage);
}

std::string site_prefix(int stage) {
    return "encoder.merge" + std::to_string(stage);
}

} // namespace

VisionEncoder::VisionEncoder(const EncoderConfig& config, int prompt_width, ParameterStore& store,
                             std::uint64_t seed)
    : config_(config) {
    config_.validate();
    {
        Rng rng = named_stream(seed, "encoder.patch_embed");
        patch_ = nn::Linear::create(store, "encoder.patch_embed", config.patch_size * config.patch_size,
                                    config.base_width, rng);
        // Blank patches embed to exact zeros, where every pre-norm has gain
        // 1/sqrt(eps); an absolute position table keeps them off that point.
        const auto [h, w] = config.stage_grid(1);
        pos_embed_ = &store.add("encoder.pos_embed", nn::normal_matrix(h * w, config.base_width, 0.1, rng));
    }
    const int stages = config.num_stages();
    stages_.resize(static_cast<std::size_t>(stages));
    sites_.resize(static_cast<std::size_t>(stages));
    for (int s = 1; s <= stages; ++s) {
        const int c = config.stage_width(s);
        const auto [h, w] = config.stage_grid(s);
        const int ws = std::min({config.window, h, w});
        for (int b = 0; b < config.depths[static_cast<std::size_t>(s - 1)]; ++b) {
            const std::string name = stage_prefix(s) + ".block" + std::to_string(b);
            Rng rng = named_stream(seed, name);
            Block blk;
            blk.norm1 = nn::LayerNorm::create(store, name + ".norm1", c);
            blk.attn = nn::MultiHeadAttention::create(store, name + ".attn", c, c, config.heads, rng);
            blk.rel_bias = &store.add(name + ".attn.rel_bias",
                                      nn::normal_matrix((2 * ws - 1) * (2 * ws - 1), config.heads, 0.02, rng));
            blk.norm2 = nn::LayerNorm::create(store, name + ".norm2", c);
            blk.mlp = nn::Mlp::create(store, name + ".mlp", c, c * config.mlp_ratio, rng);
            stages_[static_cast<std::size_t>(s - 1)].blocks.push_back(blk);
        }
        Site& site = sites_[static_cast<std::size_t>(s - 1)];
        site.has_reduction = s < stages;
        if (site.has_reduction) {
            Rng rng = named_stream(seed, site_prefix(s) + ".reduction");
            site.reduction = nn::Linear::create(store, site_prefix(s) + ".reduction", 4 * c, 2 * c, rng);
        }
        if (config.is_vilma_stage(s)) {
            Rng rng = named_stream(seed, site_prefix(s) + ".vilma");
            site.vilma = true;
            site.xattn = nn::MultiHeadAttention::create(store, site_prefix(s) + ".xattn", c, prompt_width,
                                                        config.heads, rng);
            site.xnorm = nn::LayerNorm::create(store, site_prefix(s) + ".xnorm", c, config.vilma_norm_gain);
        }
    }
    final_norm_ = nn::LayerNorm::create(store, "encoder.norm", config.output_width());
    build_layout();
}

VisionEncoder VisionEncoder::bind(const EncoderConfig& config, ParameterStore& store) {
    config.validate();
    VisionEncoder e;
    e.config_ = config;
    e.patch_ = nn::Linear::bind(store, "encoder.patch_embed");
    e.pos_embed_ = &store.at("encoder.pos_embed");
    const int stages = config.num_stages();
    e.stages_.resize(static_cast<std::size_t>(stages));
    e.sites_.resize(static_cast<std::size_t>(stages));
    for (int s = 1; s <= stages; ++s) {
        for (int b = 0; b < config.depths[static_cast<std::size_t>(s - 1)]; ++b) {
            const std::string name = stage_prefix(s) + ".block" + std::to_string(b);
            Block blk;
            blk.norm1 = nn::LayerNorm::bind(store, name + ".norm1");
            blk.attn = nn::MultiHeadAttention::bind(store, name + ".attn", config.heads);
            blk.rel_bias = &store.at(name + ".attn.rel_bias");
            blk.norm2 = nn::LayerNorm::bind(store, name + ".norm2");
            blk.mlp = nn::Mlp::bind(store, name + ".mlp");
            e.stages_[static_cast<std::size_t>(s - 1)].blocks.push_back(blk);
        }
        Site& site = e.sites_[static_cast<std::size_t>(s - 1)];
        site.has_reduction = s < stages;
        if (site.has_reduction) site.reduction = nn::Linear::bind(store, site_prefix(s) + ".reduction");
        if (config.is_vilma_stage(s)) {
            site.vilma = true;
            site.xattn = nn::MultiHeadAttention::bind(store, site_prefix(s) + ".xattn", config.heads);
            site.xnorm = nn::LayerNorm::bind(store, site_prefix(s) + ".xnorm");
        }
    }
    e.final_norm_ = nn::LayerNorm::bind(store, "encoder.norm");
    e.build_layout();
    return e;
}

std::vector<std::string> VisionEncoder::vilma_tensor_names(const EncoderConfig& config) {
    std::vector<std::string> names;
    for (int s = 1; s <= config.num_stages(); ++s) {
        if (!config.is_vilma_stage(s)) continue;
        for (const char* proj : {"q", "k", "v", "out"})
            for (const char* part : {"weight", "bias"})
                names.push_back(site_prefix(s) + ".xattn." + proj + "." + part);
        names.push_back(site_prefix(s) + ".xnorm.gain");
        names.push_back(site_prefix(s) + ".xnorm.shift");
    }
    return names;
}

void VisionEncoder::build_layout() {
    for (int s = 1; s <= config_.num_stages(); ++s) {
        Stage& st = stages_[static_cast<std::size_t>(s - 1)];
        const auto [h, w] = config_.stage_grid(s);
        const int ws = std::min({config_.window, h, w});
        st.window = ws;
        st.window_order.clear();
        for (int wr = 0; wr < h / ws; ++wr)
            for (int wc = 0; wc < w / ws; ++wc)
                for (int r = 0; r < ws; ++r)
                    for (int c = 0; c < ws; ++c) st.window_order.push_back((wr * ws + r) * w + (wc * ws + c));
        st.rel_index.clear();
        const int span = 2 * ws - 1;
        for (int i = 0; i < ws * ws; ++i)
            for (int j = 0; j < ws * ws; ++j) {
                const int dy = i / ws - j / ws + ws - 1;
                const int dx = i % ws - j % ws + ws - 1;
                st.rel_index.push_back(dy * span + dx);
            }
    }
}

Matrix patchify(const DocumentImage& image, int patch_size) {
    if (patch_size <= 0 || image.height % patch_size != 0 || image.width % patch_size != 0)
        throw ShapeError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         " not divisible by patch size " + std::to_string(patch_size));
    const int gh = image.height / patch_size, gw = image.width / patch_size;
    Matrix m(static_cast<Index>(gh) * gw, static_cast<Index>(patch_size) * patch_size);
    for (int r = 0; r < gh; ++r)
        for (int c = 0; c < gw; ++c)
            for (int pr = 0; pr < patch_size; ++pr)
                for (int pc = 0; pc < patch_size; ++pc)
                    m(r * gw + c, pr * patch_size + pc) = image.at(r * patch_size + pr, c * patch_size + pc);
    return m;
}

Var VisionEncoder::patch_embed(Graph& g, const DocumentImage& image) const {
    return patch_(g, g.constant(patchify(image, config_.patch_size)));
}

Var VisionEncoder::block_forward(Graph& g, const Var& x, const Stage& st, const Block& b) const {
    AttentionSpec spec;
    spec.query_group = static_cast<Index>(st.window) * st.window;
    spec.key_group = spec.query_group;
    spec.query_order = st.window_order;
    spec.key_order = st.window_order;
    spec.bias = gather_rows(g.param(*b.rel_bias), st.rel_index);
    Var h = b.norm1(g, x);
    Var y = add(x, b.attn(g, h, h, std::move(spec)));
    return add(y, b.mlp(g, b.norm2(g, y)));
}

Var VisionEncoder::stage_blocks(Graph& g, const Var& x, int stage) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage - 1));
    Var y = x;
    for (const Block& b : st.blocks) y = block_forward(g, y, st, b);
    return y;
}

Var VisionEncoder::plain_merge(Graph& g, const Var& x, int h, int w, int stage) const {
    const Site& site = sites_.at(static_cast<std::size_t>(stage - 1));
    if (!site.has_reduction) throw ConfigError("stage " + std::to_string(stage) + " has no merge");
    return site.reduction(g, merge_2x2(x, h, w));
}

Var VisionEncoder::prompt_residual(Graph& g, const Var& x, int h, int w, int stage, const Var& prompt,
                                   const std::vector<std::uint8_t>& prompt_mask, AttentionRecord* capture) const {
    const Site& site = sites_.at(static_cast<std::size_t>(stage - 1));
    if (!site.vilma) throw ConfigError("stage " + std::to_string(stage) + " is not prompt-conditioned");
    if (static_cast<Index>(h) * w != x.rows()) throw ShapeError("prompt_residual: grid does not match tokens");
    if (!prompt.valid()) throw ConfigError("prompt-conditioned merge needs a prompt encoding");
    AttentionSpec spec;
    spec.key_valid = prompt_mask;
    std::vector<Matrix> weights;
    if (capture) spec.capture = &weights;
    Var mixed = site.xattn(g, x, prompt, std::move(spec));
    if (capture) {
        capture->stage = stage;
        capture->grid_h = h;
        capture->grid_w = w;
        capture->heads = std::move(weights);
    }
    return add(x, site.xnorm(g, mixed));
}

Var VisionEncoder::vilma_merge(Graph& g, const Var& x, int h, int w, int stage, const Var& prompt,
                               const std::vector<std::uint8_t>& prompt_mask, AttentionRecord* capture) const {
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("vilma_merge: odd grid");
    Var mixed = prompt_residual(g, x, h, w, stage, prompt, prompt_mask, capture);
    return plain_merge(g, mixed, h, w, stage);
}

Var VisionEncoder::encode(Graph& g, const DocumentImage& image, const Var& prompt,
                          const std::vector<std::uint8_t>& prompt_mask,
                          std::vector<AttentionRecord>* capture) const {
    if (image.height != config_.image_height || image.width != config_.image_width)
        throw ShapeError("encoder expects " + std::to_string(config_.image_width) + "x" +
                         std::to_string(config_.image_height) + " images, got " + std::to_string(image.width) + "x" +
                         std::to_string(image.height));
    const bool vilma = config_.mode == MergeMode::Vilma;
    if (vilma && !prompt.valid()) throw ConfigError("prompt-conditioned encoder needs a prompt");
    Var x = add(patch_embed(g, image), g.param(*pos_embed_));
    for (int s = 1; s <= config_.num_stages(); ++s) {
        const auto [h, w] = config_.stage_grid(s);
        x = stage_blocks(g, x, s);
        const Site& site = sites_[static_cast<std::size_t>(s - 1)];
        AttentionRecord* rec = nullptr;
        if (site.vilma && capture) {
            capture->emplace_back();
            rec = &capture->back();
        }
        if (site.vilma) x = prompt_residual(g, x, h, w, s, prompt, prompt_mask, rec);
        if (site.has_reduction) x = plain_merge(g, x, h, w, s);
    }
    return final_norm_(g, x);
}

} // namespace pm
