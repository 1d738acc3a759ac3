#include "promptmerge/model.hpp"

#include "promptmerge/errors.hpp"

namespace pm {

std::string to_string(Arm arm) {
    switch (arm) {
    case Arm::Baseline: return "baseline";
    case Arm::Render: return "render";
    case Arm::Vilma: return "vilma";
    }
    return "?";
}

Arm arm_from_string(const std::string& s) {
    if (s == "baseline") return Arm::Baseline;
    if (s == "render") return Arm::Render;
    if (s == "vilma") return Arm::Vilma;
    throw ConfigError("unknown arm: " + s);
}

void ModelConfig::validate() const {
    encoder.validate();
    lm.validate();
    if (prompt.width <= 0 || prompt.heads <= 0 || prompt.width % prompt.heads != 0 || prompt.max_len <= 0)
        throw ConfigError("invalid prompt encoder config");
    if (encoder.output_tokens() > lm.max_source) throw ConfigError("lm max_source smaller than visual token count");
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.encoder.image_height = 16;
    c.encoder.image_width = 32;
    c.encoder.patch_size = 2;
    c.encoder.depths = {1, 1, 1, 1};
    c.encoder.base_width = 4;
    c.encoder.window = 2;
    c.encoder.heads = 2;
    c.encoder.mlp_ratio = 2;
    c.encoder.mode = MergeMode::Vilma;
    c.encoder.vilma_stages = {1, 2, 3, 4};
    c.prompt.width = 8;
    c.prompt.heads = 2;
    c.prompt.hidden = 16;
    c.prompt.max_len = 16;
    c.lm.width = 8;
    c.lm.heads = 2;
    c.lm.hidden = 16;
    c.lm.encoder_layers = 1;
    c.lm.decoder_layers = 1;
    c.lm.max_source = 32;
    c.lm.max_target = 16;
    c.seed = 11;
    return c;
}

// --- json -------------------------------------------------------------------------

void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"image_height", c.image_height}, {"image_width", c.image_width}, {"patch_size", c.patch_size},
         {"depths", c.depths}, {"base_width", c.base_width}, {"window", c.window}, {"heads", c.heads},
         {"mlp_ratio", c.mlp_ratio}, {"mode", to_string(c.mode)}, {"vilma_stages", c.vilma_stages},
         {"vilma_norm_gain", c.vilma_norm_gain}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
    j.at("image_height").get_to(c.image_height);
    j.at("image_width").get_to(c.image_width);
    j.at("patch_size").get_to(c.patch_size);
    j.at("depths").get_to(c.depths);
    j.at("base_width").get_to(c.base_width);
    j.at("window").get_to(c.window);
    j.at("heads").get_to(c.heads);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "plain" && mode != "vilma") throw ConfigError("unknown merge mode: " + mode);
    c.mode = mode == "vilma" ? MergeMode::Vilma : MergeMode::Plain;
    j.at("vilma_stages").get_to(c.vilma_stages);
    j.at("vilma_norm_gain").get_to(c.vilma_norm_gain);
}

void to_json(nlohmann::json& j, const PromptEncoderConfig& c) {
    j = {{"width", c.width}, {"heads", c.heads}, {"hidden", c.hidden}, {"max_len", c.max_len}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PromptEncoderConfig& c) {
    j.at("width").get_to(c.width);
    j.at("heads").get_to(c.heads);
    j.at("hidden").get_to(c.hidden);
    j.at("max_len").get_to(c.max_len);
    j.at("seed").get_to(c.seed);
}

void to_json(nlohmann::json& j, const LmConfig& c) {
    j = {{"width", c.width},           {"heads", c.heads},           {"hidden", c.hidden},
         {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
         {"max_source", c.max_source}, {"max_target", c.max_target}};
}

void from_json(const nlohmann::json& j, LmConfig& c) {
    j.at("width").get_to(c.width);
    j.at("heads").get_to(c.heads);
    j.at("hidden").get_to(c.hidden);
    j.at("encoder_layers").get_to(c.encoder_layers);
    j.at("decoder_layers").get_to(c.decoder_layers);
    j.at("max_source").get_to(c.max_source);
    j.at("max_target").get_to(c.max_target);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"encoder", c.encoder}, {"prompt", c.prompt}, {"lm", c.lm}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("encoder").get_to(c.encoder);
    j.at("prompt").get_to(c.prompt);
    j.at("lm").get_to(c.lm);
    j.at("seed").get_to(c.seed);
}

// --- model ------------------------------------------------------------------------

Model::Model(const ModelConfig& config) : config_(config), store_(std::make_unique<ParameterStore>()) {
    config.validate();
    const int vocab = Vocabulary::standard().size();
    PromptEncoder(config.prompt, vocab, *store_);
    VisionEncoder(config.encoder, config.prompt.width, *store_, config.seed);
    Projector(config.encoder.output_width(), config.lm.width, *store_, config.seed);
    LanguageModel(config.lm, vocab, *store_, config.seed);
    bind();
}

Model::Model(const ModelConfig& config, std::unique_ptr<ParameterStore> store)
    : config_(config), store_(std::move(store)) {
    config.validate();
    bind();
}

void Model::bind() {
    prompt_encoder_ = std::make_unique<PromptEncoder>(PromptEncoder::bind(config_.prompt, *store_));
    vision_ = std::make_unique<VisionEncoder>(VisionEncoder::bind(config_.encoder, *store_));
    projector_ = std::make_unique<Projector>(Projector::bind(*store_));
    lm_ = std::make_unique<LanguageModel>(LanguageModel::bind(config_.lm, *store_));
}

Var Model::visual_tokens(Graph& g, const DocumentImage& image, const TokenSequence& prompt,
                         std::vector<AttentionRecord>* capture) const {
    Var z;
    if (config_.encoder.mode == MergeMode::Vilma) {
        Var p = prompt_encoder_->encode(g, prompt);
        TokenSequence ids = PromptEncoder::normalize(prompt);
        if (static_cast<int>(ids.size()) > config_.prompt.max_len)
            ids.resize(static_cast<std::size_t>(config_.prompt.max_len));
        z = vision_->encode(g, image, p, PromptEncoder::key_mask(ids), capture);
    } else {
        z = vision_->encode(g, image);
    }
    return (*projector_)(g, z);
}

Model::Step Model::forward(Graph& g, const DocumentImage& image, const TokenSequence& prompt,
                           const TokenSequence& target, bool prompt_to_lm, const DropoutPolicy& policy,
                           bool training, Rng* rng) const {
    Var visual = visual_tokens(g, image, prompt);
    LmInput in = lm_->assemble_input(g, prompt_to_lm ? &prompt : nullptr, visual, policy, training, rng);
    return {lm_->forward_loss(g, in, target), in.prompt_included};
}

TokenSequence Model::generate(const DocumentImage& image, const TokenSequence& prompt, bool prompt_to_lm,
                              int max_len) const {
    Graph g(false);
    Var visual = visual_tokens(g, image, prompt);
    LmInput in = lm_->assemble_input(g, prompt_to_lm ? &prompt : nullptr, visual, DropoutPolicy{1.0}, false,
                                     nullptr);
    return lm_->generate(g, in, max_len);
}

std::string Model::answer(const DocumentImage& image, const std::string& question, bool prompt_to_lm,
                          int max_len) const {
    return vocab().detokenize(generate(image, vocab().tokenize(question), prompt_to_lm, max_len));
}

std::vector<AttentionRecord> Model::capture_attention(const DocumentImage& image, const TokenSequence& prompt) const {
    if (config_.encoder.mode != MergeMode::Vilma)
        throw ConfigError("attention capture needs a prompt-conditioned encoder");
    Graph g(false);
    std::vector<AttentionRecord> records;
    visual_tokens(g, image, prompt, &records);
    return records;
}

} // namespace pm
