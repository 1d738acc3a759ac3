#include "promptmerge/language_head.hpp"

#include "promptmerge/errors.hpp"

#include <algorithm>

namespace pm {

void LmConfig::validate() const {
    if (width <= 0 || heads <= 0 || hidden <= 0 || encoder_layers < 0 || decoder_layers < 0)
        throw ConfigError("language model sizes must be positive");
    if (width % heads != 0) throw ConfigError("lm width must be divisible by heads");
    if (max_source <= 0 || max_target <= 0) throw ConfigError("lm max lengths must be positive");
}

void DropoutPolicy::validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
}

Projector::Projector(Index in_width, Index out_width, ParameterStore& store, std::uint64_t seed) {
    Rng rng = named_stream(seed, "projector");
    mlp_.fc1 = nn::Linear::create(store, "projector.fc1", in_width, out_width, rng);
    mlp_.fc2 = nn::Linear::create(store, "projector.fc2", out_width, out_width, rng);
}

Projector Projector::bind(ParameterStore& store) {
    Projector p;
    p.mlp_ = nn::Mlp::bind(store, "projector");
    return p;
}

Var Projector::operator()(Graph& g, const Var& visual) const {
    return mlp_(g, visual);
}

LanguageModel::LanguageModel(const LmConfig& config, int vocab_size, ParameterStore& store, std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size) {
    config.validate();
    Rng rng = named_stream(seed, "lm.embeddings");
    embedding_ = &store.add("lm.embedding", nn::normal_matrix(vocab_size, config.width, 1.0, rng));
    source_pos_ = &store.add("lm.source_pos", nn::normal_matrix(config.max_source, config.width, 0.1, rng));
    target_pos_ = &store.add("lm.target_pos", nn::normal_matrix(config.max_target, config.width, 0.1, rng));
    for (int i = 0; i < config.encoder_layers; ++i) {
        const std::string name = "lm.encoder" + std::to_string(i);
        Rng lr = named_stream(seed, name);
        encoder_.push_back(nn::TransformerLayer::create(store, name, config.width, config.heads, config.hidden,
                                                        false, lr));
    }
    encoder_norm_ = nn::LayerNorm::create(store, "lm.encoder_norm", config.width);
    for (int i = 0; i < config.decoder_layers; ++i) {
        const std::string name = "lm.decoder" + std::to_string(i);
        Rng lr = named_stream(seed, name);
        decoder_.push_back(nn::TransformerLayer::create(store, name, config.width, config.heads, config.hidden,
                                                        true, lr));
    }
    decoder_norm_ = nn::LayerNorm::create(store, "lm.decoder_norm", config.width);
    Rng hr = named_stream(seed, "lm.head");
    head_ = nn::Linear::create(store, "lm.head", config.width, vocab_size, hr);
}

LanguageModel LanguageModel::bind(const LmConfig& config, ParameterStore& store) {
    config.validate();
    LanguageModel lm;
    lm.config_ = config;
    lm.embedding_ = &store.at("lm.embedding");
    lm.vocab_size_ = static_cast<int>(lm.embedding_->value.rows());
    lm.source_pos_ = &store.at("lm.source_pos");
    lm.target_pos_ = &store.at("lm.target_pos");
    for (int i = 0; i < config.encoder_layers; ++i)
        lm.encoder_.push_back(nn::TransformerLayer::bind(store, "lm.encoder" + std::to_string(i), config.heads, false));
    lm.encoder_norm_ = nn::LayerNorm::bind(store, "lm.encoder_norm");
    for (int i = 0; i < config.decoder_layers; ++i)
        lm.decoder_.push_back(nn::TransformerLayer::bind(store, "lm.decoder" + std::to_string(i), config.heads, true));
    lm.decoder_norm_ = nn::LayerNorm::bind(store, "lm.decoder_norm");
    lm.head_ = nn::Linear::bind(store, "lm.head");
    return lm;
}

Var LanguageModel::embed(Graph& g, const TokenSequence& tokens) const {
    std::vector<Index> rows(tokens.begin(), tokens.end());
    for (Index r : rows)
        if (r < 0 || r >= vocab_size_) throw IndexError("token id out of vocabulary: " + std::to_string(r));
    return gather_rows(g.param(*embedding_), rows);
}

LmInput LanguageModel::assemble_input(Graph& g, const TokenSequence* prompt, const Var& projected,
                                      const DropoutPolicy& policy, bool training, Rng* rng) const {
    policy.validate();
    LmInput in;
    bool include = prompt != nullptr && !prompt->empty();
    if (prompt != nullptr && training) {
        if (rng == nullptr) throw PreconditionError("training-mode assembly needs an rng");
        include = policy.include(*rng) && include;
    }
    const Index visual = projected.rows();
    if (visual > config_.max_source) throw ShapeError("visual sequence longer than lm max_source");
    if (include) {
        TokenSequence ids = *prompt;
        const auto room = static_cast<std::size_t>(config_.max_source - visual);
        if (ids.size() > room) ids.resize(room);
        if (!ids.empty()) {
            const Var parts[] = {embed(g, ids), projected};
            in.source = concat_rows(parts);
            in.prompt_tokens = static_cast<int>(ids.size());
            in.prompt_included = true;
        }
    }
    if (!in.prompt_included) in.source = projected;
    in.mask.assign(static_cast<std::size_t>(in.source.rows()), 1);
    return in;
}

Var LanguageModel::encode_source(Graph& g, const LmInput& input) const {
    const Index n = input.source.rows();
    Var x = add(input.source, slice_rows(g.param(*source_pos_), 0, n));
    AttentionSpec spec;
    spec.key_valid = input.mask;
    for (const auto& layer : encoder_) x = layer(g, x, spec);
    return encoder_norm_(g, x);
}

Var LanguageModel::decode(Graph& g, const Var& memory, const std::vector<std::uint8_t>& memory_mask,
                          const TokenSequence& decoder_input) const {
    const auto n = static_cast<Index>(decoder_input.size());
    if (n > config_.max_target) throw ShapeError("decoder input longer than lm max_target");
    Var y = add(embed(g, decoder_input), slice_rows(g.param(*target_pos_), 0, n));
    AttentionSpec self_spec;
    self_spec.causal = true;
    AttentionSpec cross_spec;
    cross_spec.key_valid = memory_mask;
    for (const auto& layer : decoder_) y = layer(g, y, self_spec, memory, cross_spec);
    return head_(g, decoder_norm_(g, y));
}

TokenSequence LanguageModel::shift_right(const TokenSequence& target) {
    TokenSequence in;
    in.reserve(target.size());
    in.push_back(Vocabulary::pad);
    if (!target.empty()) in.insert(in.end(), target.begin(), target.end() - 1);
    return in;
}

LmOutput LanguageModel::forward_loss(Graph& g, const LmInput& input, const TokenSequence& target) const {
    if (std::all_of(target.begin(), target.end(), [](int t) { return t == Vocabulary::pad; }))
        throw EmptyTarget("target has no non-PAD token");
    Var memory = encode_source(g, input);
    Var logits = decode(g, memory, input.mask, shift_right(target));
    return {cross_entropy(logits, target, Vocabulary::pad), logits};
}

TokenSequence LanguageModel::generate(Graph& g, const LmInput& input, int max_len) const {
    TokenSequence out;
    if (max_len <= 0) return out;
    max_len = std::min(max_len, config_.max_target);
    Var memory = encode_source(g, input);
    TokenSequence dec{Vocabulary::pad};
    // A fresh tape per step keeps memory flat over long generations.
    while (static_cast<int>(out.size()) < max_len) {
        Graph step(false);
        Var logits = decode(step, step.constant(memory.value()), input.mask, dec);
        const auto last = logits.value().row(logits.rows() - 1);
        Index best = 0;
        last.maxCoeff(&best);
        const int tok = static_cast<int>(best);
        if (tok == Vocabulary::eos) break;
        out.push_back(tok);
        dec.push_back(tok);
    }
    return out;
}

} // namespace pm
