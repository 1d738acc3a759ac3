#include "gradcheck.hpp"

#include "promptmerge/encoder.hpp"
#include "promptmerge/errors.hpp"
#include "promptmerge/model.hpp"

#include <doctest.h>

using namespace pm;
using namespace pm::testing;

namespace {

DocumentImage blank_image(int w, int h) {
    DocumentImage img;
    img.width = w;
    img.height = h;
    img.pixels.assign(static_cast<std::size_t>(w) * h, 0.0f);
    return img;
}

DocumentImage noise_image(int w, int h, std::uint64_t seed) {
    DocumentImage img = blank_image(w, h);
    Rng rng(seed);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    return img;
}

// One merge site on a 4x4 grid with 8 channels.
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

std::vector<Parameter*> with_prefix(ParameterStore& store, const std::string& prefix) {
    std::vector<Parameter*> out;
    for (auto& p : store)
        if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    return out;
}

} // namespace

TEST_CASE("encoder config arithmetic") {
    EncoderConfig c;
    CHECK(c.stage_grid(1) == std::pair{32, 64});
    CHECK(c.stage_grid(4) == std::pair{4, 8});
    CHECK(c.output_tokens() == 32);
    CHECK(c.output_width() == 128);
    c.mode = MergeMode::Vilma;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.vilma_stages = {5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.vilma_stages = {3, 4};
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("prompt encoder is deterministic with one row per token") {
    ParameterStore store;
    PromptEncoderConfig pc;
    PromptEncoder enc(pc, Vocabulary::standard().size(), store);
    const auto& vocab = Vocabulary::standard();
    const auto a = enc.encode(vocab.tokenize("abc"));
    const auto b = enc.encode(vocab.tokenize("abc"));
    CHECK(a.embeddings == b.embeddings);
    CHECK(a.embeddings.rows() == 3);
    CHECK(a.embeddings.cols() == pc.width);
    CHECK(enc.encode(vocab.tokenize("abcdefg")).embeddings.rows() == 7);
    const auto empty = enc.encode(TokenSequence{});
    CHECK(empty.embeddings.rows() == 1);
    CHECK(empty.mask == std::vector<std::uint8_t>{1});
    for (auto& p : store) CHECK_FALSE(p->trainable);
}

TEST_CASE("patch embedding shapes and linearity") {
    ParameterStore store;
    EncoderConfig c;
    VisionEncoder enc(c, 64, store, 1);
    Graph g(false);
    Var f = enc.patch_embed(g, blank_image(256, 128));
    CHECK(f.rows() == 64 * 32);
    CHECK(f.cols() == 16);
    const Matrix& bias = store.at("encoder.patch_embed.bias").value;
    for (Index r = 0; r < f.rows(); ++r) CHECK(f.value().row(r) == bias.row(0));
    CHECK_THROWS_AS(enc.patch_embed(g, blank_image(250, 128)), ShapeError);
    CHECK_THROWS_AS(patchify(blank_image(250, 128), 4), ShapeError);
}

TEST_CASE("plain merge shape law at every stage") {
    ParameterStore store;
    EncoderConfig c;
    VisionEncoder enc(c, 64, store, 2);
    Graph g(false);
    for (int s = 1; s < c.num_stages(); ++s) {
        const auto [h, w] = c.stage_grid(s);
        const int ch = c.stage_width(s);
        Var x = g.constant(random_matrix(static_cast<Index>(h) * w, ch, 10 + s));
        Var y = enc.plain_merge(g, x, h, w, s);
        CHECK(y.rows() == static_cast<Index>(h / 2) * (w / 2));
        CHECK(y.cols() == 2 * ch);
        CHECK(c.stage_grid(s + 1) == std::pair{h / 2, w / 2});
    }
}

TEST_CASE("plain merge 8x8x16 and locality") {
    ParameterStore store;
    EncoderConfig c;
    c.image_height = 32;
    c.image_width = 32;
    c.depths = {1, 1};
    VisionEncoder enc(c, 64, store, 3);
    Graph g(false);
    Matrix x = random_matrix(64, 16, 4);
    Var y = enc.plain_merge(g, g.constant(x), 8, 8, 1);
    CHECK(y.rows() == 16);
    CHECK(y.cols() == 32);
    Matrix bumped = x;
    bumped.row(3 * 8 + 5) += random_matrix(1, 16, 5); // token (3, 5) -> output (1, 2)
    Var z = enc.plain_merge(g, g.constant(bumped), 8, 8, 1);
    for (Index r = 0; r < 16; ++r) {
        if (r == 1 * 4 + 2)
            CHECK(z.value().row(r) != y.value().row(r));
        else
            CHECK(z.value().row(r) == y.value().row(r));
    }
    CHECK_THROWS_AS(enc.plain_merge(g, g.constant(random_matrix(7 * 8, 16, 6)), 7, 8, 1), ShapeError);
}

TEST_CASE("plain merge gradients") {
    ParameterStore store;
    EncoderConfig c = site_config();
    c.mode = MergeMode::Plain;
    c.vilma_stages.clear();
    VisionEncoder enc(c, 6, store, 4);
    Matrix x = random_matrix(16, 8, 7);
    const Matrix proj = random_matrix(4, 16, 8);
    auto f = [&](Graph& g, const Var& v) { return weighted_sum(enc.plain_merge(g, v, 4, 4, 1), proj); };
    CHECK(check_input(f, x) < 1e-4);
    const LossFn lf = [&](Graph& g) { return f(g, g.constant(x)); };
    CHECK(check_parameters(lf, with_prefix(store, "encoder.merge1.")) < 1e-4);
}

TEST_CASE("prompt-conditioned merge gradients w.r.t. features, prompt and parameters") {
    ParameterStore store;
    const EncoderConfig c = site_config();
    VisionEncoder enc(c, 6, store, 5);
    // Non-trivial norm parameters so their gradients are exercised.
    store.at("encoder.merge1.xnorm.gain").value = random_matrix(1, 8, 30);
    store.at("encoder.merge1.xnorm.shift").value = random_matrix(1, 8, 31);
    Matrix x = random_matrix(16, 8, 9);
    Matrix prompt = random_matrix(3, 6, 10);
    const std::vector<std::uint8_t> mask{1, 1, 1};
    const Matrix proj = random_matrix(4, 16, 11);
    auto f = [&](Graph& g, const Var& fv, const Var& pv) {
        return weighted_sum(enc.vilma_merge(g, fv, 4, 4, 1, pv, mask), proj);
    };
    CHECK(check_input([&](Graph& g, const Var& v) { return f(g, v, g.constant(prompt)); }, x) < 1e-4);
    CHECK(check_input([&](Graph& g, const Var& v) { return f(g, g.constant(x), v); }, prompt) < 1e-4);
    const LossFn lf = [&](Graph& g) { return f(g, g.constant(x), g.constant(prompt)); };
    const auto params = with_prefix(store, "encoder.merge1.");
    CHECK(params.size() == 12); // q/k/v/out weight+bias, norm gain/shift, reduction weight+bias
    CHECK(check_parameters(lf, params) < 1e-4);
}

TEST_CASE("prompt-conditioned merge attention weights") {
    ParameterStore store;
    VisionEncoder enc(site_config(), 6, store, 6);
    Graph g(false);
    Var x = g.constant(random_matrix(16, 8, 12));
    AttentionRecord rec;
    enc.vilma_merge(g, x, 4, 4, 1, g.constant(random_matrix(5, 6, 13)), {1, 1, 1, 1, 1}, &rec);
    REQUIRE(rec.heads.size() == 2);
    CHECK(rec.grid_h == 4);
    CHECK(rec.grid_w == 4);
    for (const auto& w : rec.heads) {
        CHECK(w.rows() == 16);
        CHECK(w.cols() == 5);
        for (Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) <= 1e-6);
    }
    AttentionRecord single;
    enc.vilma_merge(g, x, 4, 4, 1, g.constant(random_matrix(1, 6, 14)), {1}, &single);
    for (const auto& w : single.heads) CHECK((w.array() == 1.0).all());
    CHECK_THROWS_AS(enc.vilma_merge(g, x, 4, 4, 1, g.constant(random_matrix(2, 6, 15)), {0, 0}), MaskError);
    CHECK_THROWS_AS(enc.vilma_merge(g, g.constant(random_matrix(12, 8, 16)), 3, 4, 1,
                                    g.constant(random_matrix(2, 6, 15)), {1, 1}),
                    ShapeError);
}

TEST_CASE("zero output projection with unit gain and zero shift leaves features unchanged") {
    ParameterStore store;
    VisionEncoder enc(site_config(), 6, store, 7);
    store.at("encoder.merge1.xattn.out.weight").value.setZero();
    store.at("encoder.merge1.xattn.out.bias").value.setZero();
    Graph g(false);
    Matrix x = random_matrix(16, 8, 17);
    Var y = enc.prompt_residual(g, g.constant(x), 4, 4, 1, g.constant(random_matrix(3, 6, 18)), {1, 1, 1}, nullptr);
    CHECK(y.value() == x);
}

TEST_CASE("full encoder: token count and prompt dependence") {
    const auto& vocab = Vocabulary::standard();
    const DocumentImage img = noise_image(256, 128, 3);
    SUBCASE("plain mode ignores the prompt bitwise") {
        ModelConfig mc;
        Model m(mc);
        Graph g(false);
        Var a = m.visual_tokens(g, img, vocab.tokenize("what is the word after cat?"));
        Var b = m.visual_tokens(g, img, vocab.tokenize("which word appears in line 3?"));
        CHECK(a.value() == b.value());
        Var z = m.vision().encode(g, img);
        CHECK(z.rows() == 32);
        CHECK(z.cols() == 128);
        CHECK_THROWS_AS(m.capture_attention(img, vocab.tokenize("a")), ConfigError);
    }
    SUBCASE("prompt mode reacts to the prompt") {
        ModelConfig mc;
        mc.encoder.mode = MergeMode::Vilma;
        mc.encoder.vilma_stages = {1, 2, 3, 4};
        Model m(mc);
        Graph g(false);
        Var a = m.visual_tokens(g, img, vocab.tokenize("what is the word after cat?"));
        Var b = m.visual_tokens(g, img, vocab.tokenize("which word appears in line 3?"));
        CHECK((a.value() - b.value()).cwiseAbs().maxCoeff() > 0.0);
        const auto records = m.capture_attention(img, vocab.tokenize("cat"));
        REQUIRE(records.size() == 4);
        for (const auto& r : records) {
            CHECK(std::pair{r.grid_h, r.grid_w} == mc.encoder.stage_grid(r.stage));
            for (const auto& w : r.heads)
                for (Index i = 0; i < w.rows(); ++i) CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-5);
        }
        const auto one = m.capture_attention(img, vocab.tokenize("a"));
        for (const auto& r : one)
            for (const auto& w : r.heads) CHECK((w.array() == 1.0).all());
    }
}

TEST_CASE("prompt-mode outputs differ across random initializations") {
    // Statistical: every one of 100 seeds must separate two prompts.
    const auto& vocab = Vocabulary::standard();
    ModelConfig mc = ModelConfig::tiny();
    const DocumentImage img = noise_image(32, 16, 4);
    int differing = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        mc.seed = seed;
        mc.prompt.seed = seed + 1000;
        Model m(mc);
        Graph g(false);
        Var a = m.vision().encode(g, img, m.prompt_encoder().encode(g, vocab.tokenize("ab")), {1, 1});
        Var b = m.vision().encode(g, img, m.prompt_encoder().encode(g, vocab.tokenize("ba")), {1, 1});
        differing += (a.value() - b.value()).cwiseAbs().maxCoeff() > 0.0;
    }
    CHECK(differing == 100);
}

TEST_CASE("prompt-conditioned tensor names") {
    EncoderConfig c;
    c.mode = MergeMode::Vilma;
    c.vilma_stages = {2, 4};
    const auto names = VisionEncoder::vilma_tensor_names(c);
    CHECK(names.size() == 2 * 10);
    ParameterStore vstore, pstore;
    VisionEncoder(c, 64, vstore, 1);
    EncoderConfig plain;
    VisionEncoder(plain, 64, pstore, 1);
    std::vector<std::string> extra;
    for (const auto& n : vstore.names())
        if (!pstore.contains(n)) extra.push_back(n);
    std::sort(extra.begin(), extra.end());
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(extra == sorted);
}
