#include "promptmerge/nn.hpp"

#include <cmath>

namespace pm::nn {

Matrix normal_matrix(Index rows, Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
    return m;
}

Linear Linear::create(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
                      bool with_bias, bool trainable) {
    Linear l;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    l.weight = &store.add(name + ".weight", normal_matrix(in, out, stddev, rng), trainable);
    if (with_bias) l.bias = &store.add(name + ".bias", Matrix::Zero(1, out), trainable);
    return l;
}

Linear Linear::bind(ParameterStore& store, const std::string& name, bool with_bias) {
    Linear l;
    l.weight = &store.at(name + ".weight");
    if (with_bias) l.bias = &store.at(name + ".bias");
    return l;
}

Var Linear::operator()(Graph& g, const Var& x) const {
    return linear(x, g.param(*weight), bias ? g.param(*bias) : Var{});
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Index width, double gain_init,
                            bool trainable) {
    LayerNorm n;
    n.gain = &store.add(name + ".gain", Matrix::Constant(1, width, gain_init), trainable);
    n.shift = &store.add(name + ".shift", Matrix::Zero(1, width), trainable);
    return n;
}

LayerNorm LayerNorm::bind(ParameterStore& store, const std::string& name) {
    LayerNorm n;
    n.gain = &store.at(name + ".gain");
    n.shift = &store.at(name + ".shift");
    return n;
}

Var LayerNorm::operator()(Graph& g, const Var& x) const {
    return layer_norm(x, g.param(*gain), g.param(*shift), eps);
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, Index width, Index hidden, Rng& rng,
                bool trainable) {
    return Mlp{Linear::create(store, name + ".fc1", width, hidden, rng, true, trainable),
               Linear::create(store, name + ".fc2", hidden, width, rng, true, trainable)};
}

Mlp Mlp::bind(ParameterStore& store, const std::string& name) {
    return Mlp{Linear::bind(store, name + ".fc1"), Linear::bind(store, name + ".fc2")};
}

Var Mlp::operator()(Graph& g, const Var& x) const {
    return fc2(g, gelu(fc1(g, x)));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name,
                                              Index query_width, Index kv_width, int heads, Rng& rng,
                                              bool trainable) {
    MultiHeadAttention a;
    a.query = Linear::create(store, name + ".q", query_width, query_width, rng, true, trainable);
    a.key = Linear::create(store, name + ".k", kv_width, query_width, rng, true, trainable);
    a.value = Linear::create(store, name + ".v", kv_width, query_width, rng, true, trainable);
    a.out = Linear::create(store, name + ".out", query_width, query_width, rng, true, trainable);
    a.heads = heads;
    return a;
}

MultiHeadAttention MultiHeadAttention::bind(ParameterStore& store, const std::string& name, int heads) {
    MultiHeadAttention a;
    a.query = Linear::bind(store, name + ".q");
    a.key = Linear::bind(store, name + ".k");
    a.value = Linear::bind(store, name + ".v");
    a.out = Linear::bind(store, name + ".out");
    a.heads = heads;
    return a;
}

Var MultiHeadAttention::operator()(Graph& g, const Var& queries, const Var& keys_values,
                                   AttentionSpec spec) const {
    spec.heads = heads;
    Var q = query(g, queries);
    Var k = key(g, keys_values);
    Var v = value(g, keys_values);
    return out(g, attention(q, k, v, spec));
}

TransformerLayer TransformerLayer::create(ParameterStore& store, const std::string& name, Index width, int heads,
                                          Index hidden, bool cross, Rng& rng, bool trainable) {
    TransformerLayer t;
    t.norm1 = LayerNorm::create(store, name + ".norm1", width, 1.0, trainable);
    t.self_attn = MultiHeadAttention::create(store, name + ".self_attn", width, width, heads, rng, trainable);
    if (cross) {
        t.norm_cross = LayerNorm::create(store, name + ".norm_cross", width, 1.0, trainable);
        t.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", width, width, heads, rng, trainable);
    }
    t.norm2 = LayerNorm::create(store, name + ".norm2", width, 1.0, trainable);
    t.mlp = Mlp::create(store, name + ".mlp", width, hidden, rng, trainable);
    t.has_cross = cross;
    return t;
}

TransformerLayer TransformerLayer::bind(ParameterStore& store, const std::string& name, int heads, bool cross) {
    TransformerLayer t;
    t.norm1 = LayerNorm::bind(store, name + ".norm1");
    t.self_attn = MultiHeadAttention::bind(store, name + ".self_attn", heads);
    if (cross) {
        t.norm_cross = LayerNorm::bind(store, name + ".norm_cross");
        t.cross_attn = MultiHeadAttention::bind(store, name + ".cross_attn", heads);
    }
    t.norm2 = LayerNorm::bind(store, name + ".norm2");
    t.mlp = Mlp::bind(store, name + ".mlp");
    t.has_cross = cross;
    return t;
}

Var TransformerLayer::operator()(Graph& g, const Var& x, const AttentionSpec& self_spec, const Var& memory,
                                 const AttentionSpec& cross_spec) const {
    Var h = norm1(g, x);
    Var y = add(x, self_attn(g, h, h, self_spec));
    if (has_cross) y = add(y, cross_attn(g, norm_cross(g, y), memory, cross_spec));
    return add(y, mlp(g, norm2(g, y)));
}

Matrix sinusoidal_positions(Index count, Index width) {
    Matrix m(count, width);
    for (Index pos = 0; pos < count; ++pos) {
        for (Index i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            m(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
        }
    }
    return m;
}

} // namespace pm::nn
