#pragma once

// Parameterized building blocks shared by the vision encoder, the frozen
// prompt encoder and the sequence-to-sequence head. Each block only holds
// pointers into a ParameterStore; the store owns the tensors.

#include "promptmerge/graph.hpp"
#include "promptmerge/rng.hpp"

#include <string>

namespace pm::nn {

Matrix normal_matrix(Index rows, Index cols, double stddev, Rng& rng);

struct Linear {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;

    static Linear create(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
                         bool with_bias = true, bool trainable = true);
    static Linear bind(ParameterStore& store, const std::string& name, bool with_bias = true);

    Var operator()(Graph& g, const Var& x) const;
    Index in_features() const { return weight->value.rows(); }
    Index out_features() const { return weight->value.cols(); }
};

struct LayerNorm {
    Parameter* gain = nullptr;
    Parameter* shift = nullptr;
    double eps = 1e-5;

    static LayerNorm create(ParameterStore& store, const std::string& name, Index width, double gain_init = 1.0,
                            bool trainable = true);
    static LayerNorm bind(ParameterStore& store, const std::string& name);

    Var operator()(Graph& g, const Var& x) const;
};

// Two-layer GELU feed-forward network.
struct Mlp {
    Linear fc1;
    Linear fc2;

    static Mlp create(ParameterStore& store, const std::string& name, Index width, Index hidden, Rng& rng,
                      bool trainable = true);
    static Mlp bind(ParameterStore& store, const std::string& name);

    Var operator()(Graph& g, const Var& x) const;
};

// Multi-head attention with separate query / key / value / output
// projections. Queries come from one sequence, keys and values from another
// (the same one for self-attention).
struct MultiHeadAttention {
    Linear query;
    Linear key;
    Linear value;
    Linear out;
    int heads = 1;

    static MultiHeadAttention create(ParameterStore& store, const std::string& name, Index query_width,
                                     Index kv_width, int heads, Rng& rng, bool trainable = true);
    static MultiHeadAttention bind(ParameterStore& store, const std::string& name, int heads);

    // spec.heads is overwritten with this layer's head count.
    Var operator()(Graph& g, const Var& queries, const Var& keys_values, AttentionSpec spec) const;
};

// Pre-norm transformer layer: x + SelfAttn(LN(x)), then x + MLP(LN(x)).
// The decoder variant inserts x + CrossAttn(LN(x), memory) in between.
struct TransformerLayer {
    LayerNorm norm1;
    MultiHeadAttention self_attn;
    LayerNorm norm_cross;
    MultiHeadAttention cross_attn;
    LayerNorm norm2;
    Mlp mlp;
    bool has_cross = false;

    static TransformerLayer create(ParameterStore& store, const std::string& name, Index width, int heads,
                                   Index hidden, bool cross, Rng& rng, bool trainable = true);
    static TransformerLayer bind(ParameterStore& store, const std::string& name, int heads, bool cross);

    Var operator()(Graph& g, const Var& x, const AttentionSpec& self_spec, const Var& memory = {},
                   const AttentionSpec& cross_spec = {}) const;
};

// Fixed sinusoidal position table (rows = positions).
Matrix sinusoidal_positions(Index count, Index width);

} // namespace pm::nn
