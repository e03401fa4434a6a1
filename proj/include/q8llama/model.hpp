#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "q8llama/quant.hpp"

namespace q8llama {

inline constexpr float kRmsNormEps = 1e-5f;
inline constexpr float kRopeBase = 10000.0f;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;

struct ModelConfig {
    int dim = 0;
    int hidden_dim = 0;
    int n_layers = 0;
    int n_heads = 0;
    int n_kv_heads = 0;
    int vocab_size = 0;
    int seq_len = 0;

    int head_dim() const { return dim / n_heads; }
    int kv_dim() const { return dim * n_kv_heads / n_heads; }
    // Query heads served by each key/value head.
    int kv_mul() const { return n_heads / n_kv_heads; }

    // Throws ShapeError when the hyperparameters cannot describe a model.
    void validate() const;
    // validate() plus the divisibility needed to group-quantize every tensor.
    void validate(int group_size) const;

    // The 110M-parameter TinyStories model: 768 dim, 12 layers, 12 heads,
    // 12 kv heads, 2048 hidden, 32000 vocab, 1024 context.
    static ModelConfig stories110m();

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Unquantized weights, each tensor stored flat and row-major ([out x in]).
struct Fp32Layer {
    std::vector<float> rms_att;  // [dim]
    std::vector<float> wq;       // [dim x dim]
    std::vector<float> wk;       // [kv_dim x dim]
    std::vector<float> wv;       // [kv_dim x dim]
    std::vector<float> wo;       // [dim x dim]
    std::vector<float> rms_ffn;  // [dim]
    std::vector<float> w1;       // [hidden x dim]
    std::vector<float> w2;       // [dim x hidden]
    std::vector<float> w3;       // [hidden x dim]
};

struct Fp32Weights {
    std::vector<float> token_embedding;  // [vocab x dim]
    std::vector<Fp32Layer> layers;
    std::vector<float> rms_final;  // [dim]
    bool shared_classifier = true;
    std::vector<float> classifier;  // [vocab x dim]; empty when shared

    const std::vector<float>& output() const { return shared_classifier ? token_embedding : classifier; }
    // Throws ShapeError if any tensor disagrees with `config`.
    void validate(const ModelConfig& config) const;
};

struct LayerWeights {
    std::vector<float> rms_att;
    QuantizedTensor wq;
    QuantizedTensor wk;
    QuantizedTensor wv;
    QuantizedTensor wo;
    std::vector<float> rms_ffn;
    QuantizedTensor w1;
    QuantizedTensor w2;
    QuantizedTensor w3;
};

// Quantized model: linear layers and the embedding are grouped int8, the
// RMSNorm gains stay fp32.
struct TransformerWeights {
    int group_size = kDefaultGroupSize;
    QuantizedTensor token_embedding;
    std::vector<LayerWeights> layers;
    std::vector<float> rms_final;
    bool shared_classifier = true;
    QuantizedTensor classifier;  // unused when shared_classifier

    const QuantizedTensor& output() const { return shared_classifier ? token_embedding : classifier; }
    void validate(const ModelConfig& config) const;
};

struct QuantizedModel {
    TransformerWeights weights;
    QuantStats stats;
};

QuantizedModel quantize_weights(const Fp32Weights& weights, const ModelConfig& config,
                                int group_size = kDefaultGroupSize);
Fp32Weights dequantize_weights(const TransformerWeights& weights);

// Activation buffers and KV cache for one decoding session. Every buffer is
// sized once here; forward() never allocates.
struct RunState {
    RunState(const ModelConfig& config, int group_size);

    ModelConfig config;
    std::vector<float> x;     // residual stream [dim]
    std::vector<float> xb;    // [dim]
    std::vector<float> xb2;   // [dim]
    std::vector<float> hb;    // [hidden]
    std::vector<float> hb2;   // [hidden]
    QuantizedTensor xq;       // quantized staging for dim-sized activations
    QuantizedTensor hq;       // quantized staging for hidden-sized activations
    std::vector<float> q;     // [dim]
    std::vector<float> att;   // [n_heads x seq_len]
    std::vector<float> logits;       // [vocab]
    std::vector<float> key_cache;    // [n_layers x seq_len x kv_dim]
    std::vector<float> value_cache;  // [n_layers x seq_len x kv_dim]

    std::span<float> key_at(int layer, int pos);
    std::span<float> value_at(int layer, int pos);
};

// out[i] = g[i] * x[i] / sqrt(mean(x^2) + eps). `out` may alias `x`.
void rmsnorm(std::span<float> out, std::span<const float> x, std::span<const float> gain,
             float eps = kRmsNormEps);

// Rotates consecutive (even, odd) pairs of every head in `vec` by
// pos * base^(-2i/head_dim). Throws ShapeError on odd head_dim or when
// head_dim does not divide vec.size().
void rope_rotate(std::span<float> vec, int pos, int head_dim);

// Numerically stable softmax (max-subtracted), in place.
void softmax_inplace(std::span<float> x);

// out[i] = silu(h1[i]) * h3[i]. `out` may alias either input.
void swiglu(std::span<float> out, std::span<const float> h1, std::span<const float> h3);

// Causal grouped-query attention for one layer at `pos`. Expects state.q to
// hold the rotated query and the caches to hold keys/values for [0, pos].
// Writes the concatenated head outputs into state.xb.
void attention_layer(RunState& state, int layer, int pos, const ModelConfig& config);

// One decoding step. Returns a view of state.logits.
std::span<const float> forward(int token, int pos, const TransformerWeights& weights, RunState& state,
                               const ModelConfig& config);

}  // namespace q8llama
