#include "q8llama/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "q8llama/errors.hpp"

namespace q8llama {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void expect_size(std::size_t actual, std::size_t expected, const char* what) {
    if (actual != expected) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) + " elements, got " +
                         std::to_string(actual));
    }
}

void expect_tensor(const QuantizedTensor& t, std::size_t expected, int group_size, const char* what) {
    expect_size(t.values.size(), expected, what);
    if (t.group_size != group_size) {
        throw ShapeError(std::string(what) + ": group size " + std::to_string(t.group_size) +
                         " differs from model group size " + std::to_string(group_size));
    }
    expect_size(t.scales.size(), expected / sz(group_size), what);
}

}  // namespace

void ModelConfig::validate() const {
    if (dim <= 0 || hidden_dim <= 0 || n_layers <= 0 || n_heads <= 0 || n_kv_heads <= 0 || vocab_size <= 0 ||
        seq_len <= 0) {
        throw ShapeError("model config: all dimensions must be positive");
    }
    if (dim % n_heads != 0) {
        throw ShapeError("model config: dim " + std::to_string(dim) + " not divisible by n_heads " +
                         std::to_string(n_heads));
    }
    if (n_heads % n_kv_heads != 0) {
        throw ShapeError("model config: n_heads not divisible by n_kv_heads");
    }
    if (head_dim() % 2 != 0) {
        throw ShapeError("model config: head_dim " + std::to_string(head_dim()) + " must be even");
    }
}

void ModelConfig::validate(int group_size) const {
    validate();
    if (group_size < 1) {
        throw ShapeError("group size must be positive");
    }
    if (dim % group_size != 0 || hidden_dim % group_size != 0) {
        throw ShapeError("group size " + std::to_string(group_size) + " must divide dim (" +
                         std::to_string(dim) + ") and hidden_dim (" + std::to_string(hidden_dim) + ")");
    }
}

ModelConfig ModelConfig::stories110m() {
    return ModelConfig{768, 2048, 12, 12, 12, 32000, 1024};
}

void Fp32Weights::validate(const ModelConfig& c) const {
    c.validate();
    const std::size_t dim = sz(c.dim), hid = sz(c.hidden_dim), kv = sz(c.kv_dim());
    expect_size(token_embedding.size(), sz(c.vocab_size) * dim, "token_embedding");
    expect_size(layers.size(), sz(c.n_layers), "layers");
    for (const auto& l : layers) {
        expect_size(l.rms_att.size(), dim, "rms_att");
        expect_size(l.wq.size(), dim * dim, "wq");
        expect_size(l.wk.size(), kv * dim, "wk");
        expect_size(l.wv.size(), kv * dim, "wv");
        expect_size(l.wo.size(), dim * dim, "wo");
        expect_size(l.rms_ffn.size(), dim, "rms_ffn");
        expect_size(l.w1.size(), hid * dim, "w1");
        expect_size(l.w2.size(), dim * hid, "w2");
        expect_size(l.w3.size(), hid * dim, "w3");
    }
    expect_size(rms_final.size(), dim, "rms_final");
    if (!shared_classifier) {
        expect_size(classifier.size(), sz(c.vocab_size) * dim, "classifier");
    }
}

void TransformerWeights::validate(const ModelConfig& c) const {
    c.validate(group_size);
    const std::size_t dim = sz(c.dim), hid = sz(c.hidden_dim), kv = sz(c.kv_dim());
    const int gs = group_size;
    expect_tensor(token_embedding, sz(c.vocab_size) * dim, gs, "token_embedding");
    expect_size(layers.size(), sz(c.n_layers), "layers");
    for (const auto& l : layers) {
        expect_size(l.rms_att.size(), dim, "rms_att");
        expect_tensor(l.wq, dim * dim, gs, "wq");
        expect_tensor(l.wk, kv * dim, gs, "wk");
        expect_tensor(l.wv, kv * dim, gs, "wv");
        expect_tensor(l.wo, dim * dim, gs, "wo");
        expect_size(l.rms_ffn.size(), dim, "rms_ffn");
        expect_tensor(l.w1, hid * dim, gs, "w1");
        expect_tensor(l.w2, dim * hid, gs, "w2");
        expect_tensor(l.w3, hid * dim, gs, "w3");
    }
    expect_size(rms_final.size(), dim, "rms_final");
    if (!shared_classifier) {
        expect_tensor(classifier, sz(c.vocab_size) * dim, gs, "classifier");
    }
}

QuantizedModel quantize_weights(const Fp32Weights& w, const ModelConfig& config, int group_size) {
    config.validate(group_size);
    w.validate(config);

    QuantizedModel m;
    m.weights.group_size = group_size;
    auto quant = [&](const std::vector<float>& src) {
        auto r = quantize_tensor(src, group_size);
        m.stats.merge(r.stats);
        return std::move(r.tensor);
    };
    m.weights.token_embedding = quant(w.token_embedding);
    m.weights.layers.reserve(w.layers.size());
    for (const auto& l : w.layers) {
        LayerWeights q;
        q.rms_att = l.rms_att;
        q.wq = quant(l.wq);
        q.wk = quant(l.wk);
        q.wv = quant(l.wv);
        q.wo = quant(l.wo);
        q.rms_ffn = l.rms_ffn;
        q.w1 = quant(l.w1);
        q.w2 = quant(l.w2);
        q.w3 = quant(l.w3);
        m.weights.layers.push_back(std::move(q));
    }
    m.weights.rms_final = w.rms_final;
    m.weights.shared_classifier = w.shared_classifier;
    if (!w.shared_classifier) {
        m.weights.classifier = quant(w.classifier);
    }
    return m;
}

Fp32Weights dequantize_weights(const TransformerWeights& w) {
    Fp32Weights f;
    f.token_embedding = dequantize_tensor(w.token_embedding);
    for (const auto& l : w.layers) {
        f.layers.push_back(Fp32Layer{l.rms_att, dequantize_tensor(l.wq), dequantize_tensor(l.wk),
                                     dequantize_tensor(l.wv), dequantize_tensor(l.wo), l.rms_ffn,
                                     dequantize_tensor(l.w1), dequantize_tensor(l.w2), dequantize_tensor(l.w3)});
    }
    f.rms_final = w.rms_final;
    f.shared_classifier = w.shared_classifier;
    if (!w.shared_classifier) {
        f.classifier = dequantize_tensor(w.classifier);
    }
    return f;
}

RunState::RunState(const ModelConfig& c, int group_size)
    : config(c),
      x(sz(c.dim)),
      xb(sz(c.dim)),
      xb2(sz(c.dim)),
      hb(sz(c.hidden_dim)),
      hb2(sz(c.hidden_dim)),
      xq(sz(c.dim), group_size),
      hq(sz(c.hidden_dim), group_size),
      q(sz(c.dim)),
      att(sz(c.n_heads) * sz(c.seq_len)),
      logits(sz(c.vocab_size)),
      key_cache(sz(c.n_layers) * sz(c.seq_len) * sz(c.kv_dim())),
      value_cache(sz(c.n_layers) * sz(c.seq_len) * sz(c.kv_dim())) {
    c.validate(group_size);
}

std::span<float> RunState::key_at(int layer, int pos) {
    const std::size_t kv = sz(config.kv_dim());
    return std::span<float>(key_cache).subspan((sz(layer) * sz(config.seq_len) + sz(pos)) * kv, kv);
}

std::span<float> RunState::value_at(int layer, int pos) {
    const std::size_t kv = sz(config.kv_dim());
    return std::span<float>(value_cache).subspan((sz(layer) * sz(config.seq_len) + sz(pos)) * kv, kv);
}

void rmsnorm(std::span<float> out, std::span<const float> x, std::span<const float> gain, float eps) {
    if (x.empty() || out.size() != x.size() || gain.size() != x.size()) {
        throw ShapeError("rmsnorm: mismatched lengths");
    }
    float ss = 0.0f;
    for (float v : x) {
        ss += v * v;
    }
    ss /= static_cast<float>(x.size());
    const float inv = 1.0f / std::sqrt(ss + eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = gain[i] * (inv * x[i]);
    }
}

void rope_rotate(std::span<float> vec, int pos, int head_dim) {
    if (head_dim <= 0 || head_dim % 2 != 0) {
        throw ShapeError("rope_rotate: head_dim must be positive and even, got " + std::to_string(head_dim));
    }
    if (vec.size() % sz(head_dim) != 0) {
        throw ShapeError("rope_rotate: vector length not a multiple of head_dim");
    }
    const auto hd = sz(head_dim);
    for (std::size_t i = 0; i < hd; i += 2) {
        const float freq = 1.0f / std::pow(kRopeBase, static_cast<float>(i) / static_cast<float>(head_dim));
        const float angle = static_cast<float>(pos) * freq;
        const float c = std::cos(angle);
        const float s = std::sin(angle);
        for (std::size_t h = 0; h < vec.size(); h += hd) {
            const float v0 = vec[h + i];
            const float v1 = vec[h + i + 1];
            vec[h + i] = v0 * c - v1 * s;
            vec[h + i + 1] = v0 * s + v1 * c;
        }
    }
}

void softmax_inplace(std::span<float> x) {
    if (x.empty()) {
        return;
    }
    const float max_val = *std::max_element(x.begin(), x.end());
    float sum = 0.0f;
    for (float& v : x) {
        v = std::exp(v - max_val);
        sum += v;
    }
    for (float& v : x) {
        v /= sum;
    }
}

void swiglu(std::span<float> out, std::span<const float> h1, std::span<const float> h3) {
    if (h1.size() != h3.size() || out.size() != h1.size()) {
        throw ShapeError("swiglu: mismatched lengths");
    }
    for (std::size_t i = 0; i < h1.size(); ++i) {
        const float g = h1[i];
        out[i] = g * (1.0f / (1.0f + std::exp(-g))) * h3[i];
    }
}

void attention_layer(RunState& s, int layer, int pos, const ModelConfig& c) {
    if (pos < 0 || pos >= c.seq_len) {
        throw CapacityError("attention: position " + std::to_string(pos) + " outside context of " +
                            std::to_string(c.seq_len));
    }
    if (layer < 0 || layer >= c.n_layers) {
        throw RangeError("attention: layer index out of range");
    }
    const std::size_t hd = sz(c.head_dim());
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    const int kv_mul = c.kv_mul();
    const std::size_t n_ctx = sz(pos) + 1;

    for (int h = 0; h < c.n_heads; ++h) {
        const std::span<const float> qh = std::span<const float>(s.q).subspan(sz(h) * hd, hd);
        const std::size_t kv_off = sz(h / kv_mul) * hd;
        const std::span<float> scores = std::span<float>(s.att).subspan(sz(h) * sz(c.seq_len), n_ctx);

        for (std::size_t t = 0; t < n_ctx; ++t) {
            const float* k = s.key_at(layer, static_cast<int>(t)).data() + kv_off;
            float dot = 0.0f;
            for (std::size_t i = 0; i < hd; ++i) {
                dot += qh[i] * k[i];
            }
            scores[t] = dot * inv_sqrt;
        }
        softmax_inplace(scores);

        const std::span<float> out = std::span<float>(s.xb).subspan(sz(h) * hd, hd);
        std::fill(out.begin(), out.end(), 0.0f);
        for (std::size_t t = 0; t < n_ctx; ++t) {
            const float* v = s.value_at(layer, static_cast<int>(t)).data() + kv_off;
            const float a = scores[t];
            for (std::size_t i = 0; i < hd; ++i) {
                out[i] += a * v[i];
            }
        }
    }
}

std::span<const float> forward(int token, int pos, const TransformerWeights& w, RunState& s,
                               const ModelConfig& c) {
    if (token < 0 || token >= c.vocab_size) {
        throw RangeError("forward: token " + std::to_string(token) + " outside vocabulary of " +
                         std::to_string(c.vocab_size));
    }
    if (pos < 0 || pos >= c.seq_len) {
        throw CapacityError("forward: position " + std::to_string(pos) + " outside context of " +
                            std::to_string(c.seq_len));
    }
    if (!(s.config == c) || w.layers.size() != sz(c.n_layers) || s.xq.group_size != w.group_size) {
        throw ShapeError("forward: run state or weights built for a different model");
    }
    const int dim = c.dim;
    const int hidden = c.hidden_dim;
    const int kv_dim = c.kv_dim();
    const int head_dim = c.head_dim();

    dequantize_range(w.token_embedding, sz(token) * sz(dim), s.x);

    for (int l = 0; l < c.n_layers; ++l) {
        const LayerWeights& lw = w.layers[sz(l)];

        rmsnorm(s.xb, s.x, lw.rms_att);
        quantize_into(s.xb, s.xq);
        const std::span<float> k = s.key_at(l, pos);
        const std::span<float> v = s.value_at(l, pos);
        qmatmul_into(s.q, s.xq, lw.wq, dim, dim);
        qmatmul_into(k, s.xq, lw.wk, dim, kv_dim);
        qmatmul_into(v, s.xq, lw.wv, dim, kv_dim);

        rope_rotate(s.q, pos, head_dim);
        rope_rotate(k, pos, head_dim);

        attention_layer(s, l, pos, c);

        quantize_into(s.xb, s.xq);
        qmatmul_into(s.xb2, s.xq, lw.wo, dim, dim);
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            s.x[i] += s.xb2[i];
        }

        rmsnorm(s.xb, s.x, lw.rms_ffn);
        quantize_into(s.xb, s.xq);
        qmatmul_into(s.hb, s.xq, lw.w1, dim, hidden);
        qmatmul_into(s.hb2, s.xq, lw.w3, dim, hidden);
        swiglu(s.hb, s.hb, s.hb2);

        quantize_into(s.hb, s.hq);
        qmatmul_into(s.xb, s.hq, lw.w2, hidden, dim);
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            s.x[i] += s.xb[i];
        }
    }

    rmsnorm(s.x, s.x, w.rms_final);
    quantize_into(s.x, s.xq);
    qmatmul_into(s.logits, s.xq, w.output(), dim, c.vocab_size);
    return s.logits;
}

}  // namespace q8llama
