#include "q8llama/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "byte_io.hpp"
#include "q8llama/errors.hpp"

namespace q8llama {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

ModelConfig read_config(ByteReader& in) {
    ModelConfig c;
    c.dim = in.read<std::int32_t>("header");
    c.hidden_dim = in.read<std::int32_t>("header");
    c.n_layers = in.read<std::int32_t>("header");
    c.n_heads = in.read<std::int32_t>("header");
    c.n_kv_heads = in.read<std::int32_t>("header");
    c.vocab_size = in.read<std::int32_t>("header");
    c.seq_len = in.read<std::int32_t>("header");
    return c;
}

void write_config(ByteWriter& out, const ModelConfig& c, int vocab_field) {
    out.write<std::int32_t>(c.dim);
    out.write<std::int32_t>(c.hidden_dim);
    out.write<std::int32_t>(c.n_layers);
    out.write<std::int32_t>(c.n_heads);
    out.write<std::int32_t>(c.n_kv_heads);
    out.write<std::int32_t>(vocab_field);
    out.write<std::int32_t>(c.seq_len);
}

void validate_header(const ModelConfig& c) {
    try {
        c.validate();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("invalid checkpoint header: ") + e.what());
    }
}

// Element counts of the per-layer tensors in canonical order.
struct TensorSizes {
    std::size_t embedding, norm, wq, wk, wv, wo, w1, w2, w3;
};

TensorSizes tensor_sizes(const ModelConfig& c) {
    const std::size_t dim = sz(c.dim), hid = sz(c.hidden_dim), kv = sz(c.kv_dim());
    return {sz(c.vocab_size) * dim, dim, dim * dim, kv * dim, kv * dim, dim * dim, hid * dim, dim * hid, hid * dim};
}

std::size_t rope_table_floats(const ModelConfig& c) { return 2 * sz(c.seq_len) * sz(c.head_dim()) / 2; }

std::size_t fp32_payload_floats(const ModelConfig& c, bool shared) {
    const TensorSizes t = tensor_sizes(c);
    const std::size_t per_layer = 2 * t.norm + t.wq + t.wk + t.wv + t.wo + t.w1 + t.w2 + t.w3;
    return t.embedding + sz(c.n_layers) * per_layer + t.norm + (shared ? 0 : t.embedding);
}

template <typename Member>
void read_layer_tensor(ByteReader& in, std::vector<Fp32Layer>& layers, Member member, std::size_t n,
                       const char* what) {
    for (auto& l : layers) {
        l.*member = in.read_vector<float>(n, what);
    }
}

template <typename Member>
void write_layer_tensor(ByteWriter& out, const std::vector<Fp32Layer>& layers, Member member) {
    for (const auto& l : layers) {
        out.write_array(std::span<const float>(l.*member));
    }
}

QuantizedTensor read_qtensor(ByteReader& in, std::size_t n, int group_size, const char* what) {
    QuantizedTensor t(n, group_size);
    in.read_array(std::span<std::int8_t>(t.values), what);
    in.read_array(std::span<float>(t.scales), what);
    for (std::int8_t v : t.values) {
        if (v == -128) {
            throw FormatError(std::string("quantized code -128 in ") + what);
        }
    }
    return t;
}

void write_qtensor(ByteWriter& out, const QuantizedTensor& t) {
    out.write_array(std::span<const std::int8_t>(t.values));
    out.write_array(std::span<const float>(t.scales));
}

template <typename Member>
void read_layer_qtensor(ByteReader& in, std::vector<LayerWeights>& layers, Member member, std::size_t n, int gs,
                        const char* what) {
    for (auto& l : layers) {
        l.*member = read_qtensor(in, n, gs, what);
    }
}

template <typename Member>
void write_layer_qtensor(ByteWriter& out, const std::vector<LayerWeights>& layers, Member member) {
    for (const auto& l : layers) {
        write_qtensor(out, l.*member);
    }
}

}  // namespace

Fp32Header read_fp32_header(std::span<const std::byte> bytes) {
    ByteReader in(bytes);
    Fp32Header h;
    h.config = read_config(in);
    h.shared_classifier = h.config.vocab_size > 0;
    h.config.vocab_size = std::abs(h.config.vocab_size);
    validate_header(h.config);
    return h;
}

std::size_t fp32_checkpoint_size(const ModelConfig& config, bool shared_classifier, bool with_rope_tables) {
    config.validate();
    return 7 * sizeof(std::int32_t) +
           (fp32_payload_floats(config, shared_classifier) + (with_rope_tables ? rope_table_floats(config) : 0)) *
               sizeof(float);
}

Fp32Checkpoint load_fp32_checkpoint(std::span<const std::byte> bytes) {
    const Fp32Header h = read_fp32_header(bytes);
    Fp32Checkpoint ck;
    ModelConfig& c = ck.config;
    c = h.config;
    const bool shared = h.shared_classifier;
    ByteReader in(bytes);
    in.skip(7 * sizeof(std::int32_t), "header");

    const std::size_t payload = fp32_payload_floats(c, shared) * sizeof(float);
    const std::size_t rope = rope_table_floats(c) * sizeof(float);
    const std::size_t rest = in.remaining();
    bool has_rope = false;
    if (rest == payload + rope) {
        has_rope = true;
    } else if (rest != payload) {
        throw FormatError("fp32 checkpoint payload is " + std::to_string(rest) + " bytes, expected " +
                          std::to_string(payload) + " (or " + std::to_string(payload + rope) +
                          " with RoPE tables)");
    }

    const TensorSizes t = tensor_sizes(c);
    Fp32Weights& w = ck.weights;
    w.shared_classifier = shared;
    w.layers.resize(sz(c.n_layers));
    w.token_embedding = in.read_vector<float>(t.embedding, "token_embedding");
    read_layer_tensor(in, w.layers, &Fp32Layer::rms_att, t.norm, "rms_att");
    read_layer_tensor(in, w.layers, &Fp32Layer::wq, t.wq, "wq");
    read_layer_tensor(in, w.layers, &Fp32Layer::wk, t.wk, "wk");
    read_layer_tensor(in, w.layers, &Fp32Layer::wv, t.wv, "wv");
    read_layer_tensor(in, w.layers, &Fp32Layer::wo, t.wo, "wo");
    read_layer_tensor(in, w.layers, &Fp32Layer::rms_ffn, t.norm, "rms_ffn");
    read_layer_tensor(in, w.layers, &Fp32Layer::w1, t.w1, "w1");
    read_layer_tensor(in, w.layers, &Fp32Layer::w2, t.w2, "w2");
    read_layer_tensor(in, w.layers, &Fp32Layer::w3, t.w3, "w3");
    w.rms_final = in.read_vector<float>(t.norm, "rms_final");
    if (has_rope) {
        in.skip(rope, "rope tables");
    }
    if (!shared) {
        w.classifier = in.read_vector<float>(t.embedding, "classifier");
    }
    return ck;
}

std::vector<std::byte> write_fp32_checkpoint(const ModelConfig& c, const Fp32Weights& w) {
    w.validate(c);
    ByteWriter out;
    write_config(out, c, w.shared_classifier ? c.vocab_size : -c.vocab_size);
    out.write_array(std::span<const float>(w.token_embedding));
    write_layer_tensor(out, w.layers, &Fp32Layer::rms_att);
    write_layer_tensor(out, w.layers, &Fp32Layer::wq);
    write_layer_tensor(out, w.layers, &Fp32Layer::wk);
    write_layer_tensor(out, w.layers, &Fp32Layer::wv);
    write_layer_tensor(out, w.layers, &Fp32Layer::wo);
    write_layer_tensor(out, w.layers, &Fp32Layer::rms_ffn);
    write_layer_tensor(out, w.layers, &Fp32Layer::w1);
    write_layer_tensor(out, w.layers, &Fp32Layer::w2);
    write_layer_tensor(out, w.layers, &Fp32Layer::w3);
    out.write_array(std::span<const float>(w.rms_final));

    // cos table then sin table, [seq_len x head_dim / 2] each
    const int hd = c.head_dim();
    std::vector<float> cos_table, sin_table;
    cos_table.reserve(sz(c.seq_len) * sz(hd / 2));
    sin_table.reserve(cos_table.capacity());
    for (int p = 0; p < c.seq_len; ++p) {
        for (int i = 0; i < hd; i += 2) {
            const float freq = 1.0f / std::pow(kRopeBase, static_cast<float>(i) / static_cast<float>(hd));
            const float angle = static_cast<float>(p) * freq;
            cos_table.push_back(std::cos(angle));
            sin_table.push_back(std::sin(angle));
        }
    }
    out.write_array(std::span<const float>(cos_table));
    out.write_array(std::span<const float>(sin_table));

    if (!w.shared_classifier) {
        out.write_array(std::span<const float>(w.classifier));
    }
    return out.take();
}

std::size_t quantized_checkpoint_size(const ModelConfig& c, int group_size, bool shared_classifier) {
    c.validate(group_size);
    const TensorSizes t = tensor_sizes(c);
    auto qbytes = [&](std::size_t n) { return n + n / sz(group_size) * sizeof(float); };
    const std::size_t layers = sz(c.n_layers);
    std::size_t total = kQuantHeaderBytes;
    total += (2 * layers + 1) * t.norm * sizeof(float);
    total += qbytes(t.embedding);
    total += layers * (qbytes(t.wq) + qbytes(t.wk) + qbytes(t.wv) + qbytes(t.wo) + qbytes(t.w1) + qbytes(t.w2) +
                       qbytes(t.w3));
    if (!shared_classifier) {
        total += qbytes(t.embedding);
    }
    return total;
}

std::vector<std::byte> write_quantized_checkpoint(const ModelConfig& c, const TransformerWeights& w) {
    w.validate(c);
    ByteWriter out;
    out.write<std::uint32_t>(kQuantMagic);
    out.write<std::int32_t>(kQuantVersion);
    write_config(out, c, c.vocab_size);
    out.write<std::uint8_t>(w.shared_classifier ? 1 : 0);
    out.write<std::int32_t>(w.group_size);
    out.pad_to(kQuantHeaderBytes);

    for (const auto& l : w.layers) {
        out.write_array(std::span<const float>(l.rms_att));
    }
    for (const auto& l : w.layers) {
        out.write_array(std::span<const float>(l.rms_ffn));
    }
    out.write_array(std::span<const float>(w.rms_final));

    write_qtensor(out, w.token_embedding);
    write_layer_qtensor(out, w.layers, &LayerWeights::wq);
    write_layer_qtensor(out, w.layers, &LayerWeights::wk);
    write_layer_qtensor(out, w.layers, &LayerWeights::wv);
    write_layer_qtensor(out, w.layers, &LayerWeights::wo);
    write_layer_qtensor(out, w.layers, &LayerWeights::w1);
    write_layer_qtensor(out, w.layers, &LayerWeights::w2);
    write_layer_qtensor(out, w.layers, &LayerWeights::w3);
    if (!w.shared_classifier) {
        write_qtensor(out, w.classifier);
    }
    return out.take();
}

std::vector<std::byte> write_quantized_checkpoint(const ModelConfig& c, const Fp32Weights& w, int group_size) {
    return write_quantized_checkpoint(c, quantize_weights(w, c, group_size).weights);
}

bool is_quantized_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < sizeof(std::uint32_t)) {
        return false;
    }
    ByteReader in(bytes);
    return in.read<std::uint32_t>("magic") == kQuantMagic;
}

QuantizedCheckpoint load_quantized_checkpoint(std::span<const std::byte> bytes) {
    ByteReader in(bytes);
    const auto magic = in.read<std::uint32_t>("magic");
    if (magic != kQuantMagic) {
        throw FormatError("bad magic in quantized checkpoint");
    }
    const auto version = in.read<std::int32_t>("version");
    if (version != kQuantVersion) {
        throw FormatError("unsupported quantized checkpoint version " + std::to_string(version));
    }
    QuantizedCheckpoint ck;
    ModelConfig& c = ck.config;
    c = read_config(in);
    validate_header(c);
    const auto shared = in.read<std::uint8_t>("header");
    if (shared > 1) {
        throw FormatError("shared_classifier flag must be 0 or 1");
    }
    const auto gs = in.read<std::int32_t>("header");
    try {
        c.validate(gs);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("invalid checkpoint header: ") + e.what());
    }
    const std::size_t expected = quantized_checkpoint_size(c, gs, shared == 1);
    if (bytes.size() != expected) {
        throw FormatError("quantized checkpoint is " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected));
    }
    in.skip(kQuantHeaderBytes - in.offset(), "header padding");

    const TensorSizes t = tensor_sizes(c);
    TransformerWeights& w = ck.weights;
    w.group_size = gs;
    w.shared_classifier = shared == 1;
    w.layers.resize(sz(c.n_layers));
    for (auto& l : w.layers) {
        l.rms_att = in.read_vector<float>(t.norm, "rms_att");
    }
    for (auto& l : w.layers) {
        l.rms_ffn = in.read_vector<float>(t.norm, "rms_ffn");
    }
    w.rms_final = in.read_vector<float>(t.norm, "rms_final");

    w.token_embedding = read_qtensor(in, t.embedding, gs, "token_embedding");
    read_layer_qtensor(in, w.layers, &LayerWeights::wq, t.wq, gs, "wq");
    read_layer_qtensor(in, w.layers, &LayerWeights::wk, t.wk, gs, "wk");
    read_layer_qtensor(in, w.layers, &LayerWeights::wv, t.wv, gs, "wv");
    read_layer_qtensor(in, w.layers, &LayerWeights::wo, t.wo, gs, "wo");
    read_layer_qtensor(in, w.layers, &LayerWeights::w1, t.w1, gs, "w1");
    read_layer_qtensor(in, w.layers, &LayerWeights::w2, t.w2, gs, "w2");
    read_layer_qtensor(in, w.layers, &LayerWeights::w3, t.w3, gs, "w3");
    if (!w.shared_classifier) {
        w.classifier = read_qtensor(in, t.embedding, gs, "classifier");
    }
    return ck;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) {
        throw IoError("error reading " + path.string());
    }
    std::vector<std::byte> bytes(raw.size());
    std::memcpy(bytes.data(), raw.data(), raw.size());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("error writing " + path.string());
    }
}

}  // namespace q8llama
