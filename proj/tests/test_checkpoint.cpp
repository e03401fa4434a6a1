#include <cmath>
#include <cstring>

#include "doctest.h"
#include "q8llama/checkpoint.hpp"
#include "q8llama/errors.hpp"
#include "test_support.hpp"

using namespace q8llama;

namespace {

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool same_weights(const Fp32Weights& a, const Fp32Weights& b) {
    if (a.layers.size() != b.layers.size() || a.shared_classifier != b.shared_classifier) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& x = a.layers[l];
        const auto& y = b.layers[l];
        if (!same_bits(x.rms_att, y.rms_att) || !same_bits(x.wq, y.wq) || !same_bits(x.wk, y.wk) ||
            !same_bits(x.wv, y.wv) || !same_bits(x.wo, y.wo) || !same_bits(x.rms_ffn, y.rms_ffn) ||
            !same_bits(x.w1, y.w1) || !same_bits(x.w2, y.w2) || !same_bits(x.w3, y.w3)) {
            return false;
        }
    }
    return same_bits(a.token_embedding, b.token_embedding) && same_bits(a.rms_final, b.rms_final) &&
           same_bits(a.classifier, b.classifier);
}

bool same_tensor(const QuantizedTensor& a, const QuantizedTensor& b) {
    return a.group_size == b.group_size && a.values == b.values && same_bits(a.scales, b.scales);
}

template <typename T>
void put(std::vector<std::byte>& bytes, std::size_t offset, T v) {
    std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

// Bytes of a tensor of n codes with n / gs fp32 scales.
std::size_t tensor_bytes(std::size_t n, std::size_t gs) { return n + n / gs * 4; }

}  // namespace

TEST_CASE("fp32 checkpoint roundtrip is bit-exact") {
    const ModelConfig c = testing::tiny_config();
    for (bool shared : {true, false}) {
        const auto w = testing::random_weights(c, shared ? 1 : 2, 0.5f, shared);
        const auto bytes = write_fp32_checkpoint(c, w);
        const auto loaded = load_fp32_checkpoint(bytes);
        CHECK(loaded.config == c);
        CHECK(same_weights(loaded.weights, w));
        CHECK(write_fp32_checkpoint(loaded.config, loaded.weights) == bytes);
    }
}

TEST_CASE("fp32 checkpoint loads with or without the RoPE tables") {
    const ModelConfig c = testing::tiny_config();
    const auto w = testing::random_weights(c, 3, 0.5f, false);
    const auto full = write_fp32_checkpoint(c, w);

    // Cut the RoPE tables (2 x seq_len x head_dim / 2 floats) out of the file.
    const std::size_t cls_bytes = w.classifier.size() * 4;
    const std::size_t rope_bytes = static_cast<std::size_t>(c.seq_len * c.head_dim()) * 4;
    std::vector<std::byte> trimmed(full.begin(), full.end() - static_cast<std::ptrdiff_t>(cls_bytes + rope_bytes));
    trimmed.insert(trimmed.end(), full.end() - static_cast<std::ptrdiff_t>(cls_bytes), full.end());

    const auto loaded = load_fp32_checkpoint(trimmed);
    CHECK(same_weights(loaded.weights, w));
}

TEST_CASE("fp32 header sign flags the classifier") {
    const ModelConfig c = testing::tiny_config();
    const auto shared = write_fp32_checkpoint(c, testing::random_weights(c, 4, 0.5f, true));
    const auto unshared = write_fp32_checkpoint(c, testing::random_weights(c, 4, 0.5f, false));
    std::int32_t vocab = 0;
    std::memcpy(&vocab, shared.data() + 20, 4);
    CHECK(vocab == 32);
    std::memcpy(&vocab, unshared.data() + 20, 4);
    CHECK(vocab == -32);
}

TEST_CASE("fp32 checkpoint rejects truncation and bad headers") {
    const ModelConfig c = testing::tiny_config();
    auto bytes = write_fp32_checkpoint(c, testing::random_weights(c, 5));
    CHECK_THROWS_AS(load_fp32_checkpoint(std::span(bytes).first(bytes.size() - 4)), FormatError);
    CHECK_THROWS_AS(load_fp32_checkpoint(std::span(bytes).first(10)), FormatError);
    CHECK_THROWS_AS(load_fp32_checkpoint({}), FormatError);
    auto extra = bytes;
    extra.resize(extra.size() + 4);
    CHECK_THROWS_AS(load_fp32_checkpoint(extra), FormatError);
    put<std::int32_t>(bytes, 12, 3);  // 3 heads do not divide dim 8
    CHECK_THROWS(load_fp32_checkpoint(bytes));
}

TEST_CASE("quantized checkpoint header") {
    const ModelConfig c = testing::tiny_config();
    const auto bytes = write_quantized_checkpoint(c, testing::random_weights(c, 6), 8);
    std::uint32_t magic = 0;
    std::int32_t version = 0, group = 0;
    std::memcpy(&magic, bytes.data(), 4);
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&group, bytes.data() + 37, 4);
    CHECK(magic == 0x616B3432);
    CHECK(version == 2);
    CHECK(static_cast<int>(bytes[36]) == 1);
    CHECK(group == 8);
    for (std::size_t i = 41; i < 256; ++i) REQUIRE(bytes[i] == std::byte{0});
    CHECK(is_quantized_checkpoint(bytes));
    CHECK_FALSE(is_quantized_checkpoint(write_fp32_checkpoint(c, testing::random_weights(c, 6))));
}

TEST_CASE("quantized checkpoint roundtrip is bit-exact") {
    const ModelConfig c = testing::tiny_config();
    for (bool shared : {true, false}) {
        const auto q = quantize_weights(testing::random_weights(c, 7, 0.5f, shared), c, 8).weights;
        const auto bytes = write_quantized_checkpoint(c, q);
        CHECK(bytes.size() == quantized_checkpoint_size(c, 8, shared));
        const auto loaded = load_quantized_checkpoint(bytes);
        CHECK(loaded.config == c);
        CHECK(loaded.weights.group_size == 8);
        CHECK(loaded.weights.shared_classifier == shared);
        CHECK(same_tensor(loaded.weights.token_embedding, q.token_embedding));
        CHECK(same_tensor(loaded.weights.layers[1].w2, q.layers[1].w2));
        CHECK(same_bits(loaded.weights.layers[0].rms_ffn, q.layers[0].rms_ffn));
        if (!shared) CHECK(same_tensor(loaded.weights.classifier, q.classifier));
        CHECK(write_quantized_checkpoint(loaded.config, loaded.weights) == bytes);
    }
}

TEST_CASE("shared classifier stores no separate tensor") {
    const ModelConfig c = testing::tiny_config();
    const std::size_t shared = quantized_checkpoint_size(c, 8, true);
    const std::size_t unshared = quantized_checkpoint_size(c, 8, false);
    CHECK(unshared - shared == tensor_bytes(32 * 8, 8));
}

TEST_CASE("110M quantized checkpoint size") {
    const ModelConfig c = ModelConfig::stories110m();
    const std::size_t dim = 768, hid = 2048, layers = 12, vocab = 32000;
    const std::size_t norms = (2 * layers + 1) * dim * 4;
    const std::size_t per_layer = 4 * tensor_bytes(dim * dim, 64) + 3 * tensor_bytes(dim * hid, 64);
    CHECK(quantized_checkpoint_size(c, 64, true) == 256 + norms + tensor_bytes(vocab * dim, 64) + layers * per_layer);
}

TEST_CASE("quantized checkpoint rejects corrupt files") {
    const ModelConfig c = testing::tiny_config();
    const auto good = write_quantized_checkpoint(c, testing::random_weights(c, 8), 8);

    auto bad = good;
    put<std::uint32_t>(bad, 0, 0x12345678);
    CHECK_THROWS_AS(load_quantized_checkpoint(bad), FormatError);

    bad = good;
    put<std::int32_t>(bad, 4, 1);
    CHECK_THROWS_AS(load_quantized_checkpoint(bad), FormatError);

    bad = good;
    bad[36] = std::byte{7};
    CHECK_THROWS_AS(load_quantized_checkpoint(bad), FormatError);

    CHECK_THROWS_AS(load_quantized_checkpoint(std::span(good).first(good.size() - 1)), FormatError);
    CHECK_THROWS_AS(load_quantized_checkpoint(std::span(good).first(100)), FormatError);

    // A -128 code can never come out of the quantizer.
    bad = good;
    bad[256 + (2 * 2 + 1) * 8 * 4] = std::byte{0x80};
    CHECK_THROWS_AS(load_quantized_checkpoint(bad), FormatError);
}

TEST_CASE("quantize, write, load, dequantize stays within half a scale") {
    const ModelConfig c = testing::tiny_config();
    const auto w = testing::random_weights(c, 9);
    const auto loaded = load_quantized_checkpoint(write_quantized_checkpoint(c, w, 8));
    const auto& t = loaded.weights.layers[0].w1;
    const auto deq = dequantize_tensor(t);
    for (std::size_t i = 0; i < deq.size(); ++i) {
        REQUIRE(std::fabs(double(deq[i]) - w.layers[0].w1[i]) <= 0.5 * t.scales[i / 8] * (1 + 1e-6));
    }
}

TEST_CASE("file helpers") {
    testing::TempDir dir;
    const std::vector<std::byte> data = {std::byte{1}, std::byte{2}, std::byte{255}};
    write_file(dir / "x.bin", data);
    CHECK(read_file(dir / "x.bin") == data);
    CHECK_THROWS_AS(read_file(dir / "missing.bin"), IoError);
    CHECK_THROWS_AS(write_file(dir / "no" / "such" / "dir.bin", data), IoError);
}

TEST_CASE("110M fp32 header") {
    std::vector<std::byte> header(28);
    const std::int32_t fields[] = {768, 2048, 12, 12, 12, 32000, 1024};
    std::memcpy(header.data(), fields, sizeof(fields));
    const auto h = read_fp32_header(header);
    CHECK(h.config == ModelConfig::stories110m());
    CHECK(h.shared_classifier);
    // Header alone is a truncated checkpoint.
    CHECK_THROWS_AS(load_fp32_checkpoint(header), FormatError);

    const std::size_t dim = 768, hid = 2048, layers = 12, vocab = 32000;
    const std::size_t floats = vocab * dim + layers * (2 * dim + 4 * dim * dim + 3 * dim * hid) + dim;
    CHECK(fp32_checkpoint_size(h.config, true, false) == 28 + floats * 4);
    CHECK(fp32_checkpoint_size(h.config, true, true) == 28 + (floats + 1024 * 64) * 4);

    put<std::int32_t>(header, 0, 0);
    CHECK_THROWS_AS(read_fp32_header(header), FormatError);
}
