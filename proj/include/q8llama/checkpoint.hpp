#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "q8llama/model.hpp"

namespace q8llama {

// Quantized checkpoint ("version 2") layout, all integers little-endian:
//   uint32 magic 0x616B3432, int32 version = 2,
//   int32 dim, hidden_dim, n_layers, n_heads, n_kv_heads, vocab_size, seq_len,
//   uint8 shared_classifier, int32 group_size, zero padding up to byte 256;
//   fp32 rms_att (every layer), rms_ffn (every layer), rms_final;
//   then per tensor: int8 codes followed by fp32 scales, in the order
//   token_embedding, wq x layers, wk, wv, wo, w1, w2, w3, [classifier].
inline constexpr std::uint32_t kQuantMagic = 0x616B3432;
inline constexpr std::int32_t kQuantVersion = 2;
inline constexpr std::size_t kQuantHeaderBytes = 256;

// Legacy fp32 checkpoint layout: seven int32 config fields (a negative
// vocab_size flags an unshared classifier), then fp32 token_embedding,
// rms_att, wq, wk, wv, wo, rms_ffn, w1, w2, w3 (each for all layers),
// rms_final, optionally the precomputed RoPE cos/sin tables
// (2 x seq_len x head_dim / 2 floats, ignored on load), then the classifier
// when unshared.

struct Fp32Checkpoint {
    ModelConfig config;
    Fp32Weights weights;
};

struct QuantizedCheckpoint {
    ModelConfig config;
    TransformerWeights weights;
};

struct Fp32Header {
    ModelConfig config;
    bool shared_classifier = true;
};

// Parses and validates the seven header fields only.
Fp32Header read_fp32_header(std::span<const std::byte> bytes);
std::size_t fp32_checkpoint_size(const ModelConfig& config, bool shared_classifier, bool with_rope_tables);

Fp32Checkpoint load_fp32_checkpoint(std::span<const std::byte> bytes);
// Writes the legacy layout including the RoPE tables, so the file is also
// readable by the reference C runner.
std::vector<std::byte> write_fp32_checkpoint(const ModelConfig& config, const Fp32Weights& weights);

std::vector<std::byte> write_quantized_checkpoint(const ModelConfig& config, const TransformerWeights& weights);
// Convenience: quantizes `weights` with `group_size` and serializes the result.
std::vector<std::byte> write_quantized_checkpoint(const ModelConfig& config, const Fp32Weights& weights,
                                                  int group_size);
QuantizedCheckpoint load_quantized_checkpoint(std::span<const std::byte> bytes);

// Exact file size of a quantized checkpoint for this config.
std::size_t quantized_checkpoint_size(const ModelConfig& config, int group_size, bool shared_classifier);

bool is_quantized_checkpoint(std::span<const std::byte> bytes);

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace q8llama
