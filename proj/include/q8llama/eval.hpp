#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "q8llama/model.hpp"

namespace q8llama {

class Tokenizer;

struct PerplexityResult {
    double perplexity = 0.0;
    double mean_nll = 0.0;       // natural log
    std::size_t predicted = 0;   // number of scored positions
    std::size_t windows = 0;
};

// Produces next-token logits after feeding `token` at position `pos`. A call
// with pos == 0 starts a new, independent window.
using LogitsFn = std::function<std::span<const float>(int token, int pos)>;

// Perplexity = exp(mean negative log-likelihood of each true next token).
//
// A leading BOS in `tokens` is dropped; the remaining stream is cut into
// non-overlapping windows of seq_len - 1 tokens, each evaluated from a fresh
// context that starts with BOS, so every stream token is scored exactly once.
// Throws DomainError when nothing is left to predict or seq_len < 2.
PerplexityResult perplexity(std::span<const int> tokens, int seq_len, const LogitsFn& step);

PerplexityResult perplexity(std::span<const int> tokens, const TransformerWeights& weights,
                            const ModelConfig& config);

// Negative log of softmax(logits)[target], computed in double.
double token_nll(std::span<const float> logits, int target);

// Little-endian int32 token stream (pre-tokenized evaluation input).
std::vector<int> parse_token_stream(std::span<const std::byte> bytes);

}  // namespace q8llama
