#include "q8llama/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "byte_io.hpp"
#include "q8llama/errors.hpp"

namespace q8llama {

double token_nll(std::span<const float> logits, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
        throw RangeError("target token " + std::to_string(target) + " outside logits of size " +
                         std::to_string(logits.size()));
    }
    const double max_val = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (float l : logits) {
        sum += std::exp(static_cast<double>(l) - max_val);
    }
    return std::log(sum) - (static_cast<double>(logits[static_cast<std::size_t>(target)]) - max_val);
}

PerplexityResult perplexity(std::span<const int> tokens, int seq_len, const LogitsFn& step) {
    if (seq_len < 2) {
        throw DomainError("perplexity needs a context of at least 2 positions");
    }
    std::span<const int> stream = tokens;
    if (!stream.empty() && stream.front() == kBosToken) {
        stream = stream.subspan(1);
    }
    if (stream.empty()) {
        throw DomainError("perplexity needs at least one token to predict");
    }

    const auto window = static_cast<std::size_t>(seq_len - 1);
    PerplexityResult r;
    double total = 0.0;
    for (std::size_t start = 0; start < stream.size(); start += window) {
        const std::span<const int> chunk = stream.subspan(start, std::min(window, stream.size() - start));
        int prev = kBosToken;
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const std::span<const float> logits = step(prev, static_cast<int>(i));
            total += token_nll(logits, chunk[i]);
            prev = chunk[i];
        }
        r.predicted += chunk.size();
        ++r.windows;
    }
    r.mean_nll = total / static_cast<double>(r.predicted);
    r.perplexity = std::exp(r.mean_nll);
    return r;
}

PerplexityResult perplexity(std::span<const int> tokens, const TransformerWeights& weights,
                            const ModelConfig& config) {
    weights.validate(config);
    // Stale cache rows from an earlier window are never read: attention only
    // looks at positions [0, pos] and those are rewritten first.
    RunState state(config, weights.group_size);
    return perplexity(tokens, config.seq_len,
                      [&](int token, int pos) { return forward(token, pos, weights, state, config); });
}

std::vector<int> parse_token_stream(std::span<const std::byte> bytes) {
    if (bytes.size() % sizeof(std::int32_t) != 0) {
        throw FormatError("token stream length is not a multiple of 4 bytes");
    }
    detail::ByteReader in(bytes);
    std::vector<int> tokens(bytes.size() / sizeof(std::int32_t));
    for (auto& t : tokens) {
        t = in.read<std::int32_t>("token stream");
    }
    return tokens;
}

}  // namespace q8llama
