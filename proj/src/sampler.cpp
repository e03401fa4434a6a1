#include "q8llama/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "q8llama/errors.hpp"
#include "q8llama/model.hpp"

namespace q8llama {

void SamplerConfig::validate() const {
    if (!std::isfinite(temperature) || temperature < 0.0f) {
        throw ConfigError("temperature must be finite and >= 0, got " + std::to_string(temperature));
    }
    if (!(top_p > 0.0f && top_p <= 1.0f)) {
        throw ConfigError("top_p must lie in (0, 1], got " + std::to_string(top_p));
    }
}

std::uint32_t Rng::next_u32() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return static_cast<std::uint32_t>((state_ * 0x2545F4914F6CDD1Dull) >> 32);
}

float Rng::next_f32() { return static_cast<float>(next_u32() >> 8) / 16777216.0f; }

int argmax(std::span<const float> values) {
    if (values.empty()) {
        throw DomainError("argmax of an empty vector");
    }
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

int sample_multinomial(std::span<const float> probs, float coin) {
    if (probs.empty()) {
        throw DomainError("sampling from an empty distribution");
    }
    float cdf = 0.0f;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cdf += probs[i];
        if (coin < cdf) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(probs.size()) - 1;
}

int sample_top_p(std::span<const float> probs, float top_p, float coin) {
    if (probs.empty()) {
        throw DomainError("sampling from an empty distribution");
    }
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)]; });

    float mass = 0.0f;
    std::size_t keep = order.size();
    for (std::size_t i = 0; i < order.size(); ++i) {
        mass += probs[static_cast<std::size_t>(order[i])];
        if (mass >= top_p) {
            keep = i + 1;
            break;
        }
    }

    const float r = coin * mass;
    float cdf = 0.0f;
    for (std::size_t i = 0; i < keep; ++i) {
        cdf += probs[static_cast<std::size_t>(order[i])];
        if (r < cdf) {
            return order[i];
        }
    }
    return order[keep - 1];
}

int sample_with_coin(std::span<float> logits, const SamplerConfig& config, float coin) {
    config.validate();
    if (logits.empty()) {
        throw DomainError("sampling from an empty logits vector");
    }
    if (config.temperature == 0.0f) {
        return argmax(logits);
    }
    for (float& l : logits) {
        l /= config.temperature;
    }
    softmax_inplace(logits);
    if (config.top_p >= 1.0f) {
        return sample_multinomial(logits, coin);
    }
    return sample_top_p(logits, config.top_p, coin);
}

Sampler::Sampler(const SamplerConfig& config) : config_(config), rng_(config.rng_seed) { config_.validate(); }

int Sampler::sample(std::span<float> logits) {
    if (config_.temperature == 0.0f) {
        return argmax(logits);
    }
    return sample_with_coin(logits, config_, rng_.next_f32());
}

}  // namespace q8llama
