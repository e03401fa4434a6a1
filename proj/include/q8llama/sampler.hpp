#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace q8llama {

struct SamplerConfig {
    float temperature = 1.0f;  // 0 selects greedy argmax
    float top_p = 1.0f;        // nucleus mass in (0, 1]; 1 disables truncation
    std::uint64_t rng_seed = 0;

    // Throws ConfigError on a negative/non-finite temperature or top_p outside (0, 1].
    void validate() const;
};

// xorshift64* generator, identical to the one in llama2.c so that seeded runs
// reproduce across implementations:
//   s ^= s >> 12; s ^= s << 25; s ^= s >> 27; u32 = (s * 0x2545F4914F6CDD1D) >> 32
//   f32 = (u32 >> 8) / 2^24
// A zero seed would lock the state at zero, so it is replaced by kZeroSeedState.
class Rng {
public:
    static constexpr std::uint64_t kZeroSeedState = 0x9E3779B97F4A7C15ull;

    explicit Rng(std::uint64_t seed) : state_(seed == 0 ? kZeroSeedState : seed) {}

    std::uint32_t next_u32();
    // Uniform in [0, 1).
    float next_f32();
    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Index of the largest value; the lowest index wins ties.
int argmax(std::span<const float> values);

// Inverse-CDF draw from `probs` with coin in [0, 1). Falls back to the last
// index if rounding leaves the cumulative sum short of the coin.
int sample_multinomial(std::span<const float> probs, float coin);

// Nucleus draw: sorts by descending probability (lower id first on ties), keeps
// the shortest prefix whose mass reaches top_p and draws coin * mass from it.
int sample_top_p(std::span<const float> probs, float top_p, float coin);

// Full sampling pipeline on a logits vector with an externally supplied coin.
// `logits` is overwritten with the (tempered) probabilities.
int sample_with_coin(std::span<float> logits, const SamplerConfig& config, float coin);

class Sampler {
public:
    explicit Sampler(const SamplerConfig& config);

    // Consumes one coin from the generator unless temperature is 0.
    int sample(std::span<float> logits);

    const SamplerConfig& config() const { return config_; }

private:
    SamplerConfig config_;
    Rng rng_;
};

}  // namespace q8llama
