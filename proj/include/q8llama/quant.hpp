#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace q8llama {

inline constexpr int kDefaultGroupSize = 64;
inline constexpr int kQuantMax = 127;

// Symmetric grouped int8 tensor (the "Q8_0" layout): values are int8 codes in
// [-127, 127] and each run of group_size consecutive values shares one fp32
// scale. Element i dequantizes to values[i] * scales[i / group_size].
struct QuantizedTensor {
    std::vector<std::int8_t> values;
    std::vector<float> scales;
    int group_size = kDefaultGroupSize;

    QuantizedTensor() = default;
    // Zero-filled tensor of n elements; throws ShapeError unless group_size divides n.
    QuantizedTensor(std::size_t n, int group_size);

    std::size_t size() const { return values.size(); }
    std::size_t num_groups() const { return scales.size(); }
};

// Reconstruction error of a quantize_tensor call, measured against the input.
struct QuantStats {
    float max_abs_error = 0.0f;
    float rmse = 0.0f;
    std::size_t count = 0;
    // Largest group scale seen; every element error is bounded by half of its own group's scale.
    float max_scale = 0.0f;

    // Folds another tensor's statistics into this one.
    void merge(const QuantStats& other);
};

// Half-away-from-zero rounding, clamped to [-127, 127].
std::int8_t round_to_code(double v);

// Quantizes one group in place into `codes` (same length as `group`) and
// returns its scale max|w| / 127. A group of zeros gets scale 0 and zero codes.
// Throws QuantizationError on NaN or infinity.
float quantize_group(std::span<const float> group, std::span<std::int8_t> codes);

struct QuantizedGroup {
    std::vector<std::int8_t> codes;
    float scale = 0.0f;
};
QuantizedGroup quantize_group(std::span<const float> group);

// Quantizes `w` into an existing tensor of matching size without allocating.
// This is the path used for activations inside the forward pass.
void quantize_into(std::span<const float> w, QuantizedTensor& out);

struct QuantizeResult {
    QuantizedTensor tensor;
    QuantStats stats;
};
QuantizeResult quantize_tensor(std::span<const float> w, int group_size = kDefaultGroupSize);

std::vector<float> dequantize_tensor(const QuantizedTensor& t);
void dequantize_into(const QuantizedTensor& t, std::span<float> out);
// Dequantizes `count` elements starting at `offset`; offset must sit on a group boundary.
void dequantize_range(const QuantizedTensor& t, std::size_t offset, std::span<float> out);

// out[r] = sum over groups of (exact int32 dot of x codes and row r codes)
//          * x_scale(group) * w_scale(r, group)
// W is row-major [d_out x d_in], grouped per row. The int32 accumulator holds
// at most 127 * 127 * group_size per group, which stays exact for any
// group_size below 133000.
void qmatmul_into(std::span<float> out, const QuantizedTensor& x, const QuantizedTensor& w,
                  int d_in, int d_out);
std::vector<float> qmatmul(const QuantizedTensor& x, const QuantizedTensor& w, int d_in, int d_out);

}  // namespace q8llama
