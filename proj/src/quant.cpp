#include "q8llama/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "q8llama/errors.hpp"

namespace q8llama {

namespace {

void check_group_size(std::size_t n, int group_size) {
    if (group_size < 1) {
        throw ShapeError("group size must be positive, got " + std::to_string(group_size));
    }
    if (n % static_cast<std::size_t>(group_size) != 0) {
        throw ShapeError("length " + std::to_string(n) + " is not a multiple of group size " +
                         std::to_string(group_size));
    }
}

}  // namespace

QuantizedTensor::QuantizedTensor(std::size_t n, int group_size_) : group_size(group_size_) {
    check_group_size(n, group_size_);
    values.assign(n, 0);
    scales.assign(n / static_cast<std::size_t>(group_size_), 0.0f);
}

void QuantStats::merge(const QuantStats& other) {
    if (other.count == 0) {
        return;
    }
    const double total = static_cast<double>(count) + static_cast<double>(other.count);
    const double sq = static_cast<double>(rmse) * rmse * static_cast<double>(count) +
                      static_cast<double>(other.rmse) * other.rmse * static_cast<double>(other.count);
    rmse = static_cast<float>(std::sqrt(sq / total));
    max_abs_error = std::max(max_abs_error, other.max_abs_error);
    max_scale = std::max(max_scale, other.max_scale);
    count += other.count;
}

std::int8_t round_to_code(double v) {
    // std::round rounds halfway cases away from zero.
    const double r = std::clamp(std::round(v), -static_cast<double>(kQuantMax),
                                static_cast<double>(kQuantMax));
    return static_cast<std::int8_t>(r);
}

float quantize_group(std::span<const float> group, std::span<std::int8_t> codes) {
    if (group.size() != codes.size()) {
        throw ShapeError("quantize_group: output length differs from input length");
    }
    if (group.empty()) {
        throw ShapeError("quantize_group: empty group");
    }
    float wmax = 0.0f;
    for (float w : group) {
        if (!std::isfinite(w)) {
            throw QuantizationError("cannot quantize non-finite value");
        }
        wmax = std::max(wmax, std::fabs(w));
    }
    const float scale = wmax / static_cast<float>(kQuantMax);
    if (scale == 0.0f) {
        std::fill(codes.begin(), codes.end(), std::int8_t{0});
        return 0.0f;
    }
    // Divide by the stored fp32 scale (in double) so that |code * scale - w| <= scale / 2
    // holds for the scale that is actually kept.
    const double inv = 1.0 / static_cast<double>(scale);
    for (std::size_t i = 0; i < group.size(); ++i) {
        codes[i] = round_to_code(static_cast<double>(group[i]) * inv);
    }
    return scale;
}

QuantizedGroup quantize_group(std::span<const float> group) {
    QuantizedGroup g;
    g.codes.resize(group.size());
    g.scale = quantize_group(group, g.codes);
    return g;
}

void quantize_into(std::span<const float> w, QuantizedTensor& out) {
    if (w.size() != out.values.size()) {
        throw ShapeError("quantize_into: size mismatch (" + std::to_string(w.size()) + " vs " +
                         std::to_string(out.values.size()) + ")");
    }
    check_group_size(w.size(), out.group_size);
    const auto gs = static_cast<std::size_t>(out.group_size);
    const std::span<std::int8_t> codes(out.values);
    for (std::size_t g = 0; g < out.scales.size(); ++g) {
        out.scales[g] = quantize_group(w.subspan(g * gs, gs), codes.subspan(g * gs, gs));
    }
}

QuantizeResult quantize_tensor(std::span<const float> w, int group_size) {
    QuantizeResult result{QuantizedTensor(w.size(), group_size), {}};
    quantize_into(w, result.tensor);

    const auto gs = static_cast<std::size_t>(group_size);
    double sq = 0.0;
    double max_err = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double deq = static_cast<double>(result.tensor.values[i]) * result.tensor.scales[i / gs];
        const double err = std::fabs(deq - static_cast<double>(w[i]));
        max_err = std::max(max_err, err);
        sq += err * err;
    }
    QuantStats& stats = result.stats;
    stats.count = w.size();
    stats.max_abs_error = static_cast<float>(max_err);
    stats.rmse = w.empty() ? 0.0f : static_cast<float>(std::sqrt(sq / static_cast<double>(w.size())));
    for (float s : result.tensor.scales) {
        stats.max_scale = std::max(stats.max_scale, s);
    }
    return result;
}

void dequantize_range(const QuantizedTensor& t, std::size_t offset, std::span<float> out) {
    const auto gs = static_cast<std::size_t>(t.group_size);
    if (offset % gs != 0 || offset + out.size() > t.values.size()) {
        throw ShapeError("dequantize_range: range not aligned to groups or out of bounds");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t j = offset + i;
        out[i] = static_cast<float>(t.values[j]) * t.scales[j / gs];
    }
}

void dequantize_into(const QuantizedTensor& t, std::span<float> out) {
    if (out.size() != t.values.size()) {
        throw ShapeError("dequantize_into: size mismatch");
    }
    dequantize_range(t, 0, out);
}

std::vector<float> dequantize_tensor(const QuantizedTensor& t) {
    std::vector<float> out(t.values.size());
    dequantize_into(t, out);
    return out;
}

void qmatmul_into(std::span<float> out, const QuantizedTensor& x, const QuantizedTensor& w,
                  int d_in, int d_out) {
    if (d_in < 1 || d_out < 1) {
        throw ShapeError("qmatmul: dimensions must be positive");
    }
    if (x.group_size != w.group_size) {
        throw ShapeError("qmatmul: activation group size " + std::to_string(x.group_size) +
                         " differs from weight group size " + std::to_string(w.group_size));
    }
    const int gs = x.group_size;
    if (gs < 1 || d_in % gs != 0) {
        throw ShapeError("qmatmul: d_in " + std::to_string(d_in) + " not divisible by group size " +
                         std::to_string(gs));
    }
    const auto n_in = static_cast<std::size_t>(d_in);
    const auto n_out = static_cast<std::size_t>(d_out);
    if (x.values.size() != n_in || w.values.size() != n_in * n_out || out.size() != n_out) {
        throw ShapeError("qmatmul: operand sizes do not match d_in=" + std::to_string(d_in) +
                         ", d_out=" + std::to_string(d_out));
    }
    const int groups_per_row = d_in / gs;
    if (x.scales.size() != static_cast<std::size_t>(groups_per_row) ||
        w.scales.size() != n_out * static_cast<std::size_t>(groups_per_row)) {
        throw ShapeError("qmatmul: scale count does not match group layout");
    }

    for (std::size_t r = 0; r < n_out; ++r) {
        const std::int8_t* wrow = w.values.data() + r * n_in;
        const float* wscale = w.scales.data() + r * static_cast<std::size_t>(groups_per_row);
        float acc = 0.0f;
        for (int g = 0; g < groups_per_row; ++g) {
            const std::size_t base = static_cast<std::size_t>(g) * static_cast<std::size_t>(gs);
            std::int32_t ival = 0;
            for (int k = 0; k < gs; ++k) {
                ival += static_cast<std::int32_t>(x.values[base + k]) *
                        static_cast<std::int32_t>(wrow[base + k]);
            }
            acc += static_cast<float>(ival) * x.scales[g] * wscale[g];
        }
        out[r] = acc;
    }
}

std::vector<float> qmatmul(const QuantizedTensor& x, const QuantizedTensor& w, int d_in, int d_out) {
    std::vector<float> out(static_cast<std::size_t>(std::max(d_out, 0)));
    qmatmul_into(out, x, w, d_in, d_out);
    return out;
}

}  // namespace q8llama
