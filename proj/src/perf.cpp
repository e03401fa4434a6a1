#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "q8llama/errors.hpp"
#include "q8llama/perf.hpp"

namespace q8llama {

namespace {

// Parses "matmul_<in>_<out>_s".
bool parse_matmul_name(std::string_view name, int& d_in, int& d_out) {
    constexpr std::string_view prefix = "matmul_";
    constexpr std::string_view suffix = "_s";
    if (name.size() <= prefix.size() + suffix.size() || name.substr(0, prefix.size()) != prefix ||
        name.substr(name.size() - suffix.size()) != suffix) {
        return false;
    }
    const std::string_view dims = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    const auto sep = dims.find('_');
    if (sep == std::string_view::npos) {
        return false;
    }
    auto to_int = [](std::string_view s, int& out) {
        if (s.empty() || s.size() > 9) return false;
        int v = 0;
        for (char ch : s) {
            if (ch < '0' || ch > '9') return false;
            v = v * 10 + (ch - '0');
        }
        out = v;
        return v > 0;
    };
    return to_int(dims.substr(0, sep), d_in) && to_int(dims.substr(sep + 1), d_out);
}

std::string matmul_name(int d_in, int d_out) {
    return "matmul_" + std::to_string(d_in) + "_" + std::to_string(d_out) + "_s";
}

double fixed_cycles(const CycleTable& t, const std::string& name) {
    return static_cast<double>(t.at(name).avg);
}

// Linear best -> worst interpolation over the context window.
double at_position(const CycleRow& r, int pos, int seq_len) {
    if (seq_len <= 1) {
        return static_cast<double>(r.best);
    }
    const double frac = static_cast<double>(pos) / static_cast<double>(seq_len - 1);
    return static_cast<double>(r.best) + static_cast<double>(r.worst - r.best) * frac;
}

constexpr const char* kAttentionLoops[] = {
    "forward_Pipeline_iterate", "forward_Pipeline_max", "forward_Pipeline_exp",
    "forward_Pipeline_sum",     "forward_Pipeline_norm", "forward_Pipeline_10",
    "forward_Pipeline_acc",
};

}  // namespace

std::vector<MatmulSample> matmul_samples(const CycleTable& table) {
    std::vector<MatmulSample> out;
    for (const auto& r : table.rows()) {
        MatmulSample s;
        if (parse_matmul_name(r.name, s.d_in, s.d_out)) {
            s.cycles = r.avg;
            out.push_back(s);
        }
    }
    return out;
}

MatmulCostModel calibrate_matmul_model(std::span<const MatmulSample> samples, int burst_width, int max_ii) {
    if (burst_width < 1 || max_ii < 1) {
        throw ModelError("matmul calibration: burst width and II bound must be positive");
    }
    if (samples.size() < 2) {
        throw ModelError("matmul calibration needs at least two matmul rows");
    }
    MatmulCostModel best;
    double best_sse = std::numeric_limits<double>::infinity();

    for (int ii = 1; ii <= max_ii; ++ii) {
        // Residual r = cycles - d_out * ii * d_in / bw is fitted as a * d_out + b.
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const auto n = static_cast<double>(samples.size());
        for (const auto& s : samples) {
            const double x = s.d_out;
            const double y = static_cast<double>(s.cycles) -
                             x * ii * static_cast<double>(s.d_in) / static_cast<double>(burst_width);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double denom = n * sxx - sx * sx;
        if (std::fabs(denom) < 1e-9) {
            throw ModelError("matmul calibration needs rows with at least two distinct output sizes");
        }
        const double a = (n * sxy - sx * sy) / denom;
        const double b = (sy - a * sx) / n;

        MatmulCostModel m;
        m.params.burst_width_values_per_cycle = burst_width;
        m.params.initiation_interval = ii;
        m.per_row_overhead = a;
        m.fixed_overhead = b;
        m.params.pipeline_depth = std::max(1, static_cast<int>(std::lround(a + ii)));

        double sse = 0;
        for (const auto& s : samples) {
            const double pred = static_cast<double>(s.d_out) *
                                    (ii * static_cast<double>(s.d_in) / burst_width + a) + b;
            sse += (pred - static_cast<double>(s.cycles)) * (pred - static_cast<double>(s.cycles));
        }
        if (sse < best_sse) {
            best_sse = sse;
            best = m;
        }
    }
    return best;
}

MatmulCostModel calibrate_matmul_model(const CycleTable& table, int burst_width) {
    const auto samples = matmul_samples(table);
    return calibrate_matmul_model(samples, burst_width);
}

double analytic_matmul_cycles(int d_in, int d_out, const MatmulCostModel& model) {
    const int bw = model.params.burst_width_values_per_cycle;
    if (d_in < 1 || d_out < 1 || bw < 1 || d_in % bw != 0) {
        throw ShapeError("analytic matmul: d_in " + std::to_string(d_in) + " must be a positive multiple of burst width " +
                         std::to_string(bw));
    }
    const double words = static_cast<double>(d_in / bw);
    return static_cast<double>(d_out) * (model.params.initiation_interval * words + model.per_row_overhead) +
           model.fixed_overhead;
}

ForwardBreakdown compose_forward_breakdown(const ModelConfig& c, const CycleTable& t, int pos,
                                           int attention_multiplicity) {
    c.validate();
    if (pos < 0 || pos >= c.seq_len) {
        throw CapacityError("compose: position " + std::to_string(pos) + " outside context of " +
                            std::to_string(c.seq_len));
    }
    if (attention_multiplicity < 1) {
        throw ModelError("compose: attention multiplicity must be positive");
    }
    const std::string d = std::to_string(c.dim);
    const std::string h = std::to_string(c.hidden_dim);

    ForwardBreakdown b;
    b.attention_multiplicity = attention_multiplicity;
    b.embedding = fixed_cycles(t, "forward_Pipeline_1");

    const double rmsnorm = fixed_cycles(t, "rmsnorm_" + d + "_s");
    const double quant_dim = fixed_cycles(t, "quantize_" + d + "_s");
    b.layer_fixed = 2 * rmsnorm                                         // attention + ffn pre-norm
                    + 3 * quant_dim                                     // before qkv, wo, w1/w3
                    + fixed_cycles(t, "quantize_" + h + "_s")           // before w2
                    + 2 * fixed_cycles(t, matmul_name(c.dim, c.dim))    // wq, wo
                    + 2 * fixed_cycles(t, matmul_name(c.dim, c.kv_dim()))  // wk, wv
                    + 2 * fixed_cycles(t, matmul_name(c.dim, c.hidden_dim))  // w1, w3
                    + fixed_cycles(t, matmul_name(c.hidden_dim, c.dim))      // w2
                    + fixed_cycles(t, "forward_Pipeline_rotation1") + fixed_cycles(t, "forward_Pipeline_3") +
                    fixed_cycles(t, "forward_Pipeline_4") + fixed_cycles(t, "forward_Pipeline_residual") +
                    fixed_cycles(t, "forward_Pipeline_swi_glu") + fixed_cycles(t, "forward_Pipeline_14") +
                    fixed_cycles(t, "forward_Pipeline_residual2");

    for (const char* loop : kAttentionLoops) {
        b.attention_invocation += at_position(t.at(loop), pos, c.seq_len);
    }

    b.final_stage = rmsnorm + quant_dim + fixed_cycles(t, matmul_name(c.dim, c.vocab_size));

    const double total = b.embedding +
                         static_cast<double>(c.n_layers) *
                             (b.layer_fixed + attention_multiplicity * b.attention_invocation) +
                         b.final_stage;
    b.total = std::llround(total);
    return b;
}

std::int64_t compose_forward_cycles(const ModelConfig& c, const CycleTable& t, int pos, int attention_multiplicity) {
    return compose_forward_breakdown(c, t, pos, attention_multiplicity).total;
}

std::int64_t compose_forward_cycles(const ModelConfig& c, const CycleTable& t, int pos) {
    return compose_forward_cycles(c, t, pos, calibrate_attention_multiplicity(c, t));
}

int calibrate_attention_multiplicity(const ModelConfig& c, const CycleTable& t) {
    const CycleRow& fwd = t.at("forward");
    const double target_best = static_cast<double>(fwd.best);
    const double target_worst = static_cast<double>(fwd.worst);
    int best_m = 1;
    double best_err = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= 4 * c.n_heads; ++m) {
        const double lo = static_cast<double>(compose_forward_cycles(c, t, 0, m));
        const double hi = static_cast<double>(compose_forward_cycles(c, t, c.seq_len - 1, m));
        const double e1 = (lo - target_best) / target_best;
        const double e2 = (hi - target_worst) / target_worst;
        const double err = e1 * e1 + e2 * e2;
        if (err < best_err) {
            best_err = err;
            best_m = m;
        }
    }
    return best_m;
}

double compose_mean_latency_ms(const ModelConfig& c, const CycleTable& t, int tokens, int attention_multiplicity) {
    if (tokens < 1 || tokens > c.seq_len) {
        throw ConfigError("compose: token count " + std::to_string(tokens) + " must lie in [1, " +
                          std::to_string(c.seq_len) + "]");
    }
    double sum = 0.0;
    for (int p = 0; p < tokens; ++p) {
        sum += static_cast<double>(compose_forward_cycles(c, t, p, attention_multiplicity));
    }
    return t.cycles_to_ms(sum / tokens);
}

}  // namespace q8llama
