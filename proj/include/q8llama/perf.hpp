#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "q8llama/model.hpp"

namespace q8llama {

// ---------------------------------------------------------------------------
// Cycle table
//
// Per-module latency of the synthesized accelerator kernel as reported by HLS:
// best/avg/worst cycle counts plus the start interval. All rows share one
// clock domain.

inline constexpr double kClockPeriodNs = 4.0;

enum class Column { Best, Avg, Worst };

// An absolute time exactly as printed in a synthesis report, e.g. "3.084 us".
struct PrintedTime {
    double value = 0.0;
    std::string unit;  // "ns", "us" or "ms"
    int decimals = 0;

    static PrintedTime parse(std::string_view text);
    double to_ns() const;
    std::string str() const;
};

struct CycleRow {
    std::string name;
    std::int64_t interval_min = 0;
    std::int64_t interval_max = 0;
    std::int64_t best = 0;
    std::int64_t avg = 0;
    std::int64_t worst = 0;
    // Published absolute times (best, avg, worst); only the built-in table has them.
    std::optional<std::array<PrintedTime, 3>> printed;

    std::int64_t cycles(Column c) const;
    bool variable() const { return best != worst; }
};

class CycleTable {
public:
    // Throws FormatError on duplicate names, best > avg > worst ordering
    // violations, a non-positive clock period or a missing "forward" row.
    CycleTable(std::vector<CycleRow> rows, double clock_period_ns = kClockPeriodNs);

    // The 50-row synthesis report of the 110M-parameter kernel.
    static const CycleTable& builtin();

    // Text format, one module per line: `name best avg worst`, separated by
    // whitespace and/or commas. Blank lines and `#` comments are skipped and a
    // `clock_period_ns <value>` line overrides the 4 ns default.
    static CycleTable parse(std::string_view text);
    static CycleTable load(const std::filesystem::path& path);
    std::string serialize() const;

    const std::vector<CycleRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    double clock_period_ns() const { return clock_period_ns_; }

    const CycleRow* find(std::string_view name) const;
    // Throws ModelError when the row is absent.
    const CycleRow& at(std::string_view name) const;

    double cycles_to_ms(double cycles) const { return cycles * clock_period_ns_ * 1e-6; }

private:
    std::vector<CycleRow> rows_;
    double clock_period_ns_;
};

struct PrintedTimeCheck {
    std::string row;
    Column column = Column::Avg;
    std::int64_t cycles = 0;
    double computed_ns = 0.0;
    PrintedTime printed;
    bool ok = false;
};

// Compares cycles x clock period against every published absolute time,
// accepting differences up to half a unit in the last printed digit.
std::vector<PrintedTimeCheck> verify_printed_times(const CycleTable& table);

// Forward-pass latency straight from the table's "forward" row.
double table_forward_latency_ms(const CycleTable& table, Column column = Column::Avg);

// ---------------------------------------------------------------------------
// Analytic matrix-vector cost
//
// A row of the weight matrix streams d_in / burst_width wide words through a
// loop pipelined at the initiation interval; rows run back to back:
//   cycles = d_out * (II * d_in / burst_width + per_row_overhead) + fixed_overhead
// per_row_overhead and fixed_overhead are fitted by least squares to the
// table's matmul_<in>_<out>_s rows. The fit also picks the integer II that
// explains the rows best; pipeline_depth reports the implied per-row fill
// latency (per_row_overhead + II, rounded).

struct PipelineParams {
    int burst_width_values_per_cycle = 64;  // 256-bit AXI line of int8
    int pipeline_depth = 1;
    int initiation_interval = 1;
};

struct MatmulCostModel {
    PipelineParams params;
    double per_row_overhead = 0.0;
    double fixed_overhead = 0.0;
};

struct MatmulSample {
    int d_in = 0;
    int d_out = 0;
    std::int64_t cycles = 0;
};

// matmul_<d_in>_<d_out>_s rows of the table.
std::vector<MatmulSample> matmul_samples(const CycleTable& table);

// Least-squares fit over `samples`, searching II in [1, max_ii].
MatmulCostModel calibrate_matmul_model(std::span<const MatmulSample> samples, int burst_width = 64,
                                       int max_ii = 8);
MatmulCostModel calibrate_matmul_model(const CycleTable& table, int burst_width = 64);

// Throws ShapeError unless burst_width divides d_in.
double analytic_matmul_cycles(int d_in, int d_out, const MatmulCostModel& model);

// ---------------------------------------------------------------------------
// Forward-pass composition
//
// Sums the top-level kernel stages of one decoding step:
//   embedding copy
//   + n_layers x (norms, activation quantizers, q/k/v/o and FFN matmuls,
//                 RoPE, cache writes, residuals, SwiGLU,
//                 multiplicity x attention sub-loops at `pos`)
//   + final norm, quantizer and classifier.
// Variable attention loops interpolate linearly from their best cycles at
// pos = 0 to their worst at pos = seq_len - 1.

struct ForwardBreakdown {
    double embedding = 0.0;
    double layer_fixed = 0.0;        // one layer, attention excluded
    double attention_invocation = 0.0;  // one invocation of the attention loops at pos
    int attention_multiplicity = 0;
    double final_stage = 0.0;
    std::int64_t total = 0;
};

ForwardBreakdown compose_forward_breakdown(const ModelConfig& config, const CycleTable& table, int pos,
                                           int attention_multiplicity);
std::int64_t compose_forward_cycles(const ModelConfig& config, const CycleTable& table, int pos,
                                    int attention_multiplicity);
// Uses the calibrated multiplicity.
std::int64_t compose_forward_cycles(const ModelConfig& config, const CycleTable& table, int pos);

// Integer number of attention-loop invocations per layer that best matches the
// table's forward best (pos = 0) and worst (pos = seq_len - 1) rows, searched
// over [1, 4 * n_heads] by summed squared relative error.
int calibrate_attention_multiplicity(const ModelConfig& config, const CycleTable& table);

// Mean composed latency over positions [0, tokens).
double compose_mean_latency_ms(const ModelConfig& config, const CycleTable& table, int tokens,
                               int attention_multiplicity);

// ---------------------------------------------------------------------------
// Throughput and energy

struct EnergyProfile {
    std::string device_name;
    double avg_power_watts = 0.0;
};

double throughput_toks_per_s(double latency_ms);
// watts x seconds per token, converted from joules to milliwatt-hours (/3.6).
double energy_per_token_mwh(const EnergyProfile& profile, double latency_ms);

// Half-away-from-zero rounding to `decimals` places.
double round_to(double value, int decimals);

struct DeviceRun {
    EnergyProfile profile;
    double latency_ms = 0.0;
};

// Published per-token latency and average power of the CPU, GPU and FPGA
// runs for the 256- or 1024-token benchmark. Throws ConfigError otherwise.
std::vector<DeviceRun> published_runs(int tokens);

struct DeviceFigures {
    std::string device;
    double power_watts = 0.0;
    double latency_ms = 0.0;
    double toks_per_s = 0.0;
    double energy_mwh = 0.0;
    // Values at the two-decimal precision used in published tables.
    double toks_per_s_2dp = 0.0;
    double energy_mwh_2dp = 0.0;
};

// How `reference` compares against `baseline`.
struct DeviceComparison {
    std::string baseline;
    double energy_reduction = 0.0;  // baseline energy / reference energy
    double speedup = 0.0;           // reference toks/s / baseline toks/s
    // Same ratios formed from the two-decimal table values, rounded to two decimals.
    double energy_reduction_2dp = 0.0;
    double speedup_2dp = 0.0;
};

struct EfficiencyReport {
    std::string reference;
    std::vector<DeviceFigures> devices;
    std::vector<DeviceComparison> comparisons;

    const DeviceFigures& device(std::string_view name) const;
    const DeviceComparison& against(std::string_view baseline) const;

    std::string to_text() const;
    // Flat, stable key/value pairs (e.g. "FPGA.energy_mwh", "vs_CPU.energy_reduction_2dp").
    std::vector<std::pair<std::string, double>> to_key_values() const;
};

// Throws DomainError with fewer than two devices or an unknown reference.
EfficiencyReport efficiency_report(std::span<const DeviceRun> runs, std::string_view reference = "FPGA");

}  // namespace q8llama
