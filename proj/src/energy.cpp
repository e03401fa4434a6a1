#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "q8llama/errors.hpp"
#include "q8llama/perf.hpp"

namespace q8llama {

double throughput_toks_per_s(double latency_ms) {
    if (!(latency_ms > 0.0)) {
        throw DomainError("latency must be positive");
    }
    return 1000.0 / latency_ms;
}

double energy_per_token_mwh(const EnergyProfile& profile, double latency_ms) {
    if (!(profile.avg_power_watts > 0.0) || !(latency_ms > 0.0)) {
        throw DomainError("power and latency must be positive");
    }
    const double joules = profile.avg_power_watts * (latency_ms / 1000.0);
    return joules / 3.6;
}

double round_to(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    // Scale up by a few ulps so decimal ties stored just below the midpoint (2.675 is
    // 2.67499999...) still round away from zero.
    const double scaled = value * scale;
    return std::round(scaled * (1.0 + 4 * std::numeric_limits<double>::epsilon())) / scale;
}

std::vector<DeviceRun> published_runs(int tokens) {
    // Per-token latency (ms) and average power (W).
    switch (tokens) {
        case 256:
            return {{{"CPU", 42.5}, 43.08}, {{"GPU", 126.9}, 9.34}, {{"FPGA", 9.0}, 17.51}};
        case 1024:
            return {{{"CPU", 42.5}, 50.94}, {{"GPU", 130.6}, 9.32}, {{"FPGA", 9.0}, 17.51}};
        default:
            throw ConfigError("published benchmarks exist for 256 and 1024 tokens, not " + std::to_string(tokens));
    }
}

const DeviceFigures& EfficiencyReport::device(std::string_view name) const {
    const auto it = std::find_if(devices.begin(), devices.end(), [&](const auto& d) { return d.device == name; });
    if (it == devices.end()) {
        throw DomainError("report has no device '" + std::string(name) + "'");
    }
    return *it;
}

const DeviceComparison& EfficiencyReport::against(std::string_view baseline) const {
    const auto it =
        std::find_if(comparisons.begin(), comparisons.end(), [&](const auto& c) { return c.baseline == baseline; });
    if (it == comparisons.end()) {
        throw DomainError("report has no comparison against '" + std::string(baseline) + "'");
    }
    return *it;
}

EfficiencyReport efficiency_report(std::span<const DeviceRun> runs, std::string_view reference) {
    if (runs.size() < 2) {
        throw DomainError("efficiency report needs at least two devices");
    }
    EfficiencyReport rep;
    rep.reference = std::string(reference);
    for (const auto& r : runs) {
        DeviceFigures f;
        f.device = r.profile.device_name;
        f.power_watts = r.profile.avg_power_watts;
        f.latency_ms = r.latency_ms;
        f.toks_per_s = throughput_toks_per_s(r.latency_ms);
        f.energy_mwh = energy_per_token_mwh(r.profile, r.latency_ms);
        f.toks_per_s_2dp = round_to(f.toks_per_s, 2);
        f.energy_mwh_2dp = round_to(f.energy_mwh, 2);
        rep.devices.push_back(std::move(f));
    }
    const DeviceFigures ref = rep.device(reference);
    for (const auto& d : rep.devices) {
        if (d.device == ref.device) {
            continue;
        }
        DeviceComparison c;
        c.baseline = d.device;
        c.energy_reduction = d.energy_mwh / ref.energy_mwh;
        c.speedup = ref.toks_per_s / d.toks_per_s;
        c.energy_reduction_2dp = ref.energy_mwh_2dp > 0.0 ? round_to(d.energy_mwh_2dp / ref.energy_mwh_2dp, 2) : 0.0;
        c.speedup_2dp = round_to(ref.toks_per_s_2dp / d.toks_per_s_2dp, 2);
        rep.comparisons.push_back(std::move(c));
    }
    return rep;
}

std::string EfficiencyReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "device  power(W)  latency(ms)  toks/s   mWh/tok\n";
    for (const auto& d : devices) {
        os << d.device << std::string(d.device.size() < 8 ? 8 - d.device.size() : 1, ' ') << d.power_watts
           << "      " << d.latency_ms << "        " << d.toks_per_s;
        os.precision(4);
        os << "   " << d.energy_mwh << '\n';
        os.precision(2);
    }
    for (const auto& c : comparisons) {
        os << reference << " vs " << c.baseline << ": " << c.energy_reduction_2dp << "x less energy per token ("
           << c.energy_reduction << "x unrounded), " << c.speedup_2dp << "x speed (" << c.speedup << "x unrounded)\n";
    }
    return os.str();
}

std::vector<std::pair<std::string, double>> EfficiencyReport::to_key_values() const {
    std::vector<std::pair<std::string, double>> kv;
    for (const auto& d : devices) {
        kv.emplace_back(d.device + ".power_watts", d.power_watts);
        kv.emplace_back(d.device + ".latency_ms", d.latency_ms);
        kv.emplace_back(d.device + ".toks_per_s", d.toks_per_s);
        kv.emplace_back(d.device + ".energy_mwh", d.energy_mwh);
        kv.emplace_back(d.device + ".toks_per_s_2dp", d.toks_per_s_2dp);
        kv.emplace_back(d.device + ".energy_mwh_2dp", d.energy_mwh_2dp);
    }
    for (const auto& c : comparisons) {
        const std::string p = "vs_" + c.baseline + ".";
        kv.emplace_back(p + "energy_reduction", c.energy_reduction);
        kv.emplace_back(p + "speedup", c.speedup);
        kv.emplace_back(p + "energy_reduction_2dp", c.energy_reduction_2dp);
        kv.emplace_back(p + "speedup_2dp", c.speedup_2dp);
    }
    return kv;
}

}  // namespace q8llama
