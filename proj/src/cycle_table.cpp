#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "q8llama/errors.hpp"
#include "q8llama/perf.hpp"

namespace q8llama {

namespace {

struct BuiltinRow {
    const char* name;
    std::int64_t interval_min, interval_max, best, avg, worst;
    const char* best_time;
    const char* avg_time;
    const char* worst_time;
};

// Synthesis report of the 110M kernel (start interval, cycles, absolute time).
constexpr BuiltinRow kBuiltinRows[] = {
    {"forward_Pipeline_1", 771, 771, 771, 771, 771, "3.084 us", "3.084 us", "3.084 us"},
    {"rmsnorm_768_Pipeline_1", 770, 770, 770, 770, 770, "3.080 us", "3.080 us", "3.080 us"},
    {"rmsnorm_768_Pipeline_2", 771, 771, 771, 771, 771, "3.084 us", "3.084 us", "3.084 us"},
    {"rmsnorm_768_Pipeline_sum_of_squares", 5413, 5413, 5413, 5413, 5413, "21.652 us", "21.652 us", "21.652 us"},
    {"rmsnorm_768_Pipeline_norm_and_scale", 23, 23, 23, 23, 23, "92.000 ns", "92.000 ns", "92.000 ns"},
    {"rmsnorm_768_Pipeline_5", 770, 770, 770, 770, 770, "3.080 us", "3.080 us", "3.080 us"},
    {"rmsnorm_768_s", 7822, 7822, 7822, 7822, 7822, "31.288 us", "31.288 us", "31.288 us"},
    {"round", 1, 1, 1, 1, 1, "4.000 ns", "4.000 ns", "4.000 ns"},
    {"p_hls_fptosi_float_i8", 1, 1, 1, 1, 1, "4.000 ns", "4.000 ns", "4.000 ns"},
    {"quantize_768_Pipeline_main_loop", 198, 198, 198, 198, 198, "0.792 us", "0.792 us", "0.792 us"},
    {"quantize_768_Pipeline_2", 770, 770, 770, 770, 770, "3.080 us", "3.080 us", "3.080 us"},
    {"quantize_768_Pipeline_3", 14, 14, 14, 14, 14, "56.000 ns", "56.000 ns", "56.000 ns"},
    {"quantize_768_s", 971, 971, 971, 971, 971, "3.884 us", "3.884 us", "3.884 us"},
    {"matmul_768_768_Pipeline_x_buff", 50, 50, 50, 50, 50, "0.200 us", "0.200 us", "0.200 us"},
    {"matmul_768_768_Pipeline_xs_buff", 5, 5, 5, 5, 5, "20.000 ns", "20.000 ns", "20.000 ns"},
    {"matmul_768_768_Pipeline_VITIS_LOOP_225_1", 20900, 20900, 20900, 20900, 20900, "83.600 us", "83.600 us", "83.600 us"},
    {"matmul_768_768_s", 20977, 20977, 20977, 20977, 20977, "83.908 us", "83.908 us", "83.908 us"},
    {"pow_generic_float_s", 1, 1, 15, 15, 15, "60.000 ns", "60.000 ns", "60.000 ns"},
    {"sin_or_cos_float_s", 1, 1, 18, 18, 18, "72.000 ns", "72.000 ns", "72.000 ns"},
    {"forward_Pipeline_rotation1", 119, 119, 119, 119, 119, "0.476 us", "0.476 us", "0.476 us"},
    {"forward_Pipeline_3", 839, 839, 839, 839, 839, "3.356 us", "3.356 us", "3.356 us"},
    {"forward_Pipeline_4", 839, 839, 839, 839, 839, "3.356 us", "3.356 us", "3.356 us"},
    {"forward_Pipeline_iterate", 530, 1554, 530, 1042, 1554, "2.120 us", "4.168 us", "6.216 us"},
    {"forward_Pipeline_max", 2, 261, 2, 133, 261, "8.000 ns", "0.532 us", "1.044 us"},
    {"forward_Pipeline_exp", 24, 56, 24, 40, 56, "96.000 ns", "0.160 us", "0.224 us"},
    {"forward_Pipeline_sum", 10, 1546, 10, 778, 1546, "40.000 ns", "3.112 us", "6.184 us"},
    {"forward_Pipeline_norm", 9, 25, 9, 17, 25, "36.000 ns", "68.000 ns", "0.100 us"},
    {"forward_Pipeline_10", 66, 66, 66, 66, 66, "0.264 us", "0.264 us", "0.264 us"},
    {"forward_Pipeline_acc", 89, 1625, 89, 857, 1625, "0.356 us", "3.428 us", "6.500 us"},
    {"forward_Pipeline_residual", 61, 61, 61, 61, 61, "0.244 us", "0.244 us", "0.244 us"},
    {"matmul_768_2048_Pipeline_x_buff", 50, 50, 50, 50, 50, "0.200 us", "0.200 us", "0.200 us"},
    {"matmul_768_2048_Pipeline_xs_buff", 5, 5, 5, 5, 5, "20.000 ns", "20.000 ns", "20.000 ns"},
    {"matmul_768_2048_Pipeline_VITIS_LOOP_225_1", 55460, 55460, 55460, 55460, 55460, "0.222 ms", "0.222 ms", "0.222 ms"},
    {"matmul_768_2048_s", 55537, 55537, 55537, 55537, 55537, "0.222 ms", "0.222 ms", "0.222 ms"},
    {"forward_Pipeline_swi_glu", 552, 552, 552, 552, 552, "2.208 us", "2.208 us", "2.208 us"},
    {"forward_Pipeline_14", 2050, 2050, 2050, 2050, 2050, "8.200 us", "8.200 us", "8.200 us"},
    {"quantize_2048_Pipeline_main_loop", 221, 221, 221, 221, 221, "0.884 us", "0.884 us", "0.884 us"},
    {"quantize_2048_Pipeline_2", 2050, 2050, 2050, 2050, 2050, "8.200 us", "8.200 us", "8.200 us"},
    {"quantize_2048_Pipeline_3", 34, 34, 34, 34, 34, "0.136 us", "0.136 us", "0.136 us"},
    {"quantize_2048_s", 2274, 2274, 2274, 2274, 2274, "9.096 us", "9.096 us", "9.096 us"},
    {"matmul_2048_768_Pipeline_x_buff", 130, 130, 130, 130, 130, "0.520 us", "0.520 us", "0.520 us"},
    {"matmul_2048_768_Pipeline_xs_buff", 10, 10, 10, 10, 10, "40.000 ns", "40.000 ns", "40.000 ns"},
    {"matmul_2048_768_Pipeline_VITIS_LOOP_225_1", 52526, 52526, 52526, 52526, 52526, "0.210 ms", "0.210 ms", "0.210 ms"},
    {"matmul_2048_768_s", 52659, 52659, 52659, 52659, 52659, "0.211 ms", "0.211 ms", "0.211 ms"},
    {"forward_Pipeline_residual2", 58, 58, 58, 58, 58, "0.232 us", "0.232 us", "0.232 us"},
    {"matmul_768_32000_Pipeline_x_buff", 50, 50, 50, 50, 50, "0.200 us", "0.200 us", "0.200 us"},
    {"matmul_768_32000_Pipeline_xs_buff", 5, 5, 5, 5, 5, "20.000 ns", "20.000 ns", "20.000 ns"},
    {"matmul_768_32000_Pipeline_VITIS_LOOP_225_1", 864190, 864190, 864190, 864190, 864190, "3.457 ms", "3.457 ms", "3.457 ms"},
    {"matmul_768_32000_s", 864311, 864311, 864311, 864311, 864311, "3.457 ms", "3.457 ms", "3.457 ms"},
    {"forward", 4160108, 4892636, 4160107, 4377403, 4892635, "16.640 ms", "17.510 ms", "19.571 ms"},
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::int64_t parse_int(const std::string& s, std::size_t line) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError("cycle table line " + std::to_string(line) + ": '" + s + "' is not an integer");
    }
    return v;
}

}  // namespace

PrintedTime PrintedTime::parse(std::string_view text) {
    const std::string t = trim(text);
    const auto space = t.find(' ');
    if (space == std::string::npos) {
        throw FormatError("printed time '" + t + "' lacks a unit");
    }
    PrintedTime p;
    const std::string number = t.substr(0, space);
    p.unit = trim(t.substr(space + 1));
    if (p.unit != "ns" && p.unit != "us" && p.unit != "ms") {
        throw FormatError("printed time '" + t + "' has unknown unit");
    }
    try {
        p.value = std::stod(number);
    } catch (const std::exception&) {
        throw FormatError("printed time '" + t + "' is not a number");
    }
    const auto dot = number.find('.');
    p.decimals = dot == std::string::npos ? 0 : static_cast<int>(number.size() - dot - 1);
    return p;
}

double PrintedTime::to_ns() const {
    if (unit == "ms") return value * 1e6;
    if (unit == "us") return value * 1e3;
    return value;
}

std::string PrintedTime::str() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(decimals);
    os << value << ' ' << unit;
    return os.str();
}

std::int64_t CycleRow::cycles(Column c) const {
    switch (c) {
        case Column::Best: return best;
        case Column::Avg: return avg;
        case Column::Worst: return worst;
    }
    return avg;
}

CycleTable::CycleTable(std::vector<CycleRow> rows, double clock_period_ns)
    : rows_(std::move(rows)), clock_period_ns_(clock_period_ns) {
    if (!(clock_period_ns_ > 0.0) || !std::isfinite(clock_period_ns_)) {
        throw FormatError("cycle table: clock period must be positive");
    }
    std::unordered_set<std::string> seen;
    for (const auto& r : rows_) {
        if (!seen.insert(r.name).second) {
            throw FormatError("cycle table: duplicate module '" + r.name + "'");
        }
        if (r.best < 0 || r.best > r.avg || r.avg > r.worst) {
            throw FormatError("cycle table: module '" + r.name + "' violates 0 <= best <= avg <= worst");
        }
    }
    if (find("forward") == nullptr) {
        throw FormatError("cycle table: missing 'forward' row");
    }
}

const CycleTable& CycleTable::builtin() {
    static const CycleTable table = [] {
        std::vector<CycleRow> rows;
        for (const auto& b : kBuiltinRows) {
            CycleRow r;
            r.name = b.name;
            r.interval_min = b.interval_min;
            r.interval_max = b.interval_max;
            r.best = b.best;
            r.avg = b.avg;
            r.worst = b.worst;
            r.printed = std::array<PrintedTime, 3>{PrintedTime::parse(b.best_time), PrintedTime::parse(b.avg_time),
                                                   PrintedTime::parse(b.worst_time)};
            rows.push_back(std::move(r));
        }
        return CycleTable(std::move(rows), kClockPeriodNs);
    }();
    return table;
}

CycleTable CycleTable::parse(std::string_view text) {
    std::vector<CycleRow> rows;
    double clock = kClockPeriodNs;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        std::vector<std::string> f;
        for (std::string tok; fields >> tok;) {
            f.push_back(tok);
        }
        if (f.empty()) {
            continue;
        }
        if (f[0] == "clock_period_ns") {
            if (f.size() != 2) {
                throw FormatError("cycle table line " + std::to_string(lineno) + ": expected 'clock_period_ns <value>'");
            }
            try {
                clock = std::stod(f[1]);
            } catch (const std::exception&) {
                throw FormatError("cycle table line " + std::to_string(lineno) + ": bad clock period");
            }
            continue;
        }
        if (f.size() != 4) {
            throw FormatError("cycle table line " + std::to_string(lineno) + ": expected 'name best avg worst'");
        }
        CycleRow r;
        r.name = f[0];
        r.best = parse_int(f[1], lineno);
        r.avg = parse_int(f[2], lineno);
        r.worst = parse_int(f[3], lineno);
        r.interval_min = r.best;
        r.interval_max = r.worst;
        rows.push_back(std::move(r));
    }
    return CycleTable(std::move(rows), clock);
}

CycleTable CycleTable::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open cycle table " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

std::string CycleTable::serialize() const {
    std::ostringstream os;
    os << "# name best avg worst\n";
    os << "clock_period_ns " << clock_period_ns_ << '\n';
    for (const auto& r : rows_) {
        os << r.name << ' ' << r.best << ' ' << r.avg << ' ' << r.worst << '\n';
    }
    return os.str();
}

const CycleRow* CycleTable::find(std::string_view name) const {
    const auto it = std::find_if(rows_.begin(), rows_.end(), [&](const CycleRow& r) { return r.name == name; });
    return it == rows_.end() ? nullptr : &*it;
}

const CycleRow& CycleTable::at(std::string_view name) const {
    const CycleRow* r = find(name);
    if (r == nullptr) {
        throw ModelError("cycle table has no module '" + std::string(name) + "'");
    }
    return *r;
}

std::vector<PrintedTimeCheck> verify_printed_times(const CycleTable& table) {
    std::vector<PrintedTimeCheck> checks;
    constexpr Column columns[] = {Column::Best, Column::Avg, Column::Worst};
    for (const auto& r : table.rows()) {
        if (!r.printed) {
            continue;
        }
        for (std::size_t i = 0; i < 3; ++i) {
            PrintedTimeCheck c;
            c.row = r.name;
            c.column = columns[i];
            c.cycles = r.cycles(columns[i]);
            c.computed_ns = static_cast<double>(c.cycles) * table.clock_period_ns();
            c.printed = (*r.printed)[i];
            const double unit_ns = PrintedTime{1.0, c.printed.unit, 0}.to_ns();
            const double half_ulp_ns = 0.5 * std::pow(10.0, -c.printed.decimals) * unit_ns;
            c.ok = std::fabs(c.computed_ns - c.printed.to_ns()) <= half_ulp_ns * (1.0 + 1e-9);
            checks.push_back(std::move(c));
        }
    }
    return checks;
}

double table_forward_latency_ms(const CycleTable& table, Column column) {
    return table.cycles_to_ms(static_cast<double>(table.at("forward").cycles(column)));
}

}  // namespace q8llama
