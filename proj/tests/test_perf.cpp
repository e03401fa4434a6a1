#include <cmath>
#include <fstream>

#include "doctest.h"
#include "q8llama/errors.hpp"
#include "q8llama/perf.hpp"
#include "test_support.hpp"

using namespace q8llama;

namespace {

double rel_err(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

}  // namespace

TEST_CASE("built-in table") {
    const auto& t = CycleTable::builtin();
    CHECK(t.size() == 50);
    CHECK(t.clock_period_ns() == 4.0);
    CHECK(t.at("forward").avg == 4377403);
    CHECK(t.at("forward").best == 4160107);
    CHECK(t.at("forward").worst == 4892635);
    CHECK(t.at("matmul_768_768_s").avg == 20977);
    CHECK(t.at("matmul_768_32000_s").avg == 864311);
    CHECK(t.find("no_such_row") == nullptr);
    CHECK_THROWS_AS(t.at("no_such_row"), ModelError);
    for (const auto& r : t.rows()) {
        CHECK(r.best <= r.avg);
        CHECK(r.avg <= r.worst);
    }
}

TEST_CASE("printed absolute times agree with cycles at 4 ns") {
    const auto& t = CycleTable::builtin();
    const auto checks = verify_printed_times(t);
    CHECK(checks.size() == 150);
    for (const auto& c : checks) {
        INFO(c.row, " cycles ", c.cycles, " printed ", c.printed.str());
        CHECK(c.ok);
    }
    // 864,311 cycles -> 3.457 ms
    CHECK(std::fabs(t.cycles_to_ms(864311.0) - 3.457) <= 0.0005);
    CHECK(PrintedTime::parse("3.084 us").to_ns() == doctest::Approx(3084.0));
    CHECK(PrintedTime::parse("92.000 ns").decimals == 3);
    CHECK(PrintedTime::parse("17.510 ms").str() == "17.510 ms");
}

TEST_CASE("a wrong clock period is caught by the printed times") {
    auto rows = CycleTable::builtin().rows();
    const CycleTable fast(rows, 5.0);
    std::size_t failing = 0;
    for (const auto& c : verify_printed_times(fast)) failing += c.ok ? 0 : 1;
    CHECK(failing > 100);
}

TEST_CASE("table-driven forward latency") {
    const auto& t = CycleTable::builtin();
    const double ms = table_forward_latency_ms(t);
    CHECK(ms == doctest::Approx(17.509612).epsilon(1e-12));
    CHECK(round_to(ms, 3) == 17.510);
    CHECK(table_forward_latency_ms(t, Column::Best) == doctest::Approx(16.640428));
    CHECK(table_forward_latency_ms(t, Column::Worst) == doctest::Approx(19.57054));
    CHECK(std::fabs(throughput_toks_per_s(round_to(ms, 2)) - 57.11) <= 0.01);
}

TEST_CASE("parse accepts whitespace or commas and comments") {
    const auto t = CycleTable::parse(
        "# synthesized kernel\n"
        "clock_period_ns 5\n"
        "matmul_64_8_s, 40, 41, 42\n"
        "\n"
        "forward 100 150 200  # whole step\n");
    CHECK(t.size() == 2);
    CHECK(t.clock_period_ns() == 5.0);
    CHECK(t.at("matmul_64_8_s").worst == 42);
    CHECK(t.cycles_to_ms(t.at("forward").avg) == doctest::Approx(150 * 5e-6));

    const auto round_trip = CycleTable::parse(CycleTable::builtin().serialize());
    CHECK(round_trip.size() == 50);
    CHECK(round_trip.at("forward").avg == 4377403);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(CycleTable::parse("matmul_64_8_s 1 1 1\n"), FormatError);
    CHECK_THROWS_AS(CycleTable::parse("forward 3 2 1\n"), FormatError);
    CHECK_THROWS_AS(CycleTable::parse("forward 1 2 3\nforward 1 2 3\n"), FormatError);
    CHECK_THROWS_AS(CycleTable::parse("forward 1 2\n"), FormatError);
    CHECK_THROWS_AS(CycleTable::parse("forward 1 two 3\n"), FormatError);
    CHECK_THROWS_AS(CycleTable::parse("clock_period_ns 0\nforward 1 2 3\n"), FormatError);
}

TEST_CASE("load reads a table file") {
    testing::TempDir dir;
    const auto path = dir / "table.txt";
    std::ofstream(path) << CycleTable::builtin().serialize();
    CHECK(CycleTable::load(path).size() == 50);
    CHECK_THROWS_AS(CycleTable::load(dir / "missing.txt"), IoError);
}

TEST_CASE("calibrated matmul model reproduces every matmul row within 5%") {
    const auto& t = CycleTable::builtin();
    const auto samples = matmul_samples(t);
    REQUIRE(samples.size() == 4);
    const auto m = calibrate_matmul_model(t);
    CHECK(m.params.burst_width_values_per_cycle == 64);
    CHECK(m.params.initiation_interval == 2);
    for (const auto& s : samples) {
        const double pred = analytic_matmul_cycles(s.d_in, s.d_out, m);
        INFO(s.d_in, "x", s.d_out, " predicted ", pred, " table ", s.cycles);
        CHECK(rel_err(pred, static_cast<double>(s.cycles)) <= 0.05);
    }
}

TEST_CASE("calibration recovers a synthetic model exactly") {
    std::vector<MatmulSample> samples;
    for (auto [din, dout] : {std::pair{128, 16}, {256, 64}, {512, 32}, {1024, 128}}) {
        samples.push_back({din, dout, static_cast<std::int64_t>(dout * (3 * din / 64 + 7) + 100)});
    }
    const auto m = calibrate_matmul_model(samples, 64);
    CHECK(m.params.initiation_interval == 3);
    CHECK(m.per_row_overhead == doctest::Approx(7.0));
    CHECK(m.fixed_overhead == doctest::Approx(100.0));
    CHECK(m.params.pipeline_depth == 10);
}

TEST_CASE("matmul model is linear in rows and rejects unaligned d_in") {
    const auto m = calibrate_matmul_model(CycleTable::builtin());
    const double one = analytic_matmul_cycles(768, 1000, m) - m.fixed_overhead;
    const double two = analytic_matmul_cycles(768, 2000, m) - m.fixed_overhead;
    CHECK(two == doctest::Approx(2 * one));
    CHECK_THROWS_AS(analytic_matmul_cycles(100, 8, m), ShapeError);
    CHECK_THROWS_AS(calibrate_matmul_model(std::vector<MatmulSample>{{64, 8, 10}}), ModelError);
}

TEST_CASE("composed forward cycles bracket the table") {
    const auto& t = CycleTable::builtin();
    const ModelConfig c = ModelConfig::stories110m();
    const int m = calibrate_attention_multiplicity(c, t);
    CHECK(m == c.n_heads);

    const double lo = static_cast<double>(compose_forward_cycles(c, t, 0));
    const double hi = static_cast<double>(compose_forward_cycles(c, t, c.seq_len - 1));
    CHECK(rel_err(lo, 4160107) <= 0.10);
    CHECK(rel_err(hi, 4892635) <= 0.10);

    std::int64_t prev = 0;
    for (int pos = 0; pos < c.seq_len; ++pos) {
        const auto cyc = compose_forward_cycles(c, t, pos, m);
        REQUIRE(cyc >= prev);
        prev = cyc;
    }

    const double mean_ms = compose_mean_latency_ms(c, t, 256, m);
    CHECK(rel_err(mean_ms, table_forward_latency_ms(t)) <= 0.10);
}

TEST_CASE("composition breakdown adds up") {
    const auto& t = CycleTable::builtin();
    const ModelConfig c = ModelConfig::stories110m();
    const auto b = compose_forward_breakdown(c, t, 100, 3);
    const double total = b.embedding + c.n_layers * (b.layer_fixed + 3 * b.attention_invocation) + b.final_stage;
    CHECK(b.total == std::llround(total));
    CHECK(b.embedding == 771);
    CHECK(b.final_stage == 7822 + 971 + 864311);

    CHECK_THROWS_AS(compose_forward_cycles(c, t, c.seq_len, 1), CapacityError);
    CHECK_THROWS_AS(compose_forward_cycles(c, t, -1, 1), CapacityError);

    // Only the forward row: every module lookup fails.
    const auto bare = CycleTable::parse("forward 1 2 3\n");
    CHECK_THROWS_AS(compose_forward_cycles(c, bare, 0, 1), ModelError);
}

TEST_CASE("throughput") {
    CHECK(throughput_toks_per_s(17.51) == doctest::Approx(57.11).epsilon(1e-4));
    CHECK(std::fabs(throughput_toks_per_s(9.34) - 107.07) <= 0.005);
    CHECK(rel_err(throughput_toks_per_s(9.34), 107.00) <= 0.001);
    CHECK(std::fabs(throughput_toks_per_s(43.08) - 23.21) <= 0.005);
    CHECK_THROWS_AS(throughput_toks_per_s(0.0), DomainError);
}

TEST_CASE("energy per token") {
    CHECK(energy_per_token_mwh({"FPGA", 9.0}, 17.51) == doctest::Approx(9.0 * 0.01751 / 3.6));
    CHECK(std::fabs(energy_per_token_mwh({"FPGA", 9.0}, 17.51) - 0.0438) <= 0.00005);
    CHECK(round_to(energy_per_token_mwh({"FPGA", 9.0}, 17.51), 2) == 0.04);
    CHECK(round_to(energy_per_token_mwh({"CPU", 42.5}, 43.08), 2) == 0.51);
    CHECK(round_to(energy_per_token_mwh({"GPU", 126.9}, 9.34), 2) == 0.33);
    CHECK_THROWS_AS(energy_per_token_mwh({"X", 0.0}, 1.0), DomainError);
}

TEST_CASE("property: energy is bilinear in power and latency") {
    for (double w : {1.0, 9.0, 42.5, 126.9}) {
        for (double ms : {0.5, 9.34, 17.51, 50.94}) {
            const double e = energy_per_token_mwh({"d", w}, ms);
            CHECK(energy_per_token_mwh({"d", 2 * w}, ms) == doctest::Approx(2 * e));
            CHECK(energy_per_token_mwh({"d", w}, 2 * ms) == doctest::Approx(2 * e));
        }
    }
}

TEST_CASE("round_to") {
    CHECK(round_to(2.675, 2) == 2.68);
    CHECK(round_to(-0.125, 2) == -0.13);
    CHECK(round_to(0.5086, 2) == 0.51);
    CHECK(round_to(17.509612, 3) == 17.510);
}

TEST_CASE("efficiency report at 256 tokens") {
    const auto runs = published_runs(256);
    const auto rep = efficiency_report(runs);
    CHECK(rep.reference == "FPGA");
    CHECK(rep.device("FPGA").energy_mwh_2dp == 0.04);
    CHECK(rep.device("GPU").energy_mwh_2dp == 0.33);
    CHECK(rep.device("CPU").energy_mwh_2dp == 0.51);
    CHECK(rep.device("FPGA").toks_per_s_2dp == 57.11);
    CHECK(rep.against("CPU").energy_reduction_2dp == 12.75);
    CHECK(rep.against("GPU").energy_reduction_2dp == 8.25);
    CHECK(rep.against("CPU").speedup_2dp == 2.46);
    CHECK(rep.against("GPU").speedup_2dp == 0.53);
    // Unrounded inputs give a smaller CPU ratio than the two-decimal table values.
    CHECK(rep.against("CPU").energy_reduction == doctest::Approx(0.50858 / 0.043775).epsilon(1e-3));
    CHECK_THROWS_AS(rep.device("TPU"), DomainError);
}

TEST_CASE("efficiency report at 1024 tokens") {
    const auto rep = efficiency_report(published_runs(1024));
    CHECK(rep.device("CPU").energy_mwh_2dp == 0.60);
    CHECK(rep.device("GPU").energy_mwh_2dp == 0.34);
    CHECK(rep.against("CPU").energy_reduction_2dp == 15.0);
    CHECK(rep.against("GPU").energy_reduction_2dp == 8.5);
    CHECK_THROWS_AS(published_runs(512), ConfigError);
}

TEST_CASE("report serialization") {
    const auto rep = efficiency_report(published_runs(256));
    const auto kv = rep.to_key_values();
    auto find = [&](const std::string& k) {
        for (const auto& [key, v] : kv)
            if (key == k) return v;
        FAIL("missing key " << k);
        return 0.0;
    };
    CHECK(find("FPGA.energy_mwh_2dp") == 0.04);
    CHECK(find("vs_CPU.energy_reduction_2dp") == 12.75);
    CHECK(rep.to_text().find("12.75") != std::string::npos);

    const std::vector<DeviceRun> one = {{{"FPGA", 9.0}, 17.51}};
    CHECK_THROWS_AS(efficiency_report(one), DomainError);
    CHECK_THROWS_AS(efficiency_report(published_runs(256), "TPU"), DomainError);
}
