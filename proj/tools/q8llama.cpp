#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "q8llama/checkpoint.hpp"
#include "q8llama/errors.hpp"
#include "q8llama/eval.hpp"
#include "q8llama/perf.hpp"
#include "q8llama/sampler.hpp"
#include "q8llama/tokenizer.hpp"

using namespace q8llama;
using nlohmann::ordered_json;

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

// Generated text may hold partial UTF-8 sequences; those bytes become U+FFFD.
void emit(const ordered_json& doc) {
    std::cout << doc.dump(2, ' ', false, ordered_json::error_handler_t::replace) << '\n';
}

struct LoadedModel {
    ModelConfig config;
    TransformerWeights weights;
    bool quantized_at_load = false;
};

// v2 files load as-is; fp32 checkpoints are quantized with `group_size`.
LoadedModel load_model(const std::string& path, int group_size) {
    const auto bytes = read_file(path);
    LoadedModel m;
    if (is_quantized_checkpoint(bytes)) {
        auto ck = load_quantized_checkpoint(bytes);
        m.config = ck.config;
        m.weights = std::move(ck.weights);
    } else {
        const auto ck = load_fp32_checkpoint(bytes);
        m.config = ck.config;
        m.weights = quantize_weights(ck.weights, ck.config, group_size).weights;
        m.quantized_at_load = true;
    }
    return m;
}

Tokenizer load_tokenizer(const std::string& path, int vocab_size) {
    return Tokenizer::load(read_file(path), vocab_size);
}

struct QuantizeArgs {
    std::string in, out;
    int group_size = kDefaultGroupSize;
    bool json = false;
};

void run_quantize(const QuantizeArgs& a) {
    const auto bytes = read_file(a.in);
    if (is_quantized_checkpoint(bytes)) {
        throw FormatError(a.in + " is already a quantized checkpoint");
    }
    const auto ck = load_fp32_checkpoint(bytes);
    const auto q = quantize_weights(ck.weights, ck.config, a.group_size);
    write_file(a.out, write_quantized_checkpoint(ck.config, q.weights));

    const QuantStats& s = q.stats;
    if (a.json) {
        emit({{"output", a.out},
              {"group_size", a.group_size},
              {"elements", s.count},
              {"max_abs_error", s.max_abs_error},
              {"rmse", s.rmse},
              {"max_scale", s.max_scale},
              {"within_bound", s.max_abs_error <= s.max_scale / 2}});
        return;
    }
    std::cout << "wrote " << a.out << " (group size " << a.group_size << ", " << s.count << " weights)\n"
              << "max_abs_error " << s.max_abs_error << "\n"
              << "rmse          " << s.rmse << "\n"
              << "max_scale     " << s.max_scale << "\n";
}

struct GenerateArgs {
    std::string model, tokenizer, prompt;
    int steps = 256;
    float temperature = 1.0f;
    float top_p = 1.0f;
    std::optional<std::uint64_t> seed;
    int group_size = kDefaultGroupSize;
    bool json = false;
};

void run_generate(const GenerateArgs& a) {
    const LoadedModel m = load_model(a.model, a.group_size);
    const Tokenizer tok = load_tokenizer(a.tokenizer, m.config.vocab_size);
    SamplerConfig sc{a.temperature, a.top_p, a.seed ? *a.seed : static_cast<std::uint64_t>(std::time(nullptr))};
    Sampler sampler(sc);
    if (a.steps < 1) {
        throw ConfigError("--steps must be positive");
    }
    const int steps = std::min(a.steps, m.config.seq_len);

    const std::vector<int> prompt = tok.encode(a.prompt, true, false);
    if (static_cast<int>(prompt.size()) > steps) {
        throw CapacityError("prompt of " + std::to_string(prompt.size()) + " tokens does not fit in " +
                            std::to_string(steps) + " steps");
    }
    RunState state(m.config, m.weights.group_size);
    std::vector<float> logits(static_cast<std::size_t>(m.config.vocab_size));

    using clock = std::chrono::steady_clock;
    clock::time_point start;
    std::string text;
    std::vector<int> generated = {prompt[0]};
    int token = prompt[0];
    int pos = 0;
    while (pos < steps) {
        const auto out = forward(token, pos, m.weights, state, m.config);
        if (pos == 0) {
            start = clock::now();  // first step is warm-up
        }
        int next;
        if (pos + 1 < static_cast<int>(prompt.size())) {
            next = prompt[static_cast<std::size_t>(pos) + 1];
        } else {
            std::copy(out.begin(), out.end(), logits.begin());
            next = sampler.sample(logits);
        }
        ++pos;
        if (next == kBosToken) {
            break;
        }
        const std::string piece = tok.decode(token, next);
        text += piece;
        if (!a.json) {
            std::cout << piece << std::flush;
        }
        generated.push_back(next);
        token = next;
    }
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    const double toks_per_s = pos > 1 && secs > 0 ? (pos - 1) / secs : 0.0;

    if (a.json) {
        emit({{"text", text},
              {"tokens", generated},
              {"steps", pos},
              {"seed", sc.rng_seed},
              {"toks_per_s", toks_per_s}});
        return;
    }
    std::cout << '\n';
    std::cerr << "achieved tok/s: " << fixed(toks_per_s, 2) << " (" << pos << " steps, seed " << sc.rng_seed
              << ")\n";
}

struct PerplexityArgs {
    std::string model, tokenizer, text;
    bool pretokenized = false;
    int group_size = kDefaultGroupSize;
    bool json = false;
};

void run_perplexity(const PerplexityArgs& a) {
    const LoadedModel m = load_model(a.model, a.group_size);
    const Tokenizer tok = load_tokenizer(a.tokenizer, m.config.vocab_size);
    const auto bytes = read_file(a.text);
    std::vector<int> tokens;
    if (a.pretokenized) {
        tokens = parse_token_stream(bytes);
        for (int t : tokens) {
            if (t < 0 || t >= m.config.vocab_size) {
                throw RangeError("token id " + std::to_string(t) + " outside vocabulary");
            }
        }
    } else {
        tokens = tok.encode(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), true, false);
    }
    const auto r = perplexity(tokens, m.weights, m.config);
    if (a.json) {
        emit({{"perplexity", r.perplexity},
              {"mean_nll", r.mean_nll},
              {"predicted", r.predicted},
              {"windows", r.windows}});
        return;
    }
    std::cout << "perplexity " << fixed(r.perplexity, 4) << "\n"
              << "mean_nll   " << fixed(r.mean_nll, 6) << "\n"
              << "predicted  " << r.predicted << " tokens in " << r.windows << " window(s)\n";
}

struct EstimateArgs {
    std::string table = "builtin";
    int tokens = 256;
    std::string mode = "table";
    double power_fpga = 9.0;
    std::optional<double> power_cpu, power_gpu, latency_cpu, latency_gpu;
    bool json = false;
};

void run_estimate(const EstimateArgs& a) {
    const CycleTable table = a.table == "builtin" ? CycleTable::builtin() : CycleTable::load(a.table);
    const ModelConfig config = ModelConfig::stories110m();
    auto runs = published_runs(a.tokens);

    double latency_ms = 0.0;
    double cycles = 0.0;
    int multiplicity = 0;
    if (a.mode == "table") {
        latency_ms = table_forward_latency_ms(table);
        cycles = static_cast<double>(table.at("forward").avg);
    } else {
        multiplicity = calibrate_attention_multiplicity(config, table);
        latency_ms = compose_mean_latency_ms(config, table, a.tokens, multiplicity);
        cycles = latency_ms * 1e6 / table.clock_period_ns();
    }

    for (auto& r : runs) {
        if (r.profile.device_name == "FPGA") {
            r.profile.avg_power_watts = a.power_fpga;
            r.latency_ms = latency_ms;
        } else if (r.profile.device_name == "CPU") {
            if (a.power_cpu) r.profile.avg_power_watts = *a.power_cpu;
            if (a.latency_cpu) r.latency_ms = *a.latency_cpu;
        } else if (r.profile.device_name == "GPU") {
            if (a.power_gpu) r.profile.avg_power_watts = *a.power_gpu;
            if (a.latency_gpu) r.latency_ms = *a.latency_gpu;
        }
    }
    const EfficiencyReport rep = efficiency_report(runs, "FPGA");
    const DeviceFigures& fpga = rep.device("FPGA");

    if (a.json) {
        ordered_json doc = {{"mode", a.mode},
                            {"tokens", a.tokens},
                            {"clock_period_ns", table.clock_period_ns()},
                            {"forward_cycles", cycles},
                            {"latency_ms", latency_ms},
                            {"toks_per_s", fpga.toks_per_s},
                            {"energy_mwh", fpga.energy_mwh}};
        if (multiplicity > 0) {
            doc["attention_multiplicity"] = multiplicity;
        }
        ordered_json report = ordered_json::object();
        for (const auto& [k, v] : rep.to_key_values()) {
            report[k] = v;
        }
        doc["report"] = std::move(report);
        emit(doc);
        return;
    }
    std::cout << "mode            " << a.mode << " (" << a.tokens << " tokens)\n"
              << "clock_period_ns " << table.clock_period_ns() << "\n"
              << "forward_cycles  " << fixed(cycles, 0) << "\n";
    if (multiplicity > 0) {
        std::cout << "attention_mult  " << multiplicity << "\n";
    }
    std::cout << "latency_ms      " << fixed(latency_ms, 3) << "\n"
              << "toks_per_s      " << fixed(fpga.toks_per_s, 2) << "\n"
              << "energy_mwh      " << fixed(fpga.energy_mwh, 4) << "\n\n"
              << rep.to_text();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grouped int8 Llama 2 inference and accelerator performance model"};
    app.require_subcommand(1);

    QuantizeArgs qa;
    auto* quantize = app.add_subcommand("quantize", "Quantize an fp32 checkpoint to the v2 format");
    quantize->add_option("in", qa.in, "fp32 checkpoint")->required();
    quantize->add_option("out", qa.out, "output path")->required();
    quantize->add_option("--group-size", qa.group_size, "values per scale")->capture_default_str();
    quantize->add_flag("--json", qa.json, "machine-readable output");

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "Sample text from a model");
    generate->add_option("model", ga.model, "v2 or fp32 checkpoint")->required();
    generate->add_option("tokenizer", ga.tokenizer, "tokenizer.bin")->required();
    generate->add_option("--prompt", ga.prompt, "prompt text");
    generate->add_option("--steps", ga.steps, "positions to run, capped at seq_len")->capture_default_str();
    generate->add_option("--temperature", ga.temperature)->capture_default_str();
    generate->add_option("--top-p", ga.top_p)->capture_default_str();
    generate->add_option("--seed", ga.seed, "RNG seed (default: time)");
    generate->add_option("--group-size", ga.group_size, "used when quantizing an fp32 checkpoint")
        ->capture_default_str();
    generate->add_flag("--json", ga.json, "machine-readable output");

    PerplexityArgs pa;
    auto* ppl = app.add_subcommand("perplexity", "Perplexity of a model on a text file");
    ppl->add_option("model", pa.model, "v2 or fp32 checkpoint")->required();
    ppl->add_option("tokenizer", pa.tokenizer, "tokenizer.bin")->required();
    ppl->add_option("text", pa.text, "evaluation text")->required();
    ppl->add_flag("--pretokenized", pa.pretokenized, "text is a little-endian int32 token stream");
    ppl->add_option("--group-size", pa.group_size, "used when quantizing an fp32 checkpoint")
        ->capture_default_str();
    ppl->add_flag("--json", pa.json, "machine-readable output");

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "Latency, throughput and energy of the accelerator");
    estimate->add_option("--table", ea.table, "builtin or a cycle table file")->capture_default_str();
    estimate->add_option("--tokens", ea.tokens, "benchmark length")
        ->check(CLI::IsMember({256, 1024}))
        ->capture_default_str();
    estimate->add_option("--mode", ea.mode, "table or compose")
        ->check(CLI::IsMember({"table", "compose"}))
        ->capture_default_str();
    estimate->add_option("--power-fpga", ea.power_fpga, "watts")->capture_default_str();
    estimate->add_option("--power-cpu", ea.power_cpu, "watts (default: published)");
    estimate->add_option("--power-gpu", ea.power_gpu, "watts (default: published)");
    estimate->add_option("--latency-cpu", ea.latency_cpu, "ms per token (default: published)");
    estimate->add_option("--latency-gpu", ea.latency_gpu, "ms per token (default: published)");
    estimate->add_flag("--json", ea.json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*quantize) run_quantize(qa);
        if (*generate) run_generate(ga);
        if (*ppl) run_perplexity(pa);
        if (*estimate) run_estimate(ea);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& ch : msg) {
            if (ch == '\n') ch = ' ';
        }
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
