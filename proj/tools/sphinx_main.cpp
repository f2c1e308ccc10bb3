// sphinx: assemble, diversify, run and analyze SASM programs.

#include "sphinx/analyzer.hpp"
#include "sphinx/assembler.hpp"
#include "sphinx/corpus.hpp"
#include "sphinx/error.hpp"
#include "sphinx/image_file.hpp"
#include "sphinx/maskcipher.hpp"
#include "sphinx/obfuscator.hpp"
#include "sphinx/vm.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace sphinx;

enum Exit : int { kOk = 0, kFailed = 1, kUsage = 2, kTrap = 3, kBadKey = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSecret = 0x5EC2E7D15EA5Eull;
constexpr std::uint64_t kDefaultChallenge = 0xC4A11E46Eull;

std::uint64_t parse_hex(const std::string& text, const char* what)
{
    std::string_view s = text;
    if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw UsageError(fmt::format("{}: '{}' is not a 64-bit hex value", what, text));
    return v;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", path));
    out << j.dump(2) << '\n';
}

std::vector<double> parse_entropies(const std::string& list)
{
    std::vector<double> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        double e = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), e);
        if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size() || !(e >= 0 && e < 1))
            throw UsageError(fmt::format("bad entropy '{}' (need 0 <= e < 1)", item));
        out.push_back(e);
    }
    if (out.empty()) throw UsageError("no entropies given");
    return out;
}

/// Power column of a `cycle,power` CSV.
std::vector<std::uint32_t> read_power_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open '{}'", path));
    std::string line;
    if (!std::getline(in, line) || line != "cycle,power") throw UsageError(fmt::format("{}: expected header cycle,power", path));
    std::vector<std::uint32_t> power;
    for (std::size_t row = 2; std::getline(in, line); ++row) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        std::uint32_t p = 0;
        const char* first = line.data() + (comma == std::string::npos ? line.size() : comma + 1);
        const char* last = line.data() + line.size();
        const auto [ptr, ec] = std::from_chars(first, last, p);
        if (comma == std::string::npos || ec != std::errc{} || ptr != last)
            throw UsageError(fmt::format("{}:{}: malformed row", path, row));
        power.push_back(p);
    }
    return power;
}

void write_trace_csv(const std::string& path, const vm::SideChannelTrace& t)
{
    auto out = fmt::output_file(path);
    out.print("cycle,power\n");
    for (std::size_t i = 0; i < t.power.size(); ++i) out.print("{},{}\n", i + 1, t.power[i]);
}

void write_memtrace_csv(const std::string& path, const vm::SideChannelTrace& t)
{
    auto out = fmt::output_file(path);
    out.print("cycle,kind,addr\n");
    for (const auto& e : t.mem_events) out.print("{},{},0x{:08x}\n", e.cycle, static_cast<char>(e.kind), e.addr);
}

// ---------------------------------------------------------------------------

struct AsmArgs {
    std::string in, out;
};

int cmd_asm(const AsmArgs& a)
{
    const auto image = isa::assemble(isa::parse_assembly(read_text(a.in)));
    image::write_file(a.out, image::make_plain(image));
    return kOk;
}

struct ObfArgs {
    std::string in, out;
    double entropy = 0;
    std::uint64_t seed = 1;
    std::string secret, challenge;
    bool no_data_shuffle = false;
    std::size_t window = 16;
    std::uint32_t max_pad = 4;
};

int cmd_obfuscate(const ObfArgs& a)
{
    obf::ObfuscationParams p;
    p.entropy = a.entropy;
    p.seed = a.seed;
    p.window = a.window;
    p.data_shuffle = !a.no_data_shuffle;
    p.max_pad_words = a.max_pad;
    try {
        obf::validate(p);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const auto secret = a.secret.empty() ? kDefaultSecret : parse_hex(a.secret, "--device-secret");
    const auto challenge = a.challenge.empty() ? kDefaultChallenge : parse_hex(a.challenge, "--challenge");

    const auto built = obf::diversify(isa::parse_assembly(read_text(a.in)), p);
    const auto key = maskcipher::derive_key(secret, challenge);
    image::write_file(a.out, image::make_obfuscated(isa::assemble(built.program), built.mask, key, p.entropy, p.seed));
    std::cout << nlohmann::json(built.stats).dump(2) << '\n';
    return kOk;
}

struct RunArgs {
    std::string image;
    std::uint64_t run_seed = 1;
    bool no_profile_rand = false;
    bool no_shadow = false;
    std::uint32_t noise = 0;
    std::string secret;
    std::string trace, memtrace, profiles;
    std::uint64_t fuel = 100'000'000;
    bool maskless = false;
};

int cmd_run(const RunArgs& a)
{
    const auto file = image::read_file(a.image);
    vm::RunConfig cfg;
    cfg.run_seed = a.run_seed;
    cfg.profile_randomization = !a.no_profile_rand;
    cfg.shadow_decoys = !a.no_shadow;
    cfg.noise_amplitude = a.noise;
    cfg.max_cycles = a.fuel;
    if (!a.profiles.empty()) cfg.profiles = vm::ProfileTable::load(a.profiles);

    if (a.maskless) {
        if (!a.secret.empty()) throw UsageError("--maskless takes no --device-secret");
        cfg.mode = vm::Mode::Baseline;
    } else if (file.obfuscated) {
        if (a.secret.empty()) throw UsageError("obfuscated image needs --device-secret");
        cfg.mode = vm::Mode::Sphinx;
        cfg.device_secret = parse_hex(a.secret, "--device-secret");
    } else {
        if (!a.secret.empty()) throw UsageError("--device-secret given for an unobfuscated image");
        cfg.mode = vm::Mode::Baseline;
    }

    const auto trace = vm::run(file, cfg);
    std::cout << trace.guest_output << std::flush;
    if (!a.trace.empty()) write_trace_csv(a.trace, trace);
    if (!a.memtrace.empty()) write_memtrace_csv(a.memtrace, trace);
    if (trace.completed()) {
        fmt::print(stderr, "exit={} cycles={}\n", trace.guest_exit_code, trace.total_cycles);
        return kOk;
    }
    fmt::print(stderr, "{}: {}\n", vm::status_name(trace.status), trace.trap_reason);
    fmt::print(stderr, "exit={} cycles={}\n", vm::status_name(trace.status), trace.total_cycles);
    return kTrap;
}

struct CompareArgs {
    std::string a, b;
    std::size_t buckets = analyzer::kDefaultBuckets;
};

int cmd_compare(const CompareArgs& a)
{
    const auto ra = analyzer::resample(read_power_csv(a.a), a.buckets);
    const auto rb = analyzer::resample(read_power_csv(a.b), a.buckets);
    fmt::print("r={:.6f} buckets={}\n", analyzer::pearson(ra, rb), a.buckets);
    return kOk;
}

struct SweepArgs {
    std::string in;
    std::string suite;
    std::string entropies = "0,0.1,0.25,0.5";
    std::size_t seeds = 5;
    std::string report;
    std::size_t buckets = analyzer::kDefaultBuckets;
    std::uint64_t base_seed = 2024;
    unsigned threads = 0;
    bool no_profile_rand = false;
    bool no_shadow = false;
    std::uint32_t noise = 0;
    double threshold = 0.8;
};

/// Returns the invariant violations in a report, one line each.
std::vector<std::string> violations(const analyzer::SweepReport& r)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        const auto where = fmt::format("(program={}, entropy={}, seed={:#018x})", r.program, c.entropy, c.build_seeds[0]);
        auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
        if (!c.outputs_equal) out.push_back(fmt::format("output mismatch {}", where));
        if (!in(c.cross_build_r, -1, 1) || !in(c.same_build_cross_run_r, -1, 1) || !in(c.baseline_self_r, -1, 1))
            out.push_back(fmt::format("correlation out of range {}", where));
        if (!in(c.fetch_jaccard, 0, 1) || !in(c.data_jaccard, 0, 1))
            out.push_back(fmt::format("jaccard out of range {}", where));
    }
    return out;
}

int run_sweeps(const SweepArgs& a, const std::vector<std::pair<std::string, std::string>>& programs)
{
    if (a.seeds < 2) throw UsageError("--seeds must be at least 2");
    const auto entropies = parse_entropies(a.entropies);
    analyzer::ExperimentConfig cfg;
    cfg.buckets = a.buckets;
    cfg.profile_randomization = !a.no_profile_rand;
    cfg.shadow_decoys = !a.no_shadow;
    cfg.noise_amplitude = a.noise;

    nlohmann::json doc{{"generated_by", analyzer::kGeneratedBy}, {"reports", nlohmann::json::array()}};
    std::vector<std::string> failures;
    for (const auto& [name, source] : programs) {
        const auto program = isa::parse_assembly(source);
        const auto report = analyzer::sweep(name, program, entropies, a.seeds, a.base_seed, cfg, {}, a.threads);
        for (auto& v : violations(report)) failures.push_back(std::move(v));
        for (const auto& e : report.entropies) {
            const auto& f = e.fields;
            fmt::print("{:<16} e={:<5} overhead={:+.4f} predicted={:+.4f} cross_build_r={:+.4f} fetch_j={:.4f} "
                       "data_j={:.4f} decoys={:.4f} outputs_equal={}\n",
                       name, e.entropy, f.at("cycle_overhead").mean, f.at("predicted_overhead").mean,
                       f.at("cross_build_r").mean, f.at("fetch_jaccard").mean, f.at("data_jaccard").mean,
                       f.at("decoy_fraction").mean, e.outputs_equal);
        }
        doc["reports"].push_back(report);
    }
    if (!a.report.empty()) write_json(a.report, doc);
    for (const auto& f : failures) fmt::print(stderr, "FAILED: {}\n", f);
    return failures.empty() ? kOk : kFailed;
}

int cmd_sweep(const SweepArgs& a)
{
    const auto stem = std::filesystem::path(a.in).stem().string();
    return run_sweeps(a, {{stem, read_text(a.in)}});
}

int cmd_bench(const SweepArgs& a)
{
    std::vector<std::pair<std::string, std::string>> programs;
    for (const auto& c : corpus::cases()) {
        if (a.suite != "all" && a.suite != c.name) continue;
        programs.emplace_back(std::string(c.name), std::string(c.source));
    }
    if (programs.empty()) throw UsageError(fmt::format("unknown suite '{}'", a.suite));
    return run_sweeps(a, programs);
}

int cmd_corpus_list()
{
    for (const auto& c : corpus::cases()) fmt::print("{}\n", c.name);
    return kOk;
}

int cmd_corpus_show(const std::string& name)
{
    const auto c = corpus::find(name);
    if (!c) throw UsageError(fmt::format("no kernel named '{}'", name));
    fmt::print("{}", c->source);
    return kOk;
}

void add_run_knobs(CLI::App* cmd, SweepArgs& a)
{
    cmd->add_option("--entropies", a.entropies, "Comma-separated entropy levels")->capture_default_str();
    cmd->add_option("--seeds", a.seeds, "Build seeds per entropy")->capture_default_str();
    cmd->add_option("--report", a.report, "Write the JSON report here");
    cmd->add_option("--buckets", a.buckets, "Resampling length L")->capture_default_str();
    cmd->add_option("--base-seed", a.base_seed, "Base of the seed schedule")->capture_default_str();
    cmd->add_option("--threads", a.threads, "Worker threads (0 = all cores)")->capture_default_str();
    cmd->add_flag("--no-profile-rand", a.no_profile_rand, "Always use the baseline profile");
    cmd->add_flag("--no-shadow", a.no_shadow, "Charge decoys the discard profile");
    cmd->add_option("--noise", a.noise, "Power noise amplitude");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Instruction-level diversification toolchain and side-channel simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(analyzer::kGeneratedBy));

    AsmArgs asm_args;
    auto* asm_cmd = app.add_subcommand("asm", "Assemble an unobfuscated image");
    asm_cmd->add_option("input", asm_args.in, "SASM source")->required();
    asm_cmd->add_option("output", asm_args.out, "Image file")->required();

    ObfArgs obf_args;
    auto* obf_cmd = app.add_subcommand("obfuscate", "Diversify and write an obfuscated image");
    obf_cmd->add_option("input", obf_args.in, "SASM source")->required();
    obf_cmd->add_option("output", obf_args.out, "Image file")->required();
    obf_cmd->add_option("--entropy", obf_args.entropy, "Expected decoy fraction, 0 <= E < 1")->required();
    obf_cmd->add_option("--seed", obf_args.seed, "Build seed")->capture_default_str();
    obf_cmd->add_option("--device-secret", obf_args.secret, "Device secret (hex)");
    obf_cmd->add_option("--challenge", obf_args.challenge, "Key challenge (hex)");
    obf_cmd->add_flag("--no-data-shuffle", obf_args.no_data_shuffle, "Keep the data layout");
    obf_cmd->add_option("--window", obf_args.window, "Decoy class history window")->capture_default_str();
    obf_cmd->add_option("--max-pad", obf_args.max_pad, "Max padding words between data objects")->capture_default_str();

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Execute an image on the simulator");
    run_cmd->add_option("image", run_args.image, "Image file")->required();
    run_cmd->add_option("--run-seed", run_args.run_seed, "Profile/noise seed")->capture_default_str();
    run_cmd->add_flag("--no-profile-rand", run_args.no_profile_rand, "Always use the baseline profile");
    run_cmd->add_flag("--no-shadow", run_args.no_shadow, "Charge decoys the discard profile");
    run_cmd->add_option("--noise", run_args.noise, "Power noise amplitude");
    run_cmd->add_option("--device-secret", run_args.secret, "Device secret (hex)");
    run_cmd->add_option("--trace", run_args.trace, "Write power trace CSV");
    run_cmd->add_option("--memtrace", run_args.memtrace, "Write memory trace CSV");
    run_cmd->add_option("--fuel", run_args.fuel, "Cycle budget")->capture_default_str();
    run_cmd->add_option("--profiles", run_args.profiles, "Profile table override file");
    run_cmd->add_flag("--maskless", run_args.maskless, "Execute every word as real (no mask)");

    CompareArgs cmp_args;
    auto* cmp_cmd = app.add_subcommand("compare", "Pearson correlation of two power traces");
    cmp_cmd->add_option("trace_a", cmp_args.a)->required();
    cmp_cmd->add_option("trace_b", cmp_args.b)->required();
    cmp_cmd->add_option("--buckets", cmp_args.buckets, "Resampling length L")->capture_default_str();

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "Entropy sweep over one program");
    sweep_cmd->add_option("input", sweep_args.in, "SASM source")->required();
    add_run_knobs(sweep_cmd, sweep_args);

    SweepArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Entropy sweep over the shipped corpus");
    bench_cmd->add_option("--suite", bench_args.suite, "'all' or one kernel name")->required();
    add_run_knobs(bench_cmd, bench_args);

    std::string corpus_name;
    auto* corpus_cmd = app.add_subcommand("corpus", "Inspect the shipped kernels");
    corpus_cmd->require_subcommand(1);
    auto* list_cmd = corpus_cmd->add_subcommand("list", "List kernel names");
    auto* show_cmd = corpus_cmd->add_subcommand("show", "Print a kernel's source");
    show_cmd->add_option("name", corpus_name)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*asm_cmd) return cmd_asm(asm_args);
        if (*obf_cmd) return cmd_obfuscate(obf_args);
        if (*run_cmd) return cmd_run(run_args);
        if (*cmp_cmd) return cmd_compare(cmp_args);
        if (*sweep_cmd) return cmd_sweep(sweep_args);
        if (*bench_cmd) return cmd_bench(bench_args);
        if (*list_cmd) return cmd_corpus_list();
        if (*show_cmd) return cmd_corpus_show(corpus_name);
    } catch (const BadKeyOrCorrupt& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kBadKey;
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    }
    return kUsage;
}
