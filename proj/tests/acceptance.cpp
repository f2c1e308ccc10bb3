// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "sphinx/analyzer.hpp"
#include "sphinx/assembler.hpp"
#include "sphinx/corpus.hpp"
#include "sphinx/error.hpp"
#include "sphinx/image_file.hpp"
#include "sphinx/maskcipher.hpp"
#include "sphinx/obfuscator.hpp"
#include "sphinx/vm.hpp"

#include "stats_util.hpp"

#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <unistd.h>

using namespace sphinx;

namespace {

constexpr std::uint64_t kSecret = 0x5EC2E7D15EA5Eull;
constexpr std::uint64_t kChallenge = 0xC4A11E46Eull;
constexpr std::uint64_t kBaseSeed = 2024;
const std::vector<double> kGrid = {0.0, 0.1, 0.25, 0.5};
constexpr std::size_t kBuildSeeds = 5;

struct Outcome {
    bool pass;
    std::string detail;
};

struct Kernel {
    std::string name;
    isa::Program program;
    image::ImageFile plain;
    vm::SideChannelTrace baseline;
};

std::vector<Kernel> load_corpus()
{
    std::vector<Kernel> out;
    for (const auto& c : corpus::cases()) {
        Kernel k;
        k.name = std::string(c.name);
        k.program = isa::parse_assembly(c.source);
        k.plain = image::make_plain(isa::assemble(k.program));
        vm::RunConfig cfg;
        k.baseline = vm::run(k.plain, cfg);
        if (k.baseline.guest_output != c.expected_output || !k.baseline.completed())
            throw Error(fmt::format("{}: baseline does not reproduce its expected output", k.name));
        out.push_back(std::move(k));
    }
    return out;
}

obf::Diversified build(const isa::Program& p, double e, std::uint64_t seed)
{
    obf::ObfuscationParams params;
    params.entropy = e;
    params.seed = seed;
    return obf::diversify(p, params);
}

image::ImageFile build_image(const isa::Program& p, double e, std::uint64_t seed)
{
    const auto d = build(p, e, seed);
    return image::make_obfuscated(isa::assemble(d.program), d.mask, maskcipher::derive_key(kSecret, kChallenge), e,
                                  seed);
}

vm::RunConfig sphinx_config(std::uint64_t run_seed, bool randomize = true, bool shadow = true)
{
    vm::RunConfig c;
    c.mode = vm::Mode::Sphinx;
    c.run_seed = run_seed;
    c.device_secret = kSecret;
    c.profile_randomization = randomize;
    c.shadow_decoys = shadow;
    return c;
}

/// Runs fn(i) for i in [0, n) on all cores; results land in index order.
template <typename T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn)
{
    std::vector<T> out(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    for (unsigned t = 0; t < threads; ++t)
        workers.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
        }));
    for (auto& w : workers) w.get();
    return out;
}

bool same_result(const vm::SideChannelTrace& a, const vm::SideChannelTrace& b)
{
    return a.completed() && b.completed() && a.guest_output == b.guest_output && a.guest_exit_code == b.guest_exit_code;
}

// ---------------------------------------------------------------------------

Outcome semantic_preservation(const std::vector<Kernel>& kernels)
{
    const auto start = std::chrono::steady_clock::now();
    const std::size_t per_kernel = kGrid.size() * kBuildSeeds * 2;
    const std::size_t n = kernels.size() * per_kernel;

    struct Cell {
        bool shadow_ok = false;
        bool discard_ok = false;
    };
    const auto cells = parallel_map<Cell>(n, [&](std::size_t i) {
        const auto& k = kernels[i / per_kernel];
        const auto rest = i % per_kernel;
        const std::size_t ei = rest / (kBuildSeeds * 2);
        const std::size_t j = (rest / 2) % kBuildSeeds;
        const std::size_t r = rest % 2;
        const auto seed = analyzer::build_seed(kBaseSeed, ei, j);
        const auto file = build_image(k.program, kGrid[ei], seed);
        const auto run_seed = hash_combine(seed, r);
        Cell c;
        c.shadow_ok = same_result(vm::run(file, sphinx_config(run_seed)), k.baseline);
        c.discard_ok = same_result(vm::run(file, sphinx_config(run_seed, true, false)), k.baseline);
        return c;
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::size_t ok = 0, discard_ok = 0;
    std::string first_bad;
    for (std::size_t i = 0; i < n; ++i) {
        ok += cells[i].shadow_ok;
        discard_ok += cells[i].discard_ok;
        if (!cells[i].shadow_ok && first_bad.empty()) first_bad = fmt::format(" first mismatch at cell {}", i);
    }
    return {ok == n && discard_ok == n && n == 240 && secs < 300.0,
            fmt::format("{}/{} shadowed runs and {}/{} discard-profile runs match baseline in {:.1f}s (limit 300s){}",
                        ok, n, discard_ok, n, secs, first_bad)};
}

Outcome zero_entropy_identity(const std::vector<Kernel>& kernels)
{
    std::size_t ok = 0, total = 0;
    for (const auto& k : kernels)
        for (std::size_t j = 0; j < kBuildSeeds; ++j) {
            const auto file = build_image(k.program, 0.0, analyzer::build_seed(kBaseSeed, 0, j));
            const auto t = vm::run(file, sphinx_config(j + 1, false));
            ++total;
            ok += same_result(t, k.baseline) && t.total_cycles == k.baseline.total_cycles &&
                  analyzer::cycle_overhead(t, k.baseline) == 0.0 && t.power == k.baseline.power;
        }
    return {ok == total, fmt::format("{}/{} entropy-0 fixed-profile runs have identical cycles and overhead 0", ok, total)};
}

Outcome entropy_calibration(const std::vector<Kernel>& kernels)
{
    bool pass = true;
    std::string detail;
    for (std::size_t ei = 1; ei < kGrid.size(); ++ei) {
        const double e = kGrid[ei];
        double decoys = 0, words = 0;
        for (const auto& k : kernels)
            for (std::size_t j = 0; j < kBuildSeeds; ++j) {
                const auto d = build(k.program, e, analyzer::build_seed(kBaseSeed, ei, j));
                decoys += static_cast<double>(d.stats.decoy_count);
                words += static_cast<double>(d.mask.size());
            }
        const double frac = decoys / words;
        const double band = 3 * std::sqrt(e * (1 - e) / words);

        const auto big = build(isa::parse_assembly(testutil::straight_line_program(10000)), e, kBaseSeed + ei);
        const double p = testutil::geometric_fit_p(big.stats.run_length_histogram, e);
        const bool ok = std::abs(frac - e) <= band && p > 0.01 && big.mask.size() >= 10000;
        pass = pass && ok;
        detail += fmt::format("{}e={}: frac={:.4f} (|d|={:.4f} <= {:.4f}), chi2 p={:.3f} on {} words", detail.empty() ? "" : "; ",
                              e, frac, std::abs(frac - e), band, p, big.mask.size());
    }
    return {pass, detail};
}

Outcome decoupling(const std::vector<Kernel>& kernels)
{
    analyzer::ExperimentConfig cfg;
    const std::vector<double> half = {0.5};
    bool pass = true;
    std::string detail;
    for (const auto& k : kernels) {
        const auto report = analyzer::sweep(k.name, k.program, half, kBuildSeeds, kBaseSeed, cfg);
        const auto& f = report.entropies[0].fields;
        bool fetch_ok = true, self_ok = true;
        for (const auto& c : report.cells) {
            fetch_ok = fetch_ok && c.fetch_jaccard < 1.0;
            self_ok = self_ok && c.baseline_self_r == 1.0;
        }
        const double r = f.at("cross_build_r").mean;
        pass = pass && r < 0.8 && fetch_ok && self_ok;
        detail += fmt::format("{}{} r={:.3f} J_F<={:.3f} self={}", detail.empty() ? "" : "; ", k.name, r,
                              f.at("fetch_jaccard").max, self_ok ? "1" : "!=1");
    }
    return {pass, detail};
}

Outcome timing_obfuscation(const std::vector<Kernel>& kernels)
{
    std::size_t differ = 0, pairs = 0;
    for (const auto& k : kernels) {
        if (k.baseline.counts.real_total() < 100) continue;
        for (std::size_t ei = 1; ei < kGrid.size(); ++ei)
            for (std::size_t j = 0; j < kBuildSeeds; ++j) {
                const auto file = build_image(k.program, kGrid[ei], analyzer::build_seed(kBaseSeed, ei, j));
                for (std::uint64_t r = 0; r < 4; ++r) {
                    const auto a = vm::run(file, sphinx_config(2 * r + 1));
                    const auto b = vm::run(file, sphinx_config(2 * r + 2));
                    ++pairs;
                    differ += a.total_cycles != b.total_cycles;
                }
            }
    }
    const double share = static_cast<double>(differ) / static_cast<double>(pairs);
    return {share >= 0.9, fmt::format("{}/{} run-seed pairs differ in total cycles ({:.1f}%, need >= 90%)", differ,
                                      pairs, 100 * share)};
}

Outcome mask_necessity(const std::vector<Kernel>& kernels)
{
    constexpr std::size_t cells = 40;
    std::size_t diverged = 0, trapped = 0;
    for (std::size_t i = 0; i < cells; ++i) {
        const auto& k = kernels[i % kernels.size()];
        const auto file = build_image(k.program, 0.5, hash_combine(kBaseSeed, 6000 + i));
        vm::RunConfig maskless;
        maskless.mode = vm::Mode::Baseline;
        maskless.max_cycles = 50 * k.baseline.total_cycles;
        const auto t = vm::run(file, maskless);
        trapped += !t.completed();
        diverged += !same_result(t, k.baseline);
    }
    const double share = static_cast<double>(diverged) / cells;
    return {share >= 0.95, fmt::format("{}/{} maskless runs trap or diverge ({} stop abnormally), need >= 95%",
                                       diverged, cells, trapped)};
}

Outcome cipher_integrity()
{
    Rng rng(0xC1F3);
    std::size_t lossless = 0;
    constexpr std::size_t kRoundtrips = 100000;
    for (std::size_t i = 0; i < kRoundtrips; ++i) {
        const maskcipher::DeviceKey key{rng.next(), rng.next()};
        MaskBits m(rng.below(300));
        for (std::size_t b = 0; b < m.size(); ++b) m[b] = rng.bernoulli(0.5);
        lossless += maskcipher::decrypt_mask(maskcipher::encrypt_mask(m, key), key) == m;
    }

    const maskcipher::DeviceKey key{rng.next(), 0};
    MaskBits m(1000);
    for (std::size_t b = 0; b < m.size(); ++b) m[b] = rng.bernoulli(0.5);
    const auto ct = maskcipher::encrypt_mask(m, key);

    std::size_t rejected = 0;
    for (int i = 0; i < 1000; ++i) {
        maskcipher::DeviceKey wrong{rng.next(), 0};
        if (wrong.key == key.key) wrong.key ^= 1;
        try {
            (void)maskcipher::decrypt_mask(ct, wrong);
        } catch (const BadKeyOrCorrupt&) {
            ++rejected;
        }
    }

    std::size_t flips = 0, flip_rejected = 0;
    for (std::size_t w = 0; w < ct.words.size(); ++w)
        for (int b = 0; b < 64; ++b) {
            auto t = ct;
            t.words[w] ^= 1ull << b;
            ++flips;
            try {
                (void)maskcipher::decrypt_mask(t, key);
            } catch (const BadKeyOrCorrupt&) {
                ++flip_rejected;
            }
        }
    return {lossless == kRoundtrips && rejected == 1000 && flip_rejected == flips,
            fmt::format("{}/{} roundtrips lossless, {}/1000 wrong keys rejected, {}/{} bit flips rejected", lossless,
                        kRoundtrips, rejected, flip_rejected, flips)};
}

// -- oracle agreement --------------------------------------------------------

struct Reference {
    const char* text;
    std::uint32_t word;
};

constexpr Reference kReference[] = {
#include "reference_encodings.inc"
};

std::optional<std::string> capture(const std::string& cmd)
{
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return std::nullopt;
    std::string out;
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    return ::pclose(pipe) == 0 ? std::optional(out) : std::nullopt;
}

template <typename T>
T le(const std::vector<char>& b, std::size_t off)
{
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<std::uint8_t>(b.at(off + i))) << (8 * i);
    return v;
}

/// .text words of an ELF32 little-endian relocatable object.
std::vector<std::uint32_t> elf_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    const std::vector<char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (b.size() < 52 || b[0] != 0x7F || b[1] != 'E' || b[4] != 1 || b[5] != 1) throw Error("not an ELF32 LE object");
    const auto shoff = le<std::uint32_t>(b, 32);
    const auto shentsize = le<std::uint16_t>(b, 46);
    const auto shnum = le<std::uint16_t>(b, 48);
    const auto shstrndx = le<std::uint16_t>(b, 50);
    const auto strtab = le<std::uint32_t>(b, shoff + shstrndx * shentsize + 16);
    for (std::uint32_t i = 0; i < shnum; ++i) {
        const auto sh = shoff + i * shentsize;
        std::string name;
        for (auto p = strtab + le<std::uint32_t>(b, sh); b.at(p); ++p) name += b[p];
        if (name != ".text") continue;
        const auto off = le<std::uint32_t>(b, sh + 16);
        const auto size = le<std::uint32_t>(b, sh + 20);
        std::vector<std::uint32_t> words;
        for (std::uint32_t o = 0; o < size; o += 4) words.push_back(le<std::uint32_t>(b, off + o));
        return words;
    }
    throw Error("no .text section");
}

Outcome oracle_agreement(const std::vector<Kernel>& kernels)
{
    std::string detail;
    bool pass = true;

    // SplitMix64 against an independent evaluation of the published algorithm.
    SplitMix64 g(0);
    const auto first = g();
    bool smx_ok = first == 0xE220A8397B1DCDAFull;
    const auto py = capture(
        "python3 -c \"M=(1<<64)-1;s=(0+0x9E3779B97F4A7C15)&M;z=s;z=((z^(z>>30))*0xBF58476D1CE4E5B9)&M;"
        "z=((z^(z>>27))*0x94D049BB133111EB)&M;print(hex(z^(z>>31)))\" 2>/dev/null");
    if (py) {
        smx_ok = smx_ok && std::stoull(*py, nullptr, 16) == first;
        detail += fmt::format("splitmix64(0)=0x{:016X} (python oracle {})", first, smx_ok ? "agrees" : "DISAGREES");
    } else {
        detail += fmt::format("splitmix64(0)=0x{:016X} (python unavailable, frozen vector only)", first);
    }
    pass = pass && smx_ok;

    std::size_t frozen_ok = 0;
    for (const auto& r : kReference)
        frozen_ok += isa::assemble(isa::parse_assembly(std::string(".text\n") + r.text + "\n")).text.at(0) == r.word;
    pass = pass && frozen_ok == std::size(kReference);
    detail += fmt::format("; frozen clang table {}/{}", frozen_ok, std::size(kReference));

    // Live check: every word of every corpus kernel (plain and an entropy-0.5 build).
    std::vector<std::uint32_t> words;
    for (const auto& k : kernels) {
        const auto& t = k.plain.image.text;
        words.insert(words.end(), t.begin(), t.end());
        const auto d = build(k.program, 0.5, kBaseSeed);
        const auto o = isa::assemble(d.program).text;
        words.insert(words.end(), o.begin(), o.end());
    }
    const auto dir = std::filesystem::temp_directory_path() / fmt::format("sphinx_accept_{}", ::getpid());
    std::filesystem::create_directories(dir);
    {
        std::ofstream src(dir / "corpus.s");
        for (auto w : words) src << isa::to_asm(isa::decode(w)) << '\n';
    }
    const auto cmd = fmt::format("clang --target=riscv32 -march=rv32i -mno-relax -c {} -o {} 2>&1",
                                 (dir / "corpus.s").string(), (dir / "corpus.o").string());
    if (capture(cmd)) {
        const auto ref = elf_text(dir / "corpus.o");
        std::size_t same = 0;
        for (std::size_t i = 0; i < std::min(ref.size(), words.size()); ++i) same += ref[i] == words[i];
        const bool ok = ref.size() == words.size() && same == words.size();
        pass = pass && ok;
        detail += fmt::format("; live clang corpus check {}/{} words", same, words.size());
    } else {
        detail += "; clang unavailable, live corpus check skipped";
    }
    std::filesystem::remove_all(dir);
    return {pass, detail};
}

Outcome overhead_model(const std::vector<Kernel>& kernels)
{
    analyzer::ExperimentConfig cfg;
    bool pass = true;
    std::string detail;
    for (const auto& k : kernels) {
        if (k.baseline.counts.real_total() < 10000) continue;
        const auto report = analyzer::sweep(k.name, k.program, kGrid, kBuildSeeds, kBaseSeed, cfg);
        double prev = -1e300;
        double worst = 0;
        bool monotone = true, close = true;
        for (const auto& e : report.entropies) {
            const double measured = e.fields.at("cycle_overhead").mean;
            const double predicted = e.fields.at("predicted_overhead").mean;
            const double rel = std::abs(measured - predicted) / std::abs(predicted);
            worst = std::max(worst, rel);
            close = close && rel <= 0.10;
            monotone = monotone && measured >= prev;
            prev = measured;
        }
        pass = pass && close && monotone;
        detail += fmt::format("{}{} max rel err {:.2f}%{}", detail.empty() ? "" : "; ", k.name, 100 * worst,
                              monotone ? "" : " NOT MONOTONE");
    }
    return {pass, detail};
}

} // namespace

int main()
{
    std::vector<Kernel> kernels;
    try {
        kernels = load_corpus();
    } catch (const std::exception& e) {
        fmt::print("FAIL corpus setup: {}\n", e.what());
        return 1;
    }

    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"1 semantic preservation", [&] { return semantic_preservation(kernels); }},
        {"2 identity at zero entropy", [&] { return zero_entropy_identity(kernels); }},
        {"3 entropy calibration", [&] { return entropy_calibration(kernels); }},
        {"4 decoupling", [&] { return decoupling(kernels); }},
        {"5 timing obfuscation", [&] { return timing_obfuscation(kernels); }},
        {"6 mask necessity", [&] { return mask_necessity(kernels); }},
        {"7 cipher integrity", [&] { return cipher_integrity(); }},
        {"8 oracle agreement", [&] { return oracle_agreement(kernels); }},
        {"9 overhead model", [&] { return overhead_model(kernels); }},
    };

    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failed += !o.pass;
        fmt::print("{} [{}] {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", std::size(criteria) - failed, std::size(criteria));
    return failed == 0 ? 0 : 1;
}
