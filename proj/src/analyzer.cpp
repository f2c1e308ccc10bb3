#include "sphinx/analyzer.hpp"

#include "sphinx/error.hpp"
#include "sphinx/image_file.hpp"
#include "sphinx/maskcipher.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace sphinx::analyzer {
namespace {

constexpr std::array<std::string_view, 10> kFields = {
    "cycle_overhead", "predicted_overhead", "obfuscated_cycles", "cross_build_r", "same_build_cross_run_r",
    "baseline_self_r", "fetch_jaccard",      "data_jaccard",      "decoy_fraction", "baseline_cycles",
};

double field(const DecouplingReport& r, std::string_view name)
{
    if (name == "cycle_overhead") return r.cycle_overhead;
    if (name == "predicted_overhead") return r.predicted_overhead;
    if (name == "obfuscated_cycles") return r.obfuscated_cycles;
    if (name == "cross_build_r") return r.cross_build_r;
    if (name == "same_build_cross_run_r") return r.same_build_cross_run_r;
    if (name == "baseline_self_r") return r.baseline_self_r;
    if (name == "fetch_jaccard") return r.fetch_jaccard;
    if (name == "data_jaccard") return r.data_jaccard;
    if (name == "decoy_fraction") return r.decoy_fraction;
    if (name == "baseline_cycles") return static_cast<double>(r.baseline_cycles);
    throw std::invalid_argument(fmt::format("unknown report field '{}'", name));
}

std::set<std::uint32_t> addresses(std::span<const vm::MemEvent> events, unsigned kinds)
{
    std::set<std::uint32_t> out;
    for (const auto& e : events) {
        const unsigned bit = e.kind == vm::MemKind::Fetch ? kFetch : e.kind == vm::MemKind::Read ? kRead : kWrite;
        if (kinds & bit) out.insert(e.addr);
    }
    return out;
}

} // namespace

ResampledTrace resample(std::span<const std::uint32_t> samples, std::size_t buckets)
{
    if (buckets < 2) throw std::invalid_argument("resample needs at least 2 buckets");
    const std::size_t total = samples.size();
    if (total < buckets) throw TraceTooShort(fmt::format("trace has {} samples, need at least {}", total, buckets));
    ResampledTrace out;
    out.buckets.resize(buckets);
    for (std::size_t i = 0; i < buckets; ++i) {
        const std::size_t lo = i * total / buckets;
        const std::size_t hi = (i + 1) * total / buckets;
        double sum = 0;
        for (std::size_t k = lo; k < hi; ++k) sum += samples[k];
        out.buckets[i] = sum / static_cast<double>(hi - lo);
    }
    return out;
}

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    if (a.empty()) throw ZeroVariance();
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0) throw ZeroVariance();
    // sqrt(saa * sbb) is exactly saa when the inputs are identical.
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double cycle_overhead(const vm::SideChannelTrace& obf, const vm::SideChannelTrace& base)
{
    if (!obf.completed() || !base.completed()) throw Error("cycle overhead needs two cleanly exited runs");
    if (base.total_cycles == 0) throw Error("baseline consumed zero cycles");
    return static_cast<double>(obf.total_cycles) / static_cast<double>(base.total_cycles) - 1.0;
}

double address_jaccard(std::span<const vm::MemEvent> a, std::span<const vm::MemEvent> b, unsigned kinds)
{
    const auto sa = addresses(a, kinds);
    const auto sb = addresses(b, kinds);
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t common = 0;
    for (auto addr : sa) common += sb.count(addr);
    const auto unioned = sa.size() + sb.size() - common;
    return static_cast<double>(common) / static_cast<double>(unioned);
}

vm::RunConfig ExperimentConfig::run_config(vm::Mode mode, std::uint64_t run_seed) const
{
    vm::RunConfig c;
    c.mode = mode;
    c.run_seed = run_seed;
    c.profile_randomization = profile_randomization;
    c.shadow_decoys = shadow_decoys;
    c.noise_amplitude = noise_amplitude;
    c.max_cycles = max_cycles;
    c.device_secret = device_secret;
    c.profiles = profiles;
    return c;
}

DecouplingReport decoupling_report(const isa::Program& program, const obf::ObfuscationParams& params,
                                   std::array<std::uint64_t, 2> build_seeds, std::array<std::uint64_t, 2> run_seeds,
                                   const ExperimentConfig& config)
{
    DecouplingReport report;
    report.entropy = params.entropy;
    report.build_seeds = build_seeds;
    report.run_seeds = run_seeds;

    const auto plain = image::make_plain(isa::assemble(program));
    const auto base = vm::run(plain, config.run_config(vm::Mode::Baseline, run_seeds[0]));
    if (!base.completed())
        throw Error(fmt::format("baseline run did not exit cleanly ({}: {})", vm::status_name(base.status),
                                base.trap_reason));
    const auto base_again = vm::run(plain, config.run_config(vm::Mode::Baseline, run_seeds[1]));
    const auto base_rs = resample(base.power, config.buckets);
    report.baseline_cycles = base.total_cycles;
    report.baseline_self_r = pearson(base_rs, resample(base_again.power, config.buckets));

    const auto key = maskcipher::derive_key(config.device_secret, config.challenge);
    std::array<std::array<vm::SideChannelTrace, 2>, 2> traces;
    bool outputs_equal = true;
    double overhead_sum = 0, predicted_sum = 0, cycles_sum = 0;
    double fraction_sum = 0;
    for (std::size_t b = 0; b < 2; ++b) {
        auto p = params;
        p.seed = build_seeds[b];
        const auto built = obf::diversify(program, p);
        const auto file = image::make_obfuscated(isa::assemble(built.program), built.mask, key, p.entropy, p.seed);
        fraction_sum += built.stats.decoy_fraction;
        for (const auto& [k, n] : built.stats.run_length_histogram) report.run_length_histogram[k] += n;

        for (std::size_t r = 0; r < 2; ++r) {
            const auto cfg = config.run_config(vm::Mode::Sphinx, run_seeds[r]);
            auto t = vm::run(file, cfg);
            outputs_equal = outputs_equal && t.completed() && t.guest_output == base.guest_output &&
                            t.guest_exit_code == base.guest_exit_code;
            const auto cycles = static_cast<double>(t.total_cycles);
            const auto base_cycles = static_cast<double>(base.total_cycles);
            cycles_sum += cycles;
            overhead_sum += cycles / base_cycles - 1.0;
            predicted_sum += vm::predicted_cycles(t.counts, cfg) / base_cycles - 1.0;
            traces[b][r] = std::move(t);
        }
    }

    const auto a0 = resample(traces[0][0].power, config.buckets);
    report.cross_build_r = pearson(a0, resample(traces[1][0].power, config.buckets));
    report.same_build_cross_run_r = pearson(a0, resample(traces[0][1].power, config.buckets));
    report.fetch_jaccard = address_jaccard(traces[0][0].mem_events, traces[1][0].mem_events, kFetch);
    report.data_jaccard = address_jaccard(traces[0][0].mem_events, traces[1][0].mem_events, kData);
    report.obfuscated_cycles = cycles_sum / 4.0;
    report.cycle_overhead = overhead_sum / 4.0;
    report.predicted_overhead = predicted_sum / 4.0;
    report.decoy_fraction = fraction_sum / 2.0;
    report.outputs_equal = outputs_equal;
    return report;
}

std::span<const std::string_view> aggregated_fields() noexcept { return kFields; }

std::uint64_t build_seed(std::uint64_t base_seed, std::size_t entropy_index, std::size_t replicate) noexcept
{
    return hash_combine(hash_combine(base_seed, entropy_index), replicate);
}

SweepReport sweep(const std::string& name, const isa::Program& program, std::span<const double> entropies,
                  std::size_t n_seeds, std::uint64_t base_seed, const ExperimentConfig& config,
                  const obf::ObfuscationParams& base_params, unsigned threads)
{
    if (n_seeds < 2) throw std::invalid_argument("sweep needs at least 2 seeds");
    for (double e : entropies) {
        auto p = base_params;
        p.entropy = e;
        obf::validate(p);
    }

    SweepReport report;
    report.program = name;
    report.base_seed = base_seed;
    report.n_seeds = n_seeds;
    report.buckets = config.buckets;

    const std::size_t n_cells = entropies.size() * n_seeds;
    report.cells.resize(n_cells);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t cell = next++; cell < n_cells; cell = next++) {
            const std::size_t ei = cell / n_seeds;
            const std::size_t j = cell % n_seeds;
            try {
                auto p = base_params;
                p.entropy = entropies[ei];
                const std::array<std::uint64_t, 2> builds = {build_seed(base_seed, ei, j),
                                                             build_seed(base_seed, ei, (j + 1) % n_seeds)};
                const std::array<std::uint64_t, 2> runs = {hash_combine(builds[0], 0x52554E31),
                                                           hash_combine(builds[0], 0x52554E32)};
                report.cells[cell] = decoupling_report(program, p, builds, runs, config);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_cells));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t ei = 0; ei < entropies.size(); ++ei) {
        EntropyAggregate agg;
        agg.entropy = entropies[ei];
        agg.cells = n_seeds;
        for (auto name_view : kFields) {
            Aggregate a{0, INFINITY, -INFINITY};
            for (std::size_t j = 0; j < n_seeds; ++j) {
                const double v = field(report.cells[ei * n_seeds + j], name_view);
                a.mean += v;
                a.min = std::min(a.min, v);
                a.max = std::max(a.max, v);
            }
            a.mean /= static_cast<double>(n_seeds);
            agg.fields.emplace(std::string(name_view), a);
        }
        for (std::size_t j = 0; j < n_seeds; ++j) {
            const auto& cell = report.cells[ei * n_seeds + j];
            agg.outputs_equal = agg.outputs_equal && cell.outputs_equal;
            for (const auto& [k, n] : cell.run_length_histogram) agg.run_length_histogram[k] += n;
        }
        report.entropies.push_back(std::move(agg));
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json histogram_json(const RunLengthHistogram& h)
{
    auto j = nlohmann::json::object();
    for (const auto& [k, n] : h) j[std::to_string(k)] = n;
    return j;
}

RunLengthHistogram histogram_from_json(const nlohmann::json& j)
{
    RunLengthHistogram h;
    for (const auto& [k, v] : j.items()) h[static_cast<std::uint32_t>(std::stoul(k))] = v.get<std::uint64_t>();
    return h;
}

void to_json(nlohmann::json& j, const DecouplingReport& r)
{
    j = nlohmann::json{
        {"entropy", r.entropy},
        {"build_seeds", r.build_seeds},
        {"run_seeds", r.run_seeds},
        {"baseline_cycles", r.baseline_cycles},
        {"obfuscated_cycles", r.obfuscated_cycles},
        {"cycle_overhead", r.cycle_overhead},
        {"predicted_overhead", r.predicted_overhead},
        {"cross_build_r", r.cross_build_r},
        {"same_build_cross_run_r", r.same_build_cross_run_r},
        {"baseline_self_r", r.baseline_self_r},
        {"fetch_jaccard", r.fetch_jaccard},
        {"data_jaccard", r.data_jaccard},
        {"decoy_fraction", r.decoy_fraction},
        {"run_length_histogram", histogram_json(r.run_length_histogram)},
        {"outputs_equal", r.outputs_equal},
    };
}

void from_json(const nlohmann::json& j, DecouplingReport& r)
{
    j.at("entropy").get_to(r.entropy);
    j.at("build_seeds").get_to(r.build_seeds);
    j.at("run_seeds").get_to(r.run_seeds);
    j.at("baseline_cycles").get_to(r.baseline_cycles);
    j.at("obfuscated_cycles").get_to(r.obfuscated_cycles);
    j.at("cycle_overhead").get_to(r.cycle_overhead);
    j.at("predicted_overhead").get_to(r.predicted_overhead);
    j.at("cross_build_r").get_to(r.cross_build_r);
    j.at("same_build_cross_run_r").get_to(r.same_build_cross_run_r);
    j.at("baseline_self_r").get_to(r.baseline_self_r);
    j.at("fetch_jaccard").get_to(r.fetch_jaccard);
    j.at("data_jaccard").get_to(r.data_jaccard);
    j.at("decoy_fraction").get_to(r.decoy_fraction);
    r.run_length_histogram = histogram_from_json(j.at("run_length_histogram"));
    j.at("outputs_equal").get_to(r.outputs_equal);
}

void to_json(nlohmann::json& j, const Aggregate& a) { j = nlohmann::json{{"mean", a.mean}, {"min", a.min}, {"max", a.max}}; }

void from_json(const nlohmann::json& j, Aggregate& a)
{
    j.at("mean").get_to(a.mean);
    j.at("min").get_to(a.min);
    j.at("max").get_to(a.max);
}

void to_json(nlohmann::json& j, const EntropyAggregate& e)
{
    j = nlohmann::json{
        {"entropy", e.entropy},
        {"cells", e.cells},
        {"fields", e.fields},
        {"run_length_histogram", histogram_json(e.run_length_histogram)},
        {"outputs_equal", e.outputs_equal},
    };
}

void from_json(const nlohmann::json& j, EntropyAggregate& e)
{
    j.at("entropy").get_to(e.entropy);
    j.at("cells").get_to(e.cells);
    j.at("fields").get_to(e.fields);
    e.run_length_histogram = histogram_from_json(j.at("run_length_histogram"));
    j.at("outputs_equal").get_to(e.outputs_equal);
}

void to_json(nlohmann::json& j, const SweepReport& r)
{
    j = nlohmann::json{
        {"program", r.program},   {"base_seed", r.base_seed},   {"n_seeds", r.n_seeds},
        {"buckets", r.buckets},   {"entropies", r.entropies},   {"cells", r.cells},
    };
}

void from_json(const nlohmann::json& j, SweepReport& r)
{
    j.at("program").get_to(r.program);
    j.at("base_seed").get_to(r.base_seed);
    j.at("n_seeds").get_to(r.n_seeds);
    j.at("buckets").get_to(r.buckets);
    j.at("entropies").get_to(r.entropies);
    j.at("cells").get_to(r.cells);
}

} // namespace sphinx::analyzer

void sphinx::obf::to_json(nlohmann::json& j, const ObfuscationStats& s)
{
    auto classes = nlohmann::json::object();
    for (const auto& [c, n] : s.decoy_class_histogram) classes[std::string(isa::class_name(c))] = n;
    j = nlohmann::json{
        {"real_count", s.real_count},
        {"decoy_count", s.decoy_count},
        {"decoy_fraction", s.decoy_fraction},
        {"run_length_histogram", analyzer::histogram_json(s.run_length_histogram)},
        {"decoy_class_histogram", classes},
    };
}
