#pragma once

#include "sphinx/assembler.hpp"
#include "sphinx/obfuscator.hpp"
#include "sphinx/vm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sphinx::analyzer {

inline constexpr std::size_t kDefaultBuckets = 256;
inline constexpr std::string_view kGeneratedBy = "sphinx-toolchain 1.0.0";

struct ResampledTrace {
    std::vector<double> buckets;
};

/// Bucket i is the mean of samples [floor(i*T/L), floor((i+1)*T/L)).
/// Throws TraceTooShort when T < L, std::invalid_argument when L < 2.
ResampledTrace resample(std::span<const std::uint32_t> samples, std::size_t buckets = kDefaultBuckets);

/// Sample Pearson correlation. Throws ZeroVariance, or
/// std::invalid_argument on a length mismatch.
double pearson(std::span<const double> a, std::span<const double> b);
inline double pearson(const ResampledTrace& a, const ResampledTrace& b) { return pearson(a.buckets, b.buckets); }

/// obf.total_cycles / base.total_cycles - 1. Both runs must have exited
/// cleanly; throws Error otherwise or on a zero-cycle baseline.
double cycle_overhead(const vm::SideChannelTrace& obf, const vm::SideChannelTrace& base);

enum KindMask : unsigned {
    kFetch = 1u << 0,
    kRead = 1u << 1,
    kWrite = 1u << 2,
    kData = kRead | kWrite,
};

/// Jaccard similarity of the distinct addresses of the selected event
/// kinds; 1 when both sets are empty.
double address_jaccard(std::span<const vm::MemEvent> a, std::span<const vm::MemEvent> b, unsigned kinds);

/// Knobs shared by every run of an experiment.
struct ExperimentConfig {
    std::size_t buckets = kDefaultBuckets;
    bool profile_randomization = true;
    bool shadow_decoys = true;
    std::uint32_t noise_amplitude = 0;
    std::uint64_t max_cycles = 100'000'000;
    std::uint64_t device_secret = 0x5EC2E7D15EA5Eull;
    std::uint64_t challenge = 0xC4A11E46Eull;
    vm::ProfileTable profiles = vm::ProfileTable::defaults();

    vm::RunConfig run_config(vm::Mode mode, std::uint64_t run_seed) const;
};

using RunLengthHistogram = std::map<std::uint32_t, std::uint64_t>;

/// Two builds (A, B) each run under two run seeds, against the baseline.
/// Cross-build quantities compare A and B under the first run seed;
/// cross-run ones compare A under both run seeds. Overheads and decoy
/// statistics average over all obfuscated runs/builds.
struct DecouplingReport {
    double entropy = 0;
    std::array<std::uint64_t, 2> build_seeds{};
    std::array<std::uint64_t, 2> run_seeds{};
    std::uint64_t baseline_cycles = 0;
    double obfuscated_cycles = 0;
    double cycle_overhead = 0;
    double predicted_overhead = 0;
    double cross_build_r = 0;
    double same_build_cross_run_r = 0;
    double baseline_self_r = 0;
    double fetch_jaccard = 0;
    double data_jaccard = 0;
    double decoy_fraction = 0;
    RunLengthHistogram run_length_histogram;
    bool outputs_equal = false;

    bool operator==(const DecouplingReport&) const = default;
};

/// params.seed is ignored; builds use build_seeds. Throws on any build or
/// load failure, or when the baseline itself does not exit cleanly.
DecouplingReport decoupling_report(const isa::Program& program, const obf::ObfuscationParams& params,
                                   std::array<std::uint64_t, 2> build_seeds, std::array<std::uint64_t, 2> run_seeds,
                                   const ExperimentConfig& config);

struct Aggregate {
    double mean = 0;
    double min = 0;
    double max = 0;

    bool operator==(const Aggregate&) const = default;
};

struct EntropyAggregate {
    double entropy = 0;
    std::size_t cells = 0;
    std::map<std::string, Aggregate> fields;
    RunLengthHistogram run_length_histogram;
    bool outputs_equal = true;

    bool operator==(const EntropyAggregate&) const = default;
};

struct SweepReport {
    std::string program;
    std::uint64_t base_seed = 0;
    std::size_t n_seeds = 0;
    std::size_t buckets = kDefaultBuckets;
    std::vector<EntropyAggregate> entropies;
    std::vector<DecouplingReport> cells;

    bool operator==(const SweepReport&) const = default;
};

/// Numeric DecouplingReport fields aggregated per entropy, in report order.
std::span<const std::string_view> aggregated_fields() noexcept;

/// Seed of build `replicate` at entropy index `entropy_index`.
std::uint64_t build_seed(std::uint64_t base_seed, std::size_t entropy_index, std::size_t replicate) noexcept;

/// For each entropy, n_seeds builds; replicate j pairs build j with build
/// (j + 1) % n_seeds. Cells may run on `threads` workers (0 = hardware
/// concurrency); results are identical for any thread count.
SweepReport sweep(const std::string& name, const isa::Program& program, std::span<const double> entropies,
                  std::size_t n_seeds, std::uint64_t base_seed, const ExperimentConfig& config,
                  const obf::ObfuscationParams& base_params = {}, unsigned threads = 0);

void to_json(nlohmann::json& j, const DecouplingReport& r);
void from_json(const nlohmann::json& j, DecouplingReport& r);
void to_json(nlohmann::json& j, const Aggregate& a);
void from_json(const nlohmann::json& j, Aggregate& a);
void to_json(nlohmann::json& j, const EntropyAggregate& e);
void from_json(const nlohmann::json& j, EntropyAggregate& e);
void to_json(nlohmann::json& j, const SweepReport& r);
void from_json(const nlohmann::json& j, SweepReport& r);

nlohmann::json histogram_json(const RunLengthHistogram& h);
RunLengthHistogram histogram_from_json(const nlohmann::json& j);

} // namespace sphinx::analyzer

namespace sphinx::obf {
void to_json(nlohmann::json& j, const ObfuscationStats& s);
} // namespace sphinx::obf
