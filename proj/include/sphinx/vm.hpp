#pragma once

#include "sphinx/assembler.hpp"
#include "sphinx/error.hpp"
#include "sphinx/image_file.hpp"
#include "sphinx/isa.hpp"
#include "sphinx/mask.hpp"
#include "sphinx/splitmix64.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sphinx::vm {

inline constexpr std::uint32_t kMemorySize = 1u << 20;
inline constexpr std::uint32_t kScratchSize = 4096;
/// Top 4 KiB: decoy loads/stores land here and real accesses may not.
inline constexpr std::uint32_t kScratchBase = kMemorySize - kScratchSize;
/// Initial stack pointer; the stack grows down from just below scratch.
inline constexpr std::uint32_t kInitialSp = kScratchBase;

struct Profile {
    std::uint32_t cycles = 1;
    std::uint32_t power = 0;

    bool operator==(const Profile&) const = default;
};

/// Candidate execution profiles per instruction class, plus the profile
/// charged for a decoy that is discarded instead of shadow-executed.
/// Candidate 0 is the baseline profile.
class ProfileTable {
public:
    static ProfileTable defaults();

    /// Overrides defaults from lines of the form `CLASS c,p;c,p;...` where
    /// CLASS is an instruction class name or DECOY_DISCARD. `#` starts a
    /// comment. Throws Error on malformed input.
    static ProfileTable parse(std::string_view text);
    static ProfileTable load(const std::filesystem::path& path);

    std::span<const Profile> candidates(isa::InstrClass c) const noexcept;
    std::span<const Profile> decoy_discard() const noexcept { return slots_.back(); }

    void set(isa::InstrClass c, std::vector<Profile> profiles);
    void set_decoy_discard(std::vector<Profile> profiles);

    /// Mean cycle count over a class's candidates (uniform selection).
    double mean_cycles(isa::InstrClass c) const noexcept;

    bool operator==(const ProfileTable&) const = default;

private:
    static void check(const std::vector<Profile>& profiles);

    std::array<std::vector<Profile>, isa::kClassCount + 1> slots_;
};

enum class Mode : std::uint8_t { Baseline, Sphinx };

struct RunConfig {
    Mode mode = Mode::Baseline;
    std::uint64_t run_seed = 0;
    bool profile_randomization = true; ///< forced off in baseline mode
    bool shadow_decoys = true;
    std::uint32_t noise_amplitude = 0;
    std::uint64_t max_cycles = 100'000'000;
    std::uint64_t device_secret = 0;
    ProfileTable profiles = ProfileTable::defaults();
};

enum class MemKind : char { Fetch = 'F', Read = 'R', Write = 'W' };

struct MemEvent {
    std::uint64_t cycle = 0;
    MemKind kind = MemKind::Fetch;
    std::uint32_t addr = 0;

    bool operator==(const MemEvent&) const = default;
};

enum class RunStatus : std::uint8_t { Running, Exited, Trapped, FuelExhausted };

std::string_view status_name(RunStatus s) noexcept;

/// Dynamic instruction counts, split by real/decoy and class.
struct ExecutionCounts {
    std::array<std::uint64_t, isa::kClassCount> real{};
    std::array<std::uint64_t, isa::kClassCount> decoy{};
    std::uint64_t real_taken = 0;
    std::uint64_t decoy_taken = 0;
    std::uint64_t discarded = 0;

    std::uint64_t real_total() const noexcept;
    std::uint64_t decoy_total() const noexcept;

    bool operator==(const ExecutionCounts&) const = default;
};

/// Observable side channels of one run. power[i] is the sample of cycle
/// i + 1; cycles are numbered from 1 so total_cycles is the last one.
/// Fetch events carry an instruction's first cycle, reads and writes its
/// last.
struct SideChannelTrace {
    std::vector<std::uint32_t> power;
    std::vector<MemEvent> mem_events;
    std::uint64_t total_cycles = 0;
    int guest_exit_code = 0;
    std::string guest_output;
    RunStatus status = RunStatus::Running;
    std::string trap_reason;
    ExecutionCounts counts;

    bool completed() const noexcept { return status == RunStatus::Exited; }
    bool operator==(const SideChannelTrace&) const = default;
};

struct MachineState {
    std::uint32_t pc = 0;
    std::array<std::uint32_t, 32> regs{};
    std::vector<std::uint8_t> mem;
    std::uint64_t cycle = 0;
};

class ModeMismatch : public Error {
public:
    using Error::Error;
};

/// One simulated core. With a mask (sphinx mode) words whose bit is 0 are
/// decoys: shadow-executed against live registers with writeback
/// suppressed, memory remapped into the scratch page and control flow
/// never redirected, or charged the discard profile when shadowing is off.
class Machine {
public:
    /// mask must be present iff config.mode is Sphinx, with one bit per
    /// text word. Throws ModeMismatch / ImageFormatError.
    Machine(const isa::MemoryImage& image, std::optional<MaskBits> mask, RunConfig config);

    /// Executes one instruction. Returns false once the machine has halted
    /// (guest exit, trap or fuel exhaustion); the reason is in trace().
    bool step();

    SideChannelTrace run();

    const MachineState& state() const noexcept { return state_; }
    const SideChannelTrace& trace() const noexcept { return trace_; }

private:
    void execute(std::uint32_t pc);
    void charge(std::span<const Profile> candidates, std::uint32_t extra_cycles, std::uint32_t data_weight,
                std::optional<MemEvent> access);
    void halt(RunStatus status, std::string reason = {});
    std::uint32_t load32(std::uint32_t addr) const noexcept;
    void store32(std::uint32_t addr, std::uint32_t value) noexcept;
    std::uint32_t checked_address(std::uint32_t addr, const char* what) const;

    RunConfig config_;
    std::optional<MaskBits> mask_;
    std::uint32_t text_base_;
    std::uint32_t text_end_;
    MachineState state_;
    SideChannelTrace trace_;
    Rng profile_rng_;
    Rng noise_rng_;
    bool randomize_;
};

struct LoadedImage {
    isa::MemoryImage image;
    std::optional<MaskBits> mask;
};

/// Sphinx mode decrypts the mask with derive_key(device_secret, key_id)
/// and cross-checks it against the header; baseline mode ignores any mask.
/// Throws ModeMismatch, BadKeyOrCorrupt or ImageFormatError.
LoadedImage load_image(const image::ImageFile& file, const RunConfig& config);

/// Load errors throw; guest traps and fuel exhaustion are reported in the
/// returned trace.
SideChannelTrace run(const image::ImageFile& file, const RunConfig& config);

/// Expected total cycles for the given dynamic counts under the config's
/// profile selection policy (uniform over candidates when randomizing,
/// candidate 0 otherwise), including the +1 for each taken branch.
double predicted_cycles(const ExecutionCounts& counts, const RunConfig& config);

} // namespace sphinx::vm
