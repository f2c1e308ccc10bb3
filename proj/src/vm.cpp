#include "sphinx/vm.hpp"

#include "sphinx/error.hpp"
#include "sphinx/maskcipher.hpp"

#include <fmt/format.h>

#include <bit>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sphinx::vm {
namespace {

using isa::InstrClass;
using isa::Mnemonic;

constexpr std::size_t kDiscardSlot = isa::kClassCount;

class GuestTrap : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint32_t parse_u32(std::string_view s, int line)
{
    s = trim(s);
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(fmt::format("profile table line {}: bad number '{}'", line, s));
    return v;
}

} // namespace

std::string_view status_name(RunStatus s) noexcept
{
    switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Exited: return "exited";
    case RunStatus::Trapped: return "trap";
    case RunStatus::FuelExhausted: return "fuel-exhausted";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// ProfileTable

ProfileTable ProfileTable::defaults()
{
    ProfileTable t;
    const std::vector<Profile> alu = {{1, 2}, {2, 1}, {3, 1}};
    t.set(InstrClass::Alu, alu);
    t.set(InstrClass::AluImm, alu);
    t.set(InstrClass::Lui, alu);
    t.set(InstrClass::Load, {{2, 3}, {3, 2}, {5, 1}});
    t.set(InstrClass::Store, {{2, 3}, {4, 2}});
    t.set(InstrClass::Branch, {{1, 2}, {2, 2}});
    t.set(InstrClass::Jal, {{1, 2}, {2, 2}});
    t.set(InstrClass::Jalr, {{1, 2}, {2, 2}});
    t.set(InstrClass::System, {{3, 2}});
    t.set_decoy_discard({{1, 1}});
    return t;
}

void ProfileTable::check(const std::vector<Profile>& profiles)
{
    if (profiles.empty()) throw Error("profile list must not be empty");
    for (const auto& p : profiles)
        if (p.cycles == 0) throw Error("profile cycles must be positive");
}

void ProfileTable::set(InstrClass c, std::vector<Profile> profiles)
{
    check(profiles);
    slots_[static_cast<std::size_t>(c)] = std::move(profiles);
}

void ProfileTable::set_decoy_discard(std::vector<Profile> profiles)
{
    check(profiles);
    slots_[kDiscardSlot] = std::move(profiles);
}

std::span<const Profile> ProfileTable::candidates(InstrClass c) const noexcept
{
    return slots_[static_cast<std::size_t>(c)];
}

double ProfileTable::mean_cycles(InstrClass c) const noexcept
{
    const auto cands = candidates(c);
    double sum = 0;
    for (const auto& p : cands) sum += p.cycles;
    return sum / static_cast<double>(cands.size());
}

ProfileTable ProfileTable::parse(std::string_view text)
{
    auto table = defaults();
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto sp = line.find_first_of(" \t");
        if (sp == std::string_view::npos) throw Error(fmt::format("profile table line {}: missing profiles", line_no));
        const auto name = line.substr(0, sp);
        std::vector<Profile> profiles;
        auto rest = trim(line.substr(sp));
        while (!rest.empty()) {
            const auto semi = rest.find(';');
            const auto entry = trim(rest.substr(0, semi));
            rest = semi == std::string_view::npos ? std::string_view{} : trim(rest.substr(semi + 1));
            if (entry.empty()) continue;
            const auto comma = entry.find(',');
            if (comma == std::string_view::npos)
                throw Error(fmt::format("profile table line {}: expected cycles,power", line_no));
            profiles.push_back({parse_u32(entry.substr(0, comma), line_no), parse_u32(entry.substr(comma + 1), line_no)});
        }
        try {
            if (name == "DECOY_DISCARD") {
                table.set_decoy_discard(std::move(profiles));
            } else if (auto cls = isa::parse_class(name)) {
                table.set(*cls, std::move(profiles));
            } else {
                throw Error(fmt::format("unknown class '{}'", name));
            }
        } catch (const Error& e) {
            throw Error(fmt::format("profile table line {}: {}", line_no, e.what()));
        }
    }
    return table;
}

ProfileTable ProfileTable::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open profile table '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::uint64_t ExecutionCounts::real_total() const noexcept { return std::accumulate(real.begin(), real.end(), 0ull); }
std::uint64_t ExecutionCounts::decoy_total() const noexcept
{
    return std::accumulate(decoy.begin(), decoy.end(), 0ull) + discarded;
}

// ---------------------------------------------------------------------------
// Machine

Machine::Machine(const isa::MemoryImage& image, std::optional<MaskBits> mask, RunConfig config)
    : config_(std::move(config)),
      mask_(std::move(mask)),
      text_base_(image.text_base),
      text_end_(image.text_end()),
      profile_rng_(hash_combine(config_.run_seed, 1)),
      noise_rng_(hash_combine(config_.run_seed, 2)),
      randomize_(config_.mode == Mode::Sphinx && config_.profile_randomization)
{
    if ((config_.mode == Mode::Sphinx) != mask_.has_value())
        throw ModeMismatch(config_.mode == Mode::Sphinx ? "sphinx mode requires a mask"
                                                        : "baseline mode runs without a mask");
    if (mask_ && mask_->size() != image.text.size())
        throw ImageFormatError(fmt::format("mask has {} bits for {} text words", mask_->size(), image.text.size()));
    if (static_cast<std::uint64_t>(image.text_base) + 4ull * image.text.size() > kScratchBase ||
        static_cast<std::uint64_t>(image.data_base) + image.data.size() > kScratchBase)
        throw ImageFormatError("image does not fit below the scratch page");

    state_.mem.assign(kMemorySize, 0);
    for (std::size_t i = 0; i < image.text.size(); ++i) store32(image.text_base + 4 * static_cast<std::uint32_t>(i), image.text[i]);
    std::copy(image.data.begin(), image.data.end(), state_.mem.begin() + image.data_base);
    state_.pc = image.entry;
    state_.regs[2] = kInitialSp;
}

std::uint32_t Machine::load32(std::uint32_t addr) const noexcept
{
    const auto* p = &state_.mem[addr];
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

void Machine::store32(std::uint32_t addr, std::uint32_t value) noexcept
{
    auto* p = &state_.mem[addr];
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(value >> (8 * i));
}

std::uint32_t Machine::checked_address(std::uint32_t addr, const char* what) const
{
    if (addr % 4 != 0) throw GuestTrap(fmt::format("misaligned {} at 0x{:08x}", what, addr));
    if (static_cast<std::uint64_t>(addr) + 4 > kScratchBase)
        throw GuestTrap(fmt::format("{} out of range at 0x{:08x}", what, addr));
    return addr;
}

void Machine::halt(RunStatus status, std::string reason)
{
    trace_.status = status;
    trace_.trap_reason = std::move(reason);
}

void Machine::charge(std::span<const Profile> candidates, std::uint32_t extra_cycles, std::uint32_t data_weight,
                     std::optional<MemEvent> access)
{
    const auto& p = candidates[randomize_ ? profile_rng_.below(candidates.size()) : 0];
    const std::uint32_t cycles = p.cycles + extra_cycles;
    for (std::uint32_t c = 0; c < cycles; ++c) {
        std::uint32_t sample = p.power;
        if (c + 1 == cycles) sample += data_weight;
        if (config_.noise_amplitude > 0) sample += static_cast<std::uint32_t>(noise_rng_.below(config_.noise_amplitude + 1ull));
        trace_.power.push_back(sample);
    }
    state_.cycle += cycles;
    if (access) {
        access->cycle = state_.cycle;
        trace_.mem_events.push_back(*access);
    }
}

void Machine::execute(std::uint32_t pc)
{
    if (pc % 4 != 0 || pc < text_base_ || pc >= text_end_)
        throw GuestTrap(fmt::format("pc 0x{:08x} outside text segment", pc));
    trace_.mem_events.push_back({state_.cycle + 1, MemKind::Fetch, pc});

    const bool real = !mask_ || (*mask_)[(pc - text_base_) / 4];
    if (!real && !config_.shadow_decoys) {
        ++trace_.counts.discarded;
        charge(config_.profiles.decoy_discard(), 0, 0, std::nullopt);
        state_.pc = pc + 4;
        return;
    }

    isa::Instruction in;
    try {
        in = isa::decode(load32(pc));
    } catch (const IllegalInstruction& e) {
        throw GuestTrap(e.what());
    }

    auto& x = state_.regs;
    const std::uint32_t a = x[in.rs1];
    const std::uint32_t b = x[in.rs2];
    const auto imm = static_cast<std::uint32_t>(in.imm);
    std::uint32_t next = pc + 4;
    std::uint32_t value = 0;
    bool writes = false;
    bool taken = false;
    std::uint32_t stored_weight = 0;
    std::optional<MemEvent> access;
    bool exit_now = false;

    auto alu = [&](std::uint32_t v) {
        value = v;
        writes = true;
    };
    auto data_address = [&](std::uint32_t ea, const char* what) {
        return real ? checked_address(ea, what) : kScratchBase + ((ea % kScratchSize) & ~3u);
    };

    switch (in.op) {
    case Mnemonic::Add: alu(a + b); break;
    case Mnemonic::Sub: alu(a - b); break;
    case Mnemonic::And: alu(a & b); break;
    case Mnemonic::Or: alu(a | b); break;
    case Mnemonic::Xor: alu(a ^ b); break;
    case Mnemonic::Slt: alu(static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b)); break;
    case Mnemonic::Sltu: alu(a < b); break;
    case Mnemonic::Sll: alu(a << (b & 31)); break;
    case Mnemonic::Srl: alu(a >> (b & 31)); break;
    case Mnemonic::Sra: alu(static_cast<std::uint32_t>(static_cast<std::int32_t>(a) >> (b & 31))); break;
    case Mnemonic::Addi: alu(a + imm); break;
    case Mnemonic::Andi: alu(a & imm); break;
    case Mnemonic::Ori: alu(a | imm); break;
    case Mnemonic::Xori: alu(a ^ imm); break;
    case Mnemonic::Slti: alu(static_cast<std::int32_t>(a) < in.imm); break;
    case Mnemonic::Sltiu: alu(a < imm); break;
    case Mnemonic::Slli: alu(a << imm); break;
    case Mnemonic::Srli: alu(a >> imm); break;
    case Mnemonic::Srai: alu(static_cast<std::uint32_t>(static_cast<std::int32_t>(a) >> imm)); break;
    case Mnemonic::Lui: alu(imm << 12); break;
    case Mnemonic::Lw: {
        const auto addr = data_address(a + imm, "load");
        alu(load32(addr));
        access = MemEvent{0, MemKind::Read, addr};
        break;
    }
    case Mnemonic::Sw: {
        const auto addr = data_address(a + imm, "store");
        store32(addr, b);
        stored_weight = static_cast<std::uint32_t>(std::popcount(b));
        access = MemEvent{0, MemKind::Write, addr};
        break;
    }
    case Mnemonic::Beq: taken = a == b; break;
    case Mnemonic::Bne: taken = a != b; break;
    case Mnemonic::Blt: taken = static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b); break;
    case Mnemonic::Bge: taken = static_cast<std::int32_t>(a) >= static_cast<std::int32_t>(b); break;
    case Mnemonic::Bltu: taken = a < b; break;
    case Mnemonic::Bgeu: taken = a >= b; break;
    case Mnemonic::Jal:
        alu(pc + 4);
        next = pc + imm;
        break;
    case Mnemonic::Jalr:
        alu(pc + 4);
        next = (a + imm) & ~1u;
        break;
    case Mnemonic::Ecall:
        if (real) {
            if (x[17] == 1) {
                trace_.guest_output += std::to_string(static_cast<std::int32_t>(x[10]));
                trace_.guest_output += '\n';
            } else if (x[17] == 93) {
                trace_.guest_exit_code = static_cast<int>(x[10] & 0xFF);
                exit_now = true;
            } else {
                throw GuestTrap(fmt::format("unsupported ecall {}", static_cast<std::int32_t>(x[17])));
            }
        }
        break;
    }
    if (taken) next = pc + imm;

    std::uint32_t weight = stored_weight;
    if (writes && in.rd != 0) {
        weight = static_cast<std::uint32_t>(std::popcount(value));
        if (real) x[in.rd] = value;
    }

    const auto cls = isa::class_of(in.op);
    auto& counts = real ? trace_.counts.real : trace_.counts.decoy;
    ++counts[static_cast<std::size_t>(cls)];
    if (taken) ++(real ? trace_.counts.real_taken : trace_.counts.decoy_taken);

    charge(config_.profiles.candidates(cls), taken ? 1 : 0, weight, access);
    state_.pc = real ? next : pc + 4;
    if (exit_now) halt(RunStatus::Exited);
}

bool Machine::step()
{
    if (trace_.status != RunStatus::Running) return false;
    if (state_.cycle >= config_.max_cycles) {
        halt(RunStatus::FuelExhausted, fmt::format("fuel exhausted after {} cycles", state_.cycle));
        trace_.total_cycles = state_.cycle;
        return false;
    }
    try {
        execute(state_.pc);
    } catch (const GuestTrap& t) {
        halt(RunStatus::Trapped, t.what());
    }
    state_.regs[0] = 0;
    trace_.total_cycles = state_.cycle;
    return trace_.status == RunStatus::Running;
}

SideChannelTrace Machine::run()
{
    while (step()) {
    }
    return std::move(trace_);
}

// ---------------------------------------------------------------------------

LoadedImage load_image(const image::ImageFile& file, const RunConfig& config)
{
    LoadedImage loaded{file.image, std::nullopt};
    if (config.mode == Mode::Baseline) return loaded;
    if (!file.obfuscated) throw ModeMismatch("sphinx mode requires an obfuscated image");

    const auto key = maskcipher::derive_key(config.device_secret, file.key_id);
    auto mask = maskcipher::decrypt_mask(file.mask, key);
    if (mask.size() != file.image.text.size())
        throw ImageFormatError(fmt::format("mask has {} bits for {} text words", mask.size(), file.image.text.size()));
    if (popcount(mask) != file.real_count)
        throw BadKeyOrCorrupt(fmt::format("mask marks {} real words, header says {}", popcount(mask), file.real_count));
    loaded.mask = std::move(mask);
    return loaded;
}

SideChannelTrace run(const image::ImageFile& file, const RunConfig& config)
{
    auto loaded = load_image(file, config);
    Machine machine(loaded.image, std::move(loaded.mask), config);
    return machine.run();
}

double predicted_cycles(const ExecutionCounts& counts, const RunConfig& config)
{
    const bool randomize = config.mode == Mode::Sphinx && config.profile_randomization;
    const auto& table = config.profiles;
    auto per_instr = [&](std::span<const Profile> cands) {
        if (!randomize) return static_cast<double>(cands.front().cycles);
        double sum = 0;
        for (const auto& p : cands) sum += p.cycles;
        return sum / static_cast<double>(cands.size());
    };

    double total = 0;
    for (auto c : isa::kAllClasses) {
        const auto i = static_cast<std::size_t>(c);
        total += static_cast<double>(counts.real[i] + counts.decoy[i]) * per_instr(table.candidates(c));
    }
    total += static_cast<double>(counts.real_taken + counts.decoy_taken);
    total += static_cast<double>(counts.discarded) * per_instr(table.decoy_discard());
    return total;
}

} // namespace sphinx::vm
