#include "sphinx/isa.hpp"

#include "sphinx/error.hpp"

#include <fmt/format.h>

namespace sphinx {

IllegalInstruction::IllegalInstruction(unsigned word)
    : Error(fmt::format("illegal instruction 0x{:08x}", word)), word_(word)
{
}

} // namespace sphinx

namespace sphinx::isa {
namespace {

struct OpInfo {
    std::string_view name;
    InstrClass cls;
    Format fmt;
    std::uint32_t opcode;
    std::uint32_t funct3;
    std::uint32_t funct7;
};

// Indexed by Mnemonic.
constexpr std::array<OpInfo, kMnemonicCount> kOps = {{
    {"add", InstrClass::Alu, Format::R, 0x33, 0, 0x00},
    {"sub", InstrClass::Alu, Format::R, 0x33, 0, 0x20},
    {"and", InstrClass::Alu, Format::R, 0x33, 7, 0x00},
    {"or", InstrClass::Alu, Format::R, 0x33, 6, 0x00},
    {"xor", InstrClass::Alu, Format::R, 0x33, 4, 0x00},
    {"slt", InstrClass::Alu, Format::R, 0x33, 2, 0x00},
    {"sltu", InstrClass::Alu, Format::R, 0x33, 3, 0x00},
    {"sll", InstrClass::Alu, Format::R, 0x33, 1, 0x00},
    {"srl", InstrClass::Alu, Format::R, 0x33, 5, 0x00},
    {"sra", InstrClass::Alu, Format::R, 0x33, 5, 0x20},
    {"addi", InstrClass::AluImm, Format::I, 0x13, 0, 0},
    {"andi", InstrClass::AluImm, Format::I, 0x13, 7, 0},
    {"ori", InstrClass::AluImm, Format::I, 0x13, 6, 0},
    {"xori", InstrClass::AluImm, Format::I, 0x13, 4, 0},
    {"slti", InstrClass::AluImm, Format::I, 0x13, 2, 0},
    {"sltiu", InstrClass::AluImm, Format::I, 0x13, 3, 0},
    {"slli", InstrClass::AluImm, Format::IShift, 0x13, 1, 0x00},
    {"srli", InstrClass::AluImm, Format::IShift, 0x13, 5, 0x00},
    {"srai", InstrClass::AluImm, Format::IShift, 0x13, 5, 0x20},
    {"lui", InstrClass::Lui, Format::U, 0x37, 0, 0},
    {"lw", InstrClass::Load, Format::I, 0x03, 2, 0},
    {"sw", InstrClass::Store, Format::S, 0x23, 2, 0},
    {"beq", InstrClass::Branch, Format::B, 0x63, 0, 0},
    {"bne", InstrClass::Branch, Format::B, 0x63, 1, 0},
    {"blt", InstrClass::Branch, Format::B, 0x63, 4, 0},
    {"bge", InstrClass::Branch, Format::B, 0x63, 5, 0},
    {"bltu", InstrClass::Branch, Format::B, 0x63, 6, 0},
    {"bgeu", InstrClass::Branch, Format::B, 0x63, 7, 0},
    {"jal", InstrClass::Jal, Format::J, 0x6F, 0, 0},
    {"jalr", InstrClass::Jalr, Format::I, 0x67, 0, 0},
    {"ecall", InstrClass::System, Format::System, 0x73, 0, 0},
}};

constexpr const OpInfo& info(Mnemonic op) noexcept { return kOps[static_cast<std::size_t>(op)]; }

constexpr std::array<Mnemonic, 10> kAlu = {Mnemonic::Add, Mnemonic::Sub, Mnemonic::And, Mnemonic::Or,
                                           Mnemonic::Xor, Mnemonic::Slt, Mnemonic::Sltu, Mnemonic::Sll,
                                           Mnemonic::Srl, Mnemonic::Sra};
constexpr std::array<Mnemonic, 9> kAluImm = {Mnemonic::Addi, Mnemonic::Andi, Mnemonic::Ori,
                                             Mnemonic::Xori, Mnemonic::Slti, Mnemonic::Sltiu,
                                             Mnemonic::Slli, Mnemonic::Srli, Mnemonic::Srai};
constexpr std::array<Mnemonic, 1> kLui = {Mnemonic::Lui};
constexpr std::array<Mnemonic, 1> kLoad = {Mnemonic::Lw};
constexpr std::array<Mnemonic, 1> kStore = {Mnemonic::Sw};
constexpr std::array<Mnemonic, 6> kBranch = {Mnemonic::Beq, Mnemonic::Bne,  Mnemonic::Blt,
                                             Mnemonic::Bge, Mnemonic::Bltu, Mnemonic::Bgeu};
constexpr std::array<Mnemonic, 1> kJal = {Mnemonic::Jal};
constexpr std::array<Mnemonic, 1> kJalr = {Mnemonic::Jalr};
constexpr std::array<Mnemonic, 1> kSystem = {Mnemonic::Ecall};

constexpr std::array<std::string_view, kClassCount> kClassNames = {
    "ALU", "ALU_IMM", "LUI", "LOAD", "STORE", "BRANCH", "JAL", "JALR", "SYSTEM"};

std::int32_t sign_extend(std::uint32_t value, int bits) noexcept
{
    const std::uint32_t m = 1u << (bits - 1);
    value &= (bits == 32) ? ~0u : ((1u << bits) - 1);
    return static_cast<std::int32_t>((value ^ m) - m);
}

std::optional<Mnemonic> find(std::uint32_t opcode, std::uint32_t funct3, std::uint32_t funct7, Format fmt)
{
    for (std::size_t i = 0; i < kOps.size(); ++i) {
        const auto& o = kOps[i];
        if (o.opcode != opcode) continue;
        if (fmt != Format::U && fmt != Format::J && o.funct3 != funct3) continue;
        if ((fmt == Format::R || fmt == Format::IShift) && o.funct7 != funct7) continue;
        return static_cast<Mnemonic>(i);
    }
    return std::nullopt;
}

} // namespace

InstrClass class_of(Mnemonic op) noexcept { return info(op).cls; }
Format format_of(Mnemonic op) noexcept { return info(op).fmt; }
std::string_view mnemonic_name(Mnemonic op) noexcept { return info(op).name; }

std::optional<Mnemonic> parse_mnemonic(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kOps.size(); ++i)
        if (kOps[i].name == name) return static_cast<Mnemonic>(i);
    return std::nullopt;
}

std::string_view class_name(InstrClass c) noexcept { return kClassNames[static_cast<std::size_t>(c)]; }

std::optional<InstrClass> parse_class(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kClassNames.size(); ++i)
        if (kClassNames[i] == name) return static_cast<InstrClass>(i);
    return std::nullopt;
}

std::span<const Mnemonic> mnemonics_of(InstrClass c) noexcept
{
    switch (c) {
    case InstrClass::Alu: return kAlu;
    case InstrClass::AluImm: return kAluImm;
    case InstrClass::Lui: return kLui;
    case InstrClass::Load: return kLoad;
    case InstrClass::Store: return kStore;
    case InstrClass::Branch: return kBranch;
    case InstrClass::Jal: return kJal;
    case InstrClass::Jalr: return kJalr;
    case InstrClass::System: return kSystem;
    }
    return {};
}

ImmRange imm_range(Format f) noexcept
{
    switch (f) {
    case Format::I:
    case Format::S: return {-2048, 2047, 1};
    case Format::IShift: return {0, 31, 1};
    case Format::B: return {-4096, 4094, 2};
    case Format::U: return {0, 0xFFFFF, 1};
    case Format::J: return {-(1 << 20), (1 << 20) - 2, 2};
    case Format::R:
    case Format::System: return {0, 0, 1};
    }
    return {0, 0, 1};
}

bool imm_fits(Format f, std::int64_t imm) noexcept
{
    const auto r = imm_range(f);
    return imm >= r.lo && imm <= r.hi && imm % r.align == 0;
}

void validate(const Instruction& in)
{
    const auto fmt = format_of(in.op);
    if (in.rd > 31 || in.rs1 > 31 || in.rs2 > 31)
        throw EncodeError(fmt::format("{}: register index out of range", mnemonic_name(in.op)));
    if (!imm_fits(fmt, in.imm))
        throw EncodeError(fmt::format("{}: immediate {} out of range", mnemonic_name(in.op), in.imm));
}

std::uint32_t encode(const Instruction& in)
{
    validate(in);
    const auto& o = info(in.op);
    const std::uint32_t rd = in.rd, rs1 = in.rs1, rs2 = in.rs2;
    const auto imm = static_cast<std::uint32_t>(in.imm);
    switch (o.fmt) {
    case Format::R:
        return (o.funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (o.funct3 << 12) | (rd << 7) | o.opcode;
    case Format::I:
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (o.funct3 << 12) | (rd << 7) | o.opcode;
    case Format::IShift:
        return (o.funct7 << 25) | ((imm & 0x1F) << 20) | (rs1 << 15) | (o.funct3 << 12) | (rd << 7) | o.opcode;
    case Format::S:
        return (((imm >> 5) & 0x7F) << 25) | (rs2 << 20) | (rs1 << 15) | (o.funct3 << 12) |
               ((imm & 0x1F) << 7) | o.opcode;
    case Format::B:
        return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15) |
               (o.funct3 << 12) | (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 1) << 7) | o.opcode;
    case Format::U:
        return ((imm & 0xFFFFF) << 12) | (rd << 7) | o.opcode;
    case Format::J:
        return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) | (((imm >> 11) & 1) << 20) |
               (((imm >> 12) & 0xFF) << 12) | (rd << 7) | o.opcode;
    case Format::System:
        return o.opcode;
    }
    return 0;
}

Instruction decode(std::uint32_t w)
{
    const std::uint32_t opcode = w & 0x7F;
    const std::uint32_t rd = (w >> 7) & 0x1F;
    const std::uint32_t funct3 = (w >> 12) & 0x7;
    const std::uint32_t rs1 = (w >> 15) & 0x1F;
    const std::uint32_t rs2 = (w >> 20) & 0x1F;
    const std::uint32_t funct7 = w >> 25;

    Format fmt;
    switch (opcode) {
    case 0x33: fmt = Format::R; break;
    case 0x13: fmt = (funct3 == 1 || funct3 == 5) ? Format::IShift : Format::I; break;
    case 0x37: fmt = Format::U; break;
    case 0x03:
    case 0x67: fmt = Format::I; break;
    case 0x23: fmt = Format::S; break;
    case 0x63: fmt = Format::B; break;
    case 0x6F: fmt = Format::J; break;
    case 0x73:
        if (w != 0x00000073) throw IllegalInstruction(w);
        return Instruction{Mnemonic::Ecall};
    default: throw IllegalInstruction(w);
    }

    const auto op = find(opcode, funct3, funct7, fmt);
    if (!op) throw IllegalInstruction(w);

    Instruction in{*op};
    switch (fmt) {
    case Format::R:
        in.rd = rd, in.rs1 = rs1, in.rs2 = rs2;
        break;
    case Format::I:
        in.rd = rd, in.rs1 = rs1, in.imm = sign_extend(w >> 20, 12);
        break;
    case Format::IShift:
        in.rd = rd, in.rs1 = rs1, in.imm = static_cast<std::int32_t>(rs2);
        break;
    case Format::S:
        in.rs1 = rs1, in.rs2 = rs2, in.imm = sign_extend((funct7 << 5) | rd, 12);
        break;
    case Format::B:
        in.rs1 = rs1, in.rs2 = rs2;
        in.imm = sign_extend(((w >> 31) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) |
                                 (((w >> 8) & 0xF) << 1),
                             13);
        break;
    case Format::U:
        in.rd = rd, in.imm = static_cast<std::int32_t>(w >> 12);
        break;
    case Format::J:
        in.rd = rd;
        in.imm = sign_extend(((w >> 31) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) |
                                 (((w >> 21) & 0x3FF) << 1),
                             21);
        break;
    case Format::System:
        break;
    }
    return in;
}

std::string to_asm(const Instruction& in)
{
    const auto name = mnemonic_name(in.op);
    switch (format_of(in.op)) {
    case Format::R: return fmt::format("{} x{}, x{}, x{}", name, in.rd, in.rs1, in.rs2);
    case Format::I:
        if (in.op == Mnemonic::Lw || in.op == Mnemonic::Jalr)
            return fmt::format("{} x{}, {}(x{})", name, in.rd, in.imm, in.rs1);
        return fmt::format("{} x{}, x{}, {}", name, in.rd, in.rs1, in.imm);
    case Format::IShift: return fmt::format("{} x{}, x{}, {}", name, in.rd, in.rs1, in.imm);
    case Format::S: return fmt::format("{} x{}, {}(x{})", name, in.rs2, in.imm, in.rs1);
    case Format::B: return fmt::format("{} x{}, x{}, {}", name, in.rs1, in.rs2, in.imm);
    case Format::U: return fmt::format("{} x{}, {}", name, in.rd, in.imm);
    case Format::J: return fmt::format("{} x{}, {}", name, in.rd, in.imm);
    case Format::System: return std::string(name);
    }
    return {};
}

} // namespace sphinx::isa
