#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace sphinx::isa {

enum class Mnemonic : std::uint8_t {
    Add, Sub, And, Or, Xor, Slt, Sltu, Sll, Srl, Sra,
    Addi, Andi, Ori, Xori, Slti, Sltiu, Slli, Srli, Srai,
    Lui,
    Lw,
    Sw,
    Beq, Bne, Blt, Bge, Bltu, Bgeu,
    Jal,
    Jalr,
    Ecall,
};

inline constexpr std::size_t kMnemonicCount = 31;

enum class InstrClass : std::uint8_t { Alu, AluImm, Lui, Load, Store, Branch, Jal, Jalr, System };

inline constexpr std::size_t kClassCount = 9;

inline constexpr std::array<InstrClass, kClassCount> kAllClasses = {
    InstrClass::Alu,   InstrClass::AluImm, InstrClass::Lui,  InstrClass::Load,   InstrClass::Store,
    InstrClass::Branch, InstrClass::Jal,   InstrClass::Jalr, InstrClass::System,
};

/// Encoding format; decides which operand fields are meaningful.
enum class Format : std::uint8_t { R, I, IShift, S, B, U, J, System };

/// A decoded instruction. Operand fields the format does not use are zero,
/// so two instructions compare equal iff they encode to the same word.
/// For LUI, imm holds the 20-bit upper-immediate field (0..0xFFFFF); for
/// branches and JAL it is the byte offset from the instruction's address.
struct Instruction {
    Mnemonic op = Mnemonic::Addi;
    std::uint8_t rd = 0;
    std::uint8_t rs1 = 0;
    std::uint8_t rs2 = 0;
    std::int32_t imm = 0;

    bool operator==(const Instruction&) const = default;
};

InstrClass class_of(Mnemonic op) noexcept;
Format format_of(Mnemonic op) noexcept;

std::string_view mnemonic_name(Mnemonic op) noexcept;
std::optional<Mnemonic> parse_mnemonic(std::string_view name) noexcept;

/// Upper-case class name as used in profile tables ("ALU_IMM", "LOAD", ...).
std::string_view class_name(InstrClass c) noexcept;
std::optional<InstrClass> parse_class(std::string_view name) noexcept;

std::span<const Mnemonic> mnemonics_of(InstrClass c) noexcept;

struct ImmRange {
    std::int32_t lo;
    std::int32_t hi;
    std::int32_t align; // 1, or 2 for branch/jump offsets
};

/// Legal immediate range for a format (R and System take no immediate).
ImmRange imm_range(Format f) noexcept;

bool imm_fits(Format f, std::int64_t imm) noexcept;

/// Throws EncodeError when a field violates its format's constraints.
void validate(const Instruction& instr);

std::uint32_t encode(const Instruction& instr);

/// Throws IllegalInstruction for words outside the supported subset.
Instruction decode(std::uint32_t word);

/// Canonical numeric assembly (`addi x1, x0, 5`, `lw x3, -4(x2)`,
/// `beq x1, x2, -8`). Accepted both by our parser and by standard RISC-V
/// assemblers.
std::string to_asm(const Instruction& instr);

} // namespace sphinx::isa
