#pragma once

#include "sphinx/isa.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sphinx::isa {

inline constexpr std::uint32_t kDefaultTextBase = 0x00000000;
inline constexpr std::uint32_t kDefaultDataBase = 0x00010000;

/// How an instruction's immediate is derived from its symbol operand.
enum class SymbolRef : std::uint8_t {
    None,  ///< numeric immediate
    PcRel, ///< branch/jal: label address minus instruction address
    Hi,    ///< lui: upper 20 bits of the absolute address (rounded for a signed %lo)
    Lo,    ///< addi: sign-extended low 12 bits of the absolute address
};

struct LabelDef {
    std::string name;
    int line = 0;
};

struct InstrItem {
    Instruction instr;
    std::string symbol;
    SymbolRef ref = SymbolRef::None;
    bool decoy = false;
    int line = 0;
};

struct Directive {
    enum class Kind : std::uint8_t { Text, Data, Word, Space, Entry };
    Kind kind = Kind::Text;
    std::vector<std::int32_t> words; ///< .word operands
    std::uint32_t size = 0;          ///< .space byte count
    std::string symbol;              ///< .entry label
    int line = 0;
};

using Item = std::variant<LabelDef, InstrItem, Directive>;

struct Program {
    std::vector<Item> items;
};

struct MemoryImage {
    std::uint32_t text_base = kDefaultTextBase;
    std::vector<std::uint32_t> text;
    std::uint32_t data_base = kDefaultDataBase;
    std::vector<std::uint8_t> data;
    std::uint32_t entry = kDefaultTextBase;
    std::map<std::string, std::uint32_t> symbols;

    std::uint32_t text_end() const noexcept { return text_base + 4 * static_cast<std::uint32_t>(text.size()); }
};

/// Parses the assembly dialect: `name:` labels, `#` comments, the
/// directives .text/.data/.word/.space/.entry, decimal or 0x-hex
/// immediates, ABI register names, `%hi(sym)`/`%lo(sym)` operands and the
/// pseudo-instructions nop, li, mv, j, jr, ret, call, beqz, bnez and la.
/// Pseudo-instructions are expanded here; `la rd, sym` becomes
/// `lui rd, %hi(sym)` + `addi rd, rd, %lo(sym)`. Throws AsmError.
Program parse_assembly(std::string_view text);

/// Two-pass layout and encoding. Data labels are word-aligned and .word
/// values are word-aligned within .data. The entry point is the `.entry`
/// label when present, else the start of .text. Throws AsmError.
MemoryImage assemble(const Program& program);

/// Renders a Program back to source that parses to the same items.
std::string to_text(const Program& program);

/// Resolves an ABI or numeric register name ("a0", "x10", "fp").
std::optional<std::uint8_t> parse_register(std::string_view name) noexcept;

/// Upper/lower split used by %hi/%lo so that (hi << 12) + sext(lo) == addr.
std::int32_t hi20(std::uint32_t addr) noexcept;
std::int32_t lo12(std::uint32_t addr) noexcept;

} // namespace sphinx::isa
