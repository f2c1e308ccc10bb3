#include "sphinx/assembler.hpp"

#include "sphinx/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <set>

namespace sphinx::isa {
namespace {

constexpr std::array<std::pair<std::string_view, std::uint8_t>, 33> kAbiNames = {{
    {"zero", 0}, {"ra", 1},   {"sp", 2},   {"gp", 3},   {"tp", 4},  {"t0", 5},  {"t1", 6},
    {"t2", 7},   {"s0", 8},   {"fp", 8},   {"s1", 9},   {"a0", 10}, {"a1", 11}, {"a2", 12},
    {"a3", 13},  {"a4", 14},  {"a5", 15},  {"a6", 16},  {"a7", 17}, {"s2", 18}, {"s3", 19},
    {"s4", 20},  {"s5", 21},  {"s6", 22},  {"s7", 23},  {"s8", 24}, {"s9", 25}, {"s10", 26},
    {"s11", 27}, {"t3", 28},  {"t4", 29},  {"t5", 30},  {"t6", 31},
}};

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }

bool is_identifier(std::string_view s)
{
    if (s.empty() || !is_ident_start(s.front())) return false;
    return std::all_of(s.begin(), s.end(), is_ident_char);
}

std::optional<std::int64_t> parse_int(std::string_view s)
{
    s = trim(s);
    bool neg = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        neg = s.front() == '-';
        s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    if (s.empty()) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v > 0xFFFFFFFFull + 1) return std::nullopt;
    return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
}

std::vector<std::string_view> split_operands(std::string_view s)
{
    std::vector<std::string_view> out;
    s = trim(s);
    if (s.empty()) return out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

class LineParser {
public:
    LineParser(Program& program, int line, bool& in_text) : program_(program), line_(line), in_text_(in_text) {}

    [[noreturn]] void fail(const std::string& msg) const { throw AsmError(line_, msg); }

    std::uint8_t reg(std::string_view s) const
    {
        const auto name = lower(trim(s));
        if (name.size() > 1 && name[0] == 'x' && std::isdigit(static_cast<unsigned char>(name[1]))) {
            auto v = parse_int(std::string_view(name).substr(1));
            if (!v) fail(fmt::format("bad register '{}'", name));
            if (*v < 0 || *v > 31) fail(fmt::format("register out of range '{}'", name));
            return static_cast<std::uint8_t>(*v);
        }
        if (auto r = parse_register(name)) return *r;
        fail(fmt::format("unknown register '{}'", name));
    }

    std::int32_t imm(std::string_view s, Format f) const
    {
        auto v = parse_int(s);
        if (!v) fail(fmt::format("expected immediate, got '{}'", s));
        if (!imm_fits(f, *v)) fail(fmt::format("immediate out of range '{}'", s));
        return static_cast<std::int32_t>(*v);
    }

    // `%hi(sym)` / `%lo(sym)`; returns the symbol or empty when not of that form.
    static std::string reloc(std::string_view s, std::string_view fn)
    {
        s = trim(s);
        if (s.size() < fn.size() + 3 || s.substr(0, fn.size()) != fn || s[fn.size()] != '(' || s.back() != ')')
            return {};
        return std::string(trim(s.substr(fn.size() + 1, s.size() - fn.size() - 2)));
    }

    // `imm(reg)` memory operand.
    std::pair<std::int32_t, std::uint8_t> mem(std::string_view s) const
    {
        const auto open = s.find('(');
        if (open == std::string_view::npos || s.back() != ')') fail(fmt::format("expected imm(reg), got '{}'", s));
        const auto off = trim(s.substr(0, open));
        const std::int32_t value = off.empty() ? 0 : imm(off, Format::I);
        return {value, reg(s.substr(open + 1, s.size() - open - 2))};
    }

    void need(const std::vector<std::string_view>& ops, std::size_t n, std::string_view mnem) const
    {
        if (ops.size() != n) fail(fmt::format("'{}' expects {} operand(s), got {}", mnem, n, ops.size()));
    }

    void emit(Instruction in, std::string symbol = {}, SymbolRef ref = SymbolRef::None)
    {
        if (!in_text_) fail("instruction outside .text");
        program_.items.emplace_back(InstrItem{in, std::move(symbol), ref, false, line_});
    }

    // Branch/jump target: a label or a numeric byte offset.
    void emit_target(Instruction in, std::string_view target)
    {
        target = trim(target);
        if (auto v = parse_int(target)) {
            if (*v % 2 != 0) fail(fmt::format("misaligned target (offset {})", *v));
            in.imm = imm(target, format_of(in.op));
            emit(in);
        } else if (is_identifier(target)) {
            emit(in, std::string(target), SymbolRef::PcRel);
        } else {
            fail(fmt::format("bad branch target '{}'", target));
        }
    }

    void emit_li(std::uint8_t rd, std::string_view value)
    {
        auto v = parse_int(value);
        if (!v || *v < INT32_MIN || *v > 0xFFFFFFFFll) fail(fmt::format("bad li immediate '{}'", value));
        const auto word = static_cast<std::uint32_t>(*v);
        const auto sv = static_cast<std::int32_t>(word);
        if (sv >= -2048 && sv <= 2047) {
            emit({Mnemonic::Addi, rd, 0, 0, sv});
            return;
        }
        emit({Mnemonic::Lui, rd, 0, 0, hi20(word)});
        if (lo12(word) != 0) emit({Mnemonic::Addi, rd, rd, 0, lo12(word)});
    }

    void instruction(std::string_view mnem_raw, std::string_view rest)
    {
        const auto mnem = lower(mnem_raw);
        const auto ops = split_operands(rest);

        if (mnem == "nop") {
            need(ops, 0, mnem);
            emit({Mnemonic::Addi});
            return;
        }
        if (mnem == "li") {
            need(ops, 2, mnem);
            emit_li(reg(ops[0]), ops[1]);
            return;
        }
        if (mnem == "mv") {
            need(ops, 2, mnem);
            emit({Mnemonic::Addi, reg(ops[0]), reg(ops[1]), 0, 0});
            return;
        }
        if (mnem == "j") {
            need(ops, 1, mnem);
            emit_target({Mnemonic::Jal, 0}, ops[0]);
            return;
        }
        if (mnem == "call") {
            need(ops, 1, mnem);
            emit_target({Mnemonic::Jal, 1}, ops[0]);
            return;
        }
        if (mnem == "jr") {
            need(ops, 1, mnem);
            emit({Mnemonic::Jalr, 0, reg(ops[0]), 0, 0});
            return;
        }
        if (mnem == "ret") {
            need(ops, 0, mnem);
            emit({Mnemonic::Jalr, 0, 1, 0, 0});
            return;
        }
        if (mnem == "beqz" || mnem == "bnez") {
            need(ops, 2, mnem);
            emit_target({mnem == "beqz" ? Mnemonic::Beq : Mnemonic::Bne, 0, reg(ops[0]), 0, 0}, ops[1]);
            return;
        }
        if (mnem == "la") {
            need(ops, 2, mnem);
            const auto rd = reg(ops[0]);
            const auto sym = trim(ops[1]);
            if (!is_identifier(sym)) fail(fmt::format("bad symbol '{}'", sym));
            emit({Mnemonic::Lui, rd, 0, 0, 0}, std::string(sym), SymbolRef::Hi);
            emit({Mnemonic::Addi, rd, rd, 0, 0}, std::string(sym), SymbolRef::Lo);
            return;
        }

        const auto op = parse_mnemonic(mnem);
        if (!op) fail(fmt::format("unknown mnemonic '{}'", mnem));
        Instruction in{*op};
        switch (format_of(*op)) {
        case Format::R:
            need(ops, 3, mnem);
            in.rd = reg(ops[0]), in.rs1 = reg(ops[1]), in.rs2 = reg(ops[2]);
            emit(in);
            break;
        case Format::I:
            if (*op == Mnemonic::Lw) {
                need(ops, 2, mnem);
                in.rd = reg(ops[0]);
                std::tie(in.imm, in.rs1) = mem(ops[1]);
                emit(in);
            } else if (*op == Mnemonic::Jalr) {
                if (ops.size() == 1) {
                    in.rd = 1, in.rs1 = reg(ops[0]);
                } else if (ops.size() == 2) {
                    in.rd = reg(ops[0]);
                    std::tie(in.imm, in.rs1) = mem(ops[1]);
                } else {
                    need(ops, 3, mnem);
                    in.rd = reg(ops[0]), in.rs1 = reg(ops[1]), in.imm = imm(ops[2], Format::I);
                }
                emit(in);
            } else {
                need(ops, 3, mnem);
                in.rd = reg(ops[0]), in.rs1 = reg(ops[1]);
                if (auto sym = reloc(ops[2], "%lo"); !sym.empty()) {
                    if (*op != Mnemonic::Addi) fail("%lo is only valid with addi");
                    emit(in, sym, SymbolRef::Lo);
                } else {
                    in.imm = imm(ops[2], Format::I);
                    emit(in);
                }
            }
            break;
        case Format::IShift:
            need(ops, 3, mnem);
            in.rd = reg(ops[0]), in.rs1 = reg(ops[1]), in.imm = imm(ops[2], Format::IShift);
            emit(in);
            break;
        case Format::S:
            need(ops, 2, mnem);
            in.rs2 = reg(ops[0]);
            std::tie(in.imm, in.rs1) = mem(ops[1]);
            emit(in);
            break;
        case Format::B:
            need(ops, 3, mnem);
            in.rs1 = reg(ops[0]), in.rs2 = reg(ops[1]);
            emit_target(in, ops[2]);
            break;
        case Format::U:
            need(ops, 2, mnem);
            in.rd = reg(ops[0]);
            if (auto sym = reloc(ops[1], "%hi"); !sym.empty()) {
                emit(in, sym, SymbolRef::Hi);
            } else {
                in.imm = imm(ops[1], Format::U);
                emit(in);
            }
            break;
        case Format::J:
            if (ops.size() == 1) {
                in.rd = 1;
                emit_target(in, ops[0]);
            } else {
                need(ops, 2, mnem);
                in.rd = reg(ops[0]);
                emit_target(in, ops[1]);
            }
            break;
        case Format::System:
            need(ops, 0, mnem);
            emit(in);
            break;
        }
    }

    void directive(std::string_view name, std::string_view rest)
    {
        const auto ops = split_operands(rest);
        Directive d;
        d.line = line_;
        if (name == ".text" || name == ".data") {
            need(ops, 0, name);
            d.kind = name == ".text" ? Directive::Kind::Text : Directive::Kind::Data;
            in_text_ = name == ".text";
        } else if (name == ".word") {
            if (in_text_) fail(".word outside .data");
            if (ops.empty()) fail(".word expects at least one value");
            d.kind = Directive::Kind::Word;
            for (auto op : ops) {
                auto v = parse_int(op);
                if (!v || *v < INT32_MIN || *v > 0xFFFFFFFFll) fail(fmt::format("bad .word value '{}'", op));
                d.words.push_back(static_cast<std::int32_t>(static_cast<std::uint32_t>(*v)));
            }
        } else if (name == ".space") {
            if (in_text_) fail(".space outside .data");
            need(ops, 1, name);
            auto v = parse_int(ops[0]);
            if (!v || *v < 0 || *v > 0x100000) fail(fmt::format("bad .space size '{}'", ops[0]));
            d.kind = Directive::Kind::Space;
            d.size = static_cast<std::uint32_t>(*v);
        } else if (name == ".entry") {
            need(ops, 1, name);
            if (!is_identifier(ops[0])) fail(fmt::format("bad entry symbol '{}'", ops[0]));
            d.kind = Directive::Kind::Entry;
            d.symbol = std::string(ops[0]);
        } else {
            fail(fmt::format("unknown directive '{}'", name));
        }
        program_.items.emplace_back(std::move(d));
    }

private:
    Program& program_;
    int line_;
    bool& in_text_;
};

std::string format_with(const Instruction& in, const std::string& imm_text)
{
    const auto name = mnemonic_name(in.op);
    switch (format_of(in.op)) {
    case Format::I: return fmt::format("{} x{}, x{}, {}", name, in.rd, in.rs1, imm_text);
    case Format::B: return fmt::format("{} x{}, x{}, {}", name, in.rs1, in.rs2, imm_text);
    case Format::U:
    case Format::J: return fmt::format("{} x{}, {}", name, in.rd, imm_text);
    default: return to_asm(in);
    }
}

struct Symbol {
    std::uint32_t addr;
    bool text;
};

std::uint32_t align4(std::uint32_t v) { return (v + 3) & ~3u; }

} // namespace

std::optional<std::uint8_t> parse_register(std::string_view name) noexcept
{
    for (const auto& [abi, idx] : kAbiNames)
        if (abi == name) return idx;
    if (name.size() >= 2 && name[0] == 'x') {
        unsigned v = 0;
        auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), v);
        if (ec == std::errc{} && ptr == name.data() + name.size() && v < 32) return static_cast<std::uint8_t>(v);
    }
    return std::nullopt;
}

std::int32_t hi20(std::uint32_t addr) noexcept { return static_cast<std::int32_t>(((addr + 0x800u) >> 12) & 0xFFFFF); }

std::int32_t lo12(std::uint32_t addr) noexcept
{
    const std::uint32_t low = addr & 0xFFF;
    return static_cast<std::int32_t>((low ^ 0x800u)) - 0x800;
}

Program parse_assembly(std::string_view text)
{
    Program program;
    std::set<std::string, std::less<>> labels;
    bool in_text = true;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;

        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        LineParser parser(program, line_no, in_text);

        // Leading `name:` labels, possibly several on one line.
        for (auto colon = line.find(':'); colon != std::string_view::npos; colon = line.find(':')) {
            const auto name = trim(line.substr(0, colon));
            if (!is_identifier(name)) break;
            if (!labels.emplace(name).second) parser.fail(fmt::format("duplicate label '{}'", name));
            program.items.emplace_back(LabelDef{std::string(name), line_no});
            line = trim(line.substr(colon + 1));
        }
        if (line.empty()) continue;

        std::size_t split = 0;
        while (split < line.size() && !std::isspace(static_cast<unsigned char>(line[split]))) ++split;
        const auto head = line.substr(0, split);
        const auto rest = line.substr(split);
        if (head.front() == '.')
            parser.directive(head, rest);
        else if (is_identifier(head))
            parser.instruction(head, rest);
        else
            parser.fail(fmt::format("syntax error near '{}'", line));
    }
    return program;
}

MemoryImage assemble(const Program& program)
{
    MemoryImage image;
    std::map<std::string, Symbol, std::less<>> symbols;
    std::string entry_symbol;
    int entry_line = 0;

    // Pass 1: addresses.
    {
        bool in_text = true;
        std::uint32_t pc = image.text_base;
        std::uint32_t data_off = 0;
        for (const auto& item : program.items) {
            if (const auto* label = std::get_if<LabelDef>(&item)) {
                if (!in_text) data_off = align4(data_off);
                const Symbol sym{in_text ? pc : image.data_base + data_off, in_text};
                if (!symbols.emplace(label->name, sym).second)
                    throw AsmError(label->line, fmt::format("duplicate label '{}'", label->name));
            } else if (std::holds_alternative<InstrItem>(item)) {
                if (!in_text) throw AsmError(std::get<InstrItem>(item).line, "instruction outside .text");
                pc += 4;
            } else {
                const auto& d = std::get<Directive>(item);
                switch (d.kind) {
                case Directive::Kind::Text: in_text = true; break;
                case Directive::Kind::Data: in_text = false; break;
                case Directive::Kind::Word:
                    if (in_text) throw AsmError(d.line, ".word outside .data");
                    data_off = align4(data_off) + 4 * static_cast<std::uint32_t>(d.words.size());
                    break;
                case Directive::Kind::Space:
                    if (in_text) throw AsmError(d.line, ".space outside .data");
                    data_off += d.size;
                    break;
                case Directive::Kind::Entry:
                    entry_symbol = d.symbol;
                    entry_line = d.line;
                    break;
                }
            }
        }
    }

    // Pass 2: encoding.
    std::uint32_t pc = image.text_base;
    for (const auto& item : program.items) {
        if (const auto* ii = std::get_if<InstrItem>(&item)) {
            Instruction in = ii->instr;
            if (ii->ref != SymbolRef::None) {
                auto it = symbols.find(ii->symbol);
                if (it == symbols.end()) throw AsmError(ii->line, fmt::format("undefined label '{}'", ii->symbol));
                const auto target = it->second;
                switch (ii->ref) {
                case SymbolRef::PcRel:
                    if (!target.text)
                        throw AsmError(ii->line, fmt::format("branch target '{}' is not in .text", ii->symbol));
                    in.imm = static_cast<std::int32_t>(target.addr - pc);
                    break;
                case SymbolRef::Hi: in.imm = hi20(target.addr); break;
                case SymbolRef::Lo: in.imm = lo12(target.addr); break;
                case SymbolRef::None: break;
                }
            }
            const auto fmt = format_of(in.op);
            if (fmt == Format::B || fmt == Format::J) {
                if (in.imm % 2 != 0) throw AsmError(ii->line, fmt::format("misaligned target (offset {})", in.imm));
                if (!imm_fits(fmt, in.imm))
                    throw AsmError(ii->line, fmt::format("branch offset out of range ({})", in.imm));
            }
            try {
                image.text.push_back(encode(in));
            } catch (const EncodeError& e) {
                throw AsmError(ii->line, e.what());
            }
            pc += 4;
        } else if (const auto* d = std::get_if<Directive>(&item)) {
            if (d->kind == Directive::Kind::Word) {
                image.data.resize(align4(static_cast<std::uint32_t>(image.data.size())), 0);
                for (auto w : d->words) {
                    const auto u = static_cast<std::uint32_t>(w);
                    for (int b = 0; b < 4; ++b) image.data.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
                }
            } else if (d->kind == Directive::Kind::Space) {
                image.data.resize(image.data.size() + d->size, 0);
            }
        } else if (std::holds_alternative<LabelDef>(item)) {
            // Data labels are word-aligned; materialize the alignment padding.
            const auto& name = std::get<LabelDef>(item).name;
            const auto& sym = symbols.at(name);
            if (!sym.text) image.data.resize(sym.addr - image.data_base, 0);
        }
    }

    if (image.text_end() > image.data_base) throw AsmError(0, "text segment overlaps data segment");

    if (!entry_symbol.empty()) {
        auto it = symbols.find(entry_symbol);
        if (it == symbols.end()) throw AsmError(entry_line, fmt::format("undefined label '{}'", entry_symbol));
        if (!it->second.text || it->second.addr >= image.text_end())
            throw AsmError(entry_line, fmt::format("entry '{}' is not an instruction in .text", entry_symbol));
        image.entry = it->second.addr;
    } else {
        if (image.text.empty()) throw AsmError(0, "no entry");
        image.entry = image.text_base;
    }

    for (const auto& [name, sym] : symbols) image.symbols.emplace(name, sym.addr);
    return image;
}

std::string to_text(const Program& program)
{
    std::string out;
    for (const auto& item : program.items) {
        if (const auto* label = std::get_if<LabelDef>(&item)) {
            out += label->name + ":\n";
        } else if (const auto* ii = std::get_if<InstrItem>(&item)) {
            out += "    ";
            switch (ii->ref) {
            case SymbolRef::None: out += to_asm(ii->instr); break;
            case SymbolRef::PcRel: out += format_with(ii->instr, ii->symbol); break;
            case SymbolRef::Hi: out += format_with(ii->instr, "%hi(" + ii->symbol + ")"); break;
            case SymbolRef::Lo: out += format_with(ii->instr, "%lo(" + ii->symbol + ")"); break;
            }
            out += '\n';
        } else {
            const auto& d = std::get<Directive>(item);
            switch (d.kind) {
            case Directive::Kind::Text: out += ".text\n"; break;
            case Directive::Kind::Data: out += ".data\n"; break;
            case Directive::Kind::Word: {
                out += "    .word ";
                for (std::size_t i = 0; i < d.words.size(); ++i) {
                    if (i) out += ", ";
                    out += std::to_string(d.words[i]);
                }
                out += '\n';
                break;
            }
            case Directive::Kind::Space: out += fmt::format("    .space {}\n", d.size); break;
            case Directive::Kind::Entry: out += ".entry " + d.symbol + "\n"; break;
            }
        }
    }
    return out;
}

} // namespace sphinx::isa
