#include "sphinx/assembler.hpp"
#include "sphinx/error.hpp"
#include "sphinx/splitmix64.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <string>

using namespace sphinx;
using namespace sphinx::isa;

namespace {

const InstrItem& only_instr(const Program& p)
{
    const InstrItem* found = nullptr;
    for (const auto& item : p.items)
        if (const auto* ii = std::get_if<InstrItem>(&item)) {
            REQUIRE(found == nullptr);
            found = ii;
        }
    REQUIRE(found != nullptr);
    return *found;
}

std::string asm_error(std::string_view src)
{
    try {
        (void)assemble(parse_assembly(src));
    } catch (const AsmError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("parse examples")
{
    const auto addi = parse_assembly(".text\naddi a0, zero, 7\n");
    const auto& ii = only_instr(addi);
    CHECK(ii.instr == Instruction{Mnemonic::Addi, 10, 0, 0, 7});

    CHECK(parse_assembly("").items.empty());

    const auto loop = parse_assembly(".text\nloop: beq x1, x2, loop\n");
    const auto& br = only_instr(loop);
    CHECK(br.instr.op == Mnemonic::Beq);
    CHECK(br.symbol == "loop");
    CHECK(br.ref == SymbolRef::PcRel);
}

TEST_CASE("assemble examples")
{
    CHECK(assemble(parse_assembly(".text\naddi x1, x0, 5\n")).text == std::vector<std::uint32_t>{0x00500093u});

    const auto img = assemble(parse_assembly(".text\nL: addi x1, x0, 1\naddi x1, x1, 1\nbeq x1, x2, L\n"));
    REQUIRE(img.text.size() == 3);
    CHECK(decode(img.text[2]).imm == -8);
    CHECK(img.text[2] == 0xFE208CE3u);

    CHECK(asm_error("") == "no entry");
    CHECK(asm_error(".text\n").find("no entry") != std::string::npos);
}

TEST_CASE("registers")
{
    CHECK(parse_register("zero") == 0);
    CHECK(parse_register("ra") == 1);
    CHECK(parse_register("sp") == 2);
    CHECK(parse_register("fp") == 8);
    CHECK(parse_register("s0") == 8);
    CHECK(parse_register("a7") == 17);
    CHECK(parse_register("t6") == 31);
    CHECK(parse_register("x31") == 31);
    CHECK_FALSE(parse_register("x32"));
    CHECK_FALSE(parse_register("q1"));
}

TEST_CASE("hi/lo split")
{
    for (std::uint32_t addr : {0u, 0x10000u, 0x107FFu, 0x10800u, 0x10FFCu, 0xFFFFFu, 0x7FFu, 0x800u}) {
        CAPTURE(addr);
        CHECK(static_cast<std::uint32_t>((hi20(addr) << 12) + lo12(addr)) == addr);
        CHECK(lo12(addr) >= -2048);
        CHECK(lo12(addr) <= 2047);
    }
}

TEST_CASE("pseudo-instructions and la")
{
    const auto img = assemble(parse_assembly(R"(
.text
    li t0, 0x12345
    la a0, buf
    mv a1, a0
    j end
    nop
end:
    ret
.data
pad: .word 1, 2, 3
buf: .space 8
)"));
    // li with a nonzero low part: lui + addi
    CHECK(decode(img.text[0]).op == Mnemonic::Lui);
    CHECK(decode(img.text[1]).op == Mnemonic::Addi);
    const auto lui = decode(img.text[2]);
    const auto addi = decode(img.text[3]);
    CHECK((static_cast<std::uint32_t>(lui.imm) << 12) + static_cast<std::uint32_t>(addi.imm) == img.symbols.at("buf"));
    CHECK(img.symbols.at("buf") == kDefaultDataBase + 12);
    CHECK(decode(img.text[4]) == Instruction{Mnemonic::Addi, 11, 10, 0, 0});
    CHECK(decode(img.text[5]) == Instruction{Mnemonic::Jal, 0, 0, 0, 8});
    CHECK(decode(img.text[7]) == Instruction{Mnemonic::Jalr, 0, 1, 0, 0});
    CHECK(img.data.size() == 20);
    CHECK(img.data[4] == 2);
}

TEST_CASE("error reporting")
{
    CHECK(asm_error(".text\nfoo x1, x2\n") == "line 2: unknown mnemonic 'foo'");
    CHECK(asm_error(".text\nL:\nL: nop\n").find("duplicate label") != std::string::npos);
    CHECK(asm_error(".text\nbeq x1, x2, nowhere\n").find("undefined label") != std::string::npos);
    CHECK(asm_error(".text\naddi x1, x0, 4096\n").find("line 2") != std::string::npos);
    CHECK(asm_error(".text\naddi x40, x0, 1\n").find("register") != std::string::npos);
    CHECK(asm_error(".text\nbeq x1, x2, 3\n").find("misaligned") != std::string::npos);

    std::string far = ".text\nbeq x0, x0, far\n";
    for (int i = 0; i < 1100; ++i) far += "nop\n";
    far += "far: nop\n";
    CHECK(asm_error(far).find("branch offset out of range") != std::string::npos);
}

TEST_CASE("entry directive")
{
    const auto img = assemble(parse_assembly(".text\n.entry main\nnop\nmain: nop\n"));
    CHECK(img.entry == 4);
}

TEST_CASE("assembly is deterministic and round-trips through to_text")
{
    const char* src = ".text\nstart: la a0, x\nloop: addi t0, t0, 1\nbne t0, t1, loop\ncall fn\nfn: ret\n.data\nx: .word 5\n";
    const auto p = parse_assembly(src);
    const auto a = assemble(p);
    const auto b = assemble(parse_assembly(src));
    CHECK(a.text == b.text);
    CHECK(a.data == b.data);
    const auto again = assemble(parse_assembly(to_text(p)));
    CHECK(again.text == a.text);
    CHECK(again.data == a.data);
}

TEST_CASE("every branch lands on its label")
{
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 200;
        std::string src = ".text\n";
        std::vector<int> targets;
        for (int i = 0; i < n; ++i) {
            src += fmt::format("L{}: ", i);
            switch (rng.below(4)) {
            case 0: {
                const int t = static_cast<int>(rng.below(n));
                src += fmt::format("bne x{}, x{}, L{}\n", rng.below(32), rng.below(32), t);
                targets.push_back(t);
                break;
            }
            case 1: {
                const int t = static_cast<int>(rng.below(n));
                src += fmt::format("jal x{}, L{}\n", rng.below(32), t);
                targets.push_back(t);
                break;
            }
            default: src += "addi x1, x1, 1\n"; targets.push_back(-1);
            }
        }
        const auto img = assemble(parse_assembly(src));
        REQUIRE(img.text.size() == n);
        for (int i = 0; i < n; ++i) {
            if (targets[i] < 0) continue;
            const auto in = decode(img.text[i]);
            CHECK(4 * i + in.imm == static_cast<std::int32_t>(img.symbols.at(fmt::format("L{}", targets[i]))));
        }
    }
}
