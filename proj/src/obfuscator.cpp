#include "sphinx/obfuscator.hpp"

#include "sphinx/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace sphinx::obf {
namespace {

using isa::Directive;
using isa::Format;
using isa::InstrClass;
using isa::InstrItem;
using isa::Instruction;
using isa::Item;
using isa::LabelDef;
using isa::Program;

constexpr std::array<InstrClass, 8> kDecoyClasses = {
    InstrClass::Alu,   InstrClass::AluImm, InstrClass::Lui, InstrClass::Load,
    InstrClass::Store, InstrClass::Branch, InstrClass::Jal, InstrClass::Jalr,
};

// Branch reach in words on either side (B: +-4 KiB, J: +-1 MiB).
constexpr std::int64_t kBranchReachWords = 1024;
constexpr std::int64_t kJalReachWords = 1 << 18;

std::uint8_t draw_reg(Rng& rng) { return static_cast<std::uint8_t>(rng.below(32)); }

std::int32_t draw_imm(Format f, Rng& rng)
{
    const auto r = isa::imm_range(f);
    if (f == Format::B || f == Format::J) {
        // Instruction-aligned offsets only; every text word is 4 bytes.
        return static_cast<std::int32_t>(rng.between((r.lo + 3) / 4, r.hi / 4) * 4);
    }
    return static_cast<std::int32_t>(rng.between(r.lo, r.hi));
}

bool is_text_switch(const Item& item, bool& in_text)
{
    if (const auto* d = std::get_if<Directive>(&item)) {
        if (d->kind == Directive::Kind::Text) in_text = true;
        if (d->kind == Directive::Kind::Data) in_text = false;
        return d->kind == Directive::Kind::Text || d->kind == Directive::Kind::Data;
    }
    return false;
}

bool is_data_content(const Item& item)
{
    const auto* d = std::get_if<Directive>(&item);
    return d && (d->kind == Directive::Kind::Word || d->kind == Directive::Kind::Space);
}

// Moves every data object (a run of labels followed by its .word/.space
// content) to a single trailing .data section in random order, each
// preceded by 0..max_pad random padding words. Text order is untouched.
Program shuffle_data(const Program& in, Rng& rng, int max_pad)
{
    Program out;
    std::vector<std::vector<Item>> objects;
    bool in_text = true;
    bool object_has_content = false;
    for (const auto& item : in.items) {
        const bool was_text = in_text;
        if (is_text_switch(item, in_text)) {
            if (in_text) out.items.push_back(item);
            continue;
        }
        if (was_text || (std::holds_alternative<Directive>(item) && !is_data_content(item))) {
            out.items.push_back(item);
            continue;
        }
        if (std::holds_alternative<LabelDef>(item)) {
            if (objects.empty() || object_has_content) {
                objects.emplace_back();
                object_has_content = false;
            }
        } else if (objects.empty()) {
            objects.emplace_back();
        }
        objects.back().push_back(item);
        object_has_content = object_has_content || is_data_content(item);
    }
    if (objects.empty()) return out;

    for (std::size_t i = objects.size(); i > 1; --i) std::swap(objects[i - 1], objects[rng.below(i)]);

    Directive data;
    data.kind = Directive::Kind::Data;
    out.items.push_back(std::move(data));
    for (auto& object : objects) {
        const auto pad = static_cast<std::uint32_t>(rng.between(0, max_pad));
        if (pad > 0) {
            Directive space;
            space.kind = Directive::Kind::Space;
            space.size = 4 * pad;
            out.items.push_back(std::move(space));
        }
        for (auto& item : object) out.items.push_back(std::move(item));
    }
    return out;
}

struct TextLayout {
    std::vector<std::size_t> word_item; // text word index -> item index
    std::map<std::string, std::size_t, std::less<>> label_word;
};

TextLayout layout_text(const Program& p)
{
    TextLayout layout;
    bool in_text = true;
    for (std::size_t i = 0; i < p.items.size(); ++i) {
        const auto& item = p.items[i];
        if (is_text_switch(item, in_text)) continue;
        if (const auto* label = std::get_if<LabelDef>(&item)) {
            if (in_text) layout.label_word[label->name] = layout.word_item.size();
        } else if (std::holds_alternative<InstrItem>(item)) {
            layout.word_item.push_back(i);
        }
    }
    return layout;
}

// Removes decoys between real branches and their targets until every real
// branch is encodable again.
void fix_branch_ranges(Program& p)
{
    for (;;) {
        const auto layout = layout_text(p);
        std::vector<bool> drop(p.items.size(), false);
        bool changed = false;
        for (std::size_t w = 0; w < layout.word_item.size(); ++w) {
            const auto& ii = std::get<InstrItem>(p.items[layout.word_item[w]]);
            if (ii.decoy || ii.ref != isa::SymbolRef::PcRel) continue;
            const auto it = layout.label_word.find(ii.symbol);
            if (it == layout.label_word.end()) continue;
            const auto target = static_cast<std::int64_t>(it->second);
            const auto offset = (target - static_cast<std::int64_t>(w)) * 4;
            if (isa::imm_fits(isa::format_of(ii.instr.op), offset)) continue;

            const auto lo = std::min<std::int64_t>(w, target);
            const auto hi = std::max<std::int64_t>(w, target);
            bool removed = false;
            for (auto k = lo; k < hi && k < static_cast<std::int64_t>(layout.word_item.size()); ++k) {
                const auto idx = layout.word_item[static_cast<std::size_t>(k)];
                if (std::get<InstrItem>(p.items[idx]).decoy && !drop[idx]) {
                    drop[idx] = true;
                    removed = true;
                }
            }
            if (!removed)
                throw ObfuscationError(
                    fmt::format("line {}: branch to '{}' out of range even without decoys", ii.line, ii.symbol));
            changed = true;
        }
        if (!changed) return;
        std::vector<Item> kept;
        kept.reserve(p.items.size());
        for (std::size_t i = 0; i < p.items.size(); ++i)
            if (!drop[i]) kept.push_back(std::move(p.items[i]));
        p.items = std::move(kept);
    }
}

void aim_decoy_branches(Program& p, Rng& rng)
{
    const auto layout = layout_text(p);
    const auto n = static_cast<std::int64_t>(layout.word_item.size());
    for (std::int64_t w = 0; w < n; ++w) {
        auto& ii = std::get<InstrItem>(p.items[layout.word_item[static_cast<std::size_t>(w)]]);
        if (!ii.decoy) continue;
        const auto cls = isa::class_of(ii.instr.op);
        if (cls != InstrClass::Branch && cls != InstrClass::Jal) continue;
        const auto reach = cls == InstrClass::Branch ? kBranchReachWords : kJalReachWords;
        const auto lo = std::max<std::int64_t>(0, w - reach);
        const auto hi = std::min<std::int64_t>(n - 1, w + reach - 1);
        const auto target = rng.between(lo, hi);
        ii.instr.imm = static_cast<std::int32_t>((target - w) * 4);
    }
}

} // namespace

void validate(const ObfuscationParams& params)
{
    if (!std::isfinite(params.entropy) || params.entropy < 0.0 || params.entropy >= 1.0)
        throw ObfuscationError(fmt::format("entropy must be in [0, 1), got {}", params.entropy));
    if (params.window < 1) throw ObfuscationError("window must be at least 1");
    if (params.max_pad_words < 0) throw ObfuscationError("max_pad_words must be non-negative");
}

std::vector<const InstrItem*> text_items(const Program& program)
{
    std::vector<const InstrItem*> out;
    for (const auto& item : program.items)
        if (const auto* ii = std::get_if<InstrItem>(&item)) out.push_back(ii);
    return out;
}

Instruction gen_decoy(std::span<const InstrClass> history, Rng& rng)
{
    std::array<std::uint64_t, isa::kClassCount> counts{};
    std::uint64_t total = 0;
    for (auto c : history) {
        if (c == InstrClass::System) continue;
        ++counts[static_cast<std::size_t>(c)];
        ++total;
    }

    InstrClass cls = kDecoyClasses.front();
    if (total == 0) {
        cls = kDecoyClasses[rng.below(kDecoyClasses.size())];
    } else {
        auto r = rng.below(total);
        for (auto c : kDecoyClasses) {
            const auto n = counts[static_cast<std::size_t>(c)];
            if (r < n) {
                cls = c;
                break;
            }
            r -= n;
        }
    }

    const auto ops = isa::mnemonics_of(cls);
    Instruction in{ops[rng.below(ops.size())]};
    const auto fmt = isa::format_of(in.op);
    switch (fmt) {
    case Format::R:
        in.rd = draw_reg(rng), in.rs1 = draw_reg(rng), in.rs2 = draw_reg(rng);
        break;
    case Format::I:
    case Format::IShift:
        in.rd = draw_reg(rng), in.rs1 = draw_reg(rng), in.imm = draw_imm(fmt, rng);
        break;
    case Format::S:
    case Format::B:
        in.rs1 = draw_reg(rng), in.rs2 = draw_reg(rng), in.imm = draw_imm(fmt, rng);
        break;
    case Format::U:
    case Format::J:
        in.rd = draw_reg(rng), in.imm = draw_imm(fmt, rng);
        break;
    case Format::System:
        break;
    }
    return in;
}

ObfuscationStats collect_stats(const MaskBits& mask, std::span<const Instruction> decoys)
{
    ObfuscationStats stats;
    stats.real_count = popcount(mask);
    stats.decoy_count = mask.size() - stats.real_count;
    if (decoys.size() != stats.decoy_count)
        throw ObfuscationError(
            fmt::format("mask has {} decoy bits but {} decoys were given", stats.decoy_count, decoys.size()));
    if (!mask.empty()) stats.decoy_fraction = static_cast<double>(stats.decoy_count) / static_cast<double>(mask.size());

    std::uint32_t run = 0;
    for (bool real : mask) {
        if (real) {
            ++stats.run_length_histogram[run];
            run = 0;
        } else {
            ++run;
        }
    }
    if (run > 0) ++stats.run_length_histogram[run];

    for (const auto& d : decoys) ++stats.decoy_class_histogram[isa::class_of(d.op)];
    return stats;
}

Diversified diversify(const Program& program, const ObfuscationParams& params)
{
    validate(params);
    (void)isa::assemble(program);

    Diversified result;
    if (params.entropy == 0.0) {
        result.program = program;
        result.mask.assign(text_items(program).size(), true);
        result.stats = collect_stats(result.mask, {});
        return result;
    }

    SplitMix64 streams(params.seed);
    Rng emit_rng(streams());
    Rng decoy_rng(streams());
    Rng layout_rng(streams());
    Rng target_rng(streams());

    Program& out = result.program;
    std::vector<LabelDef> pending;
    std::vector<InstrClass> history;
    const auto window = static_cast<std::size_t>(params.window);
    bool in_text = true;

    auto flush_labels = [&] {
        for (auto& l : pending) out.items.emplace_back(std::move(l));
        pending.clear();
    };

    for (const auto& item : program.items) {
        if (is_text_switch(item, in_text)) {
            flush_labels();
            out.items.push_back(item);
        } else if (const auto* label = std::get_if<LabelDef>(&item)) {
            if (in_text)
                pending.push_back(*label);
            else
                out.items.push_back(item);
        } else if (const auto* ii = std::get_if<InstrItem>(&item)) {
            while (emit_rng.bernoulli(params.entropy)) {
                InstrItem decoy;
                decoy.instr = gen_decoy(history, decoy_rng);
                decoy.decoy = true;
                out.items.emplace_back(std::move(decoy));
            }
            flush_labels();
            out.items.push_back(item);
            history.push_back(isa::class_of(ii->instr.op));
            if (history.size() > window) history.erase(history.begin());
        } else {
            flush_labels();
            out.items.push_back(item);
        }
    }
    flush_labels();

    if (params.data_shuffle) out = shuffle_data(out, layout_rng, params.max_pad_words);
    fix_branch_ranges(out);
    aim_decoy_branches(out, target_rng);

    std::vector<Instruction> decoys;
    for (const auto* ii : text_items(out)) {
        result.mask.push_back(!ii->decoy);
        if (ii->decoy) decoys.push_back(ii->instr);
    }
    result.stats = collect_stats(result.mask, decoys);
    return result;
}

} // namespace sphinx::obf
