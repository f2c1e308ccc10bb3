#pragma once

#include "sphinx/assembler.hpp"
#include "sphinx/mask.hpp"
#include "sphinx/splitmix64.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace sphinx::obf {

struct ObfuscationParams {
    /// Expected share of decoy words in the emitted text, in [0, 1).
    double entropy = 0.0;
    std::uint64_t seed = 0;
    /// Number of recent real instructions whose class mix decoys imitate.
    int window = 16;
    bool data_shuffle = true;
    int max_pad_words = 4;
};

struct ObfuscationStats {
    std::uint64_t real_count = 0;
    std::uint64_t decoy_count = 0;
    double decoy_fraction = 0.0;
    /// Decoy-run length k -> number of runs. Every real instruction closes
    /// one run (k = 0 when it directly follows another real word); a trailing
    /// run with no real instruction after it is counted as well.
    std::map<std::uint32_t, std::uint64_t> run_length_histogram;
    std::map<isa::InstrClass, std::uint64_t> decoy_class_histogram;

    bool operator==(const ObfuscationStats&) const = default;
};

struct Diversified {
    isa::Program program;
    MaskBits mask;
    ObfuscationStats stats;
};

/// Throws ObfuscationError on an out-of-range parameter.
void validate(const ObfuscationParams& params);

/// Inserts decoys ahead of each real text instruction (each emission step
/// is a decoy with probability `entropy`), keeps labels on their real
/// instruction, aims decoy branches at random text addresses after layout
/// and, when enabled, permutes and pads the data objects. Entropy 0 returns
/// the program unchanged.
Diversified diversify(const isa::Program& program, const ObfuscationParams& params);

/// Draws a decoy whose class follows the class histogram of `history`
/// (SYSTEM excluded; uniform over the eight other classes when the history
/// has no eligible entry). Operands are uniform over their legal ranges.
isa::Instruction gen_decoy(std::span<const isa::InstrClass> history, Rng& rng);

/// `decoys` must hold one instruction per zero bit of `mask`.
ObfuscationStats collect_stats(const MaskBits& mask, std::span<const isa::Instruction> decoys);

/// Text words of a program in layout order, with their decoy flag; used to
/// map the mask onto items.
std::vector<const isa::InstrItem*> text_items(const isa::Program& program);

} // namespace sphinx::obf
