#pragma once

#include <cstddef>
#include <vector>

namespace sphinx {

/// One bit per text word: true = real instruction, false = decoy.
using MaskBits = std::vector<bool>;

inline std::size_t popcount(const MaskBits& mask)
{
    std::size_t n = 0;
    for (bool b : mask) n += b ? 1 : 0;
    return n;
}

} // namespace sphinx
