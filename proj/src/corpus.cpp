#include "sphinx/corpus.hpp"

#include <algorithm>
#include <array>

namespace sphinx::corpus {
namespace {

constexpr BenchmarkCase kCases[] = {
#include "corpus_kernels.inc"
};

} // namespace

std::span<const BenchmarkCase> cases() noexcept { return kCases; }

std::optional<BenchmarkCase> find(std::string_view name) noexcept
{
    const auto it = std::ranges::find(kCases, name, &BenchmarkCase::name);
    if (it == std::end(kCases)) return std::nullopt;
    return *it;
}

} // namespace sphinx::corpus
