#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace sphinx::corpus {

struct BenchmarkCase {
    std::string_view name;
    std::string_view source;
    std::string_view expected_output;
    int expected_exit = 0;
};

/// Shipped micro-kernels. None of them prints an address.
std::span<const BenchmarkCase> cases() noexcept;
std::optional<BenchmarkCase> find(std::string_view name) noexcept;

} // namespace sphinx::corpus
