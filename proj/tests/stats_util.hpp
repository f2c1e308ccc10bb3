#pragma once

#include "sphinx/obfuscator.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

/// Upper-tail p-value of Pearson's chi-square statistic for fully
/// specified cell probabilities (df = cells - 1).
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& probs)
{
    if (observed.size() != probs.size() || observed.size() < 2) throw std::invalid_argument("chi_square_p");
    double n = 0;
    for (double o : observed) n += o;
    double stat = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = n * probs[i];
        stat += (observed[i] - e) * (observed[i] - e) / e;
    }
    const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Goodness of fit of a decoy run-length histogram to P(k) = (1-e) e^k
/// over k = 0..kmax-1 plus a k >= kmax tail cell.
inline double geometric_fit_p(const std::map<std::uint32_t, std::uint64_t>& hist, double e, std::uint32_t kmax = 5)
{
    std::vector<double> observed(kmax + 1, 0.0), probs(kmax + 1, 0.0);
    for (const auto& [k, n] : hist) observed[std::min(k, kmax)] += static_cast<double>(n);
    for (std::uint32_t k = 0; k < kmax; ++k) probs[k] = (1 - e) * std::pow(e, k);
    probs[kmax] = std::pow(e, kmax);
    return chi_square_p(observed, probs);
}

/// A straight-line program of `n` real instructions over several classes.
inline std::string straight_line_program(int n)
{
    static const char* kLines[] = {
        "addi t0, t0, 1", "add t1, t1, t0", "lw t2, 0(sp)", "sw t1, 4(sp)", "xori t3, t1, 85",
        "lui t4, 4660",   "sll t5, t1, t0", "slti t6, t1, -3",
    };
    std::string src = ".text\n";
    for (int i = 0; i < n; ++i) (src += kLines[i % 8]) += '\n';
    return src;
}

} // namespace testutil
