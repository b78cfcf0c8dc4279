#pragma once
// Multi-indices over species counts: exponent vectors used both for monomials
// x^alpha = prod_i x_i^{alpha_i} and for labelling raw moments E[X^alpha].
// The canonical ordering everywhere in this library is graded lexicographic:
// lower total order first; within one order, lexicographically larger exponent
// vector first, so for two species the sequence starts
//   (1,0), (0,1), (2,0), (1,1), (0,2), (3,0), ...

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmekit {

using MultiIndex = std::vector<std::uint8_t>;

inline int order_of(const MultiIndex& a) {
    return std::accumulate(a.begin(), a.end(), 0);
}

// Strict weak ordering: graded, then descending lexicographic.
struct GradedLexLess {
    bool operator()(const MultiIndex& a, const MultiIndex& b) const {
        const int oa = order_of(a), ob = order_of(b);
        if (oa != ob) return oa < ob;
        return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    }
};

struct MultiIndexHash {
    std::size_t operator()(const MultiIndex& a) const {
        std::size_t h = 1469598103934665603ull;  // FNV-1a
        for (std::uint8_t v : a) {
            h ^= v;
            h *= 1099511628211ull;
        }
        return h;
    }
};

/// All multi-indices with 1 <= |alpha| <= max_order over n variables, in
/// graded-lex order. The zeroth moment is identically 1 and is never tracked.
inline std::vector<MultiIndex> enumerate_moment_indices(std::size_t n, int max_order) {
    if (n == 0) throw std::invalid_argument("enumerate_moment_indices: no variables");
    if (max_order < 1) throw std::invalid_argument("enumerate_moment_indices: max_order must be >= 1");
    std::vector<MultiIndex> out;
    MultiIndex cur(n, 0);
    // Emit compositions of `rem` into positions pos..n-1, first part largest,
    // which yields exactly the descending-lex order within each grade.
    auto emit = [&](auto&& self, std::size_t pos, int rem) -> void {
        if (pos + 1 == n) {
            cur[pos] = static_cast<std::uint8_t>(rem);
            out.push_back(cur);
            return;
        }
        for (int k = rem; k >= 0; --k) {
            cur[pos] = static_cast<std::uint8_t>(k);
            self(self, pos + 1, rem - k);
        }
        cur[pos] = 0;
    };
    for (int d = 1; d <= max_order; ++d) emit(emit, 0, d);
    return out;
}

/// Exact binomial coefficient as a double (small arguments only).
inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline std::string to_string(const MultiIndex& a, char sep = ':') {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(int(a[i]));
    }
    return s;
}

}  // namespace cmekit
