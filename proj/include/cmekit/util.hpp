#pragma once
// Small shared helpers: strict numeric parsing, shortest round-trip double
// formatting, string utilities, and a compensated accumulator.

#include <charconv>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace cmekit {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

/// Parse a complete token as a double; anything left over is an error.
inline double parse_double_strict(std::string_view tok, const std::string& context) {
    tok = trim(tok);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw std::invalid_argument(context + ": malformed number '" + std::string(tok) + "'");
    return value;
}

inline std::int64_t parse_int_strict(std::string_view tok, const std::string& context) {
    tok = trim(tok);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw std::invalid_argument(context + ": malformed integer '" + std::string(tok) + "'");
    return value;
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto body = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    };
    if (!head(s[0])) return false;
    for (std::size_t i = 1; i < s.size(); ++i)
        if (!body(s[i])) return false;
    return true;
}

/// Kahan–Neumaier compensated summation; used for probability-mass ledgers
/// where millions of O(delta) contributions accumulate.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

}  // namespace cmekit
