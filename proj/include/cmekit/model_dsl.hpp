#pragma once
// Plain-text reaction network format. One reaction per line:
//
//     # comment
//     species: P, P2            (optional; fixes species order)
//     2 P -> P2 @ 0.00166
//     P2 -> 2 P @ 0.2
//     0 -> A @ 5.0              ('0' denotes an empty side)
//     init: P=301, P2=0
//
// Identifiers are [A-Za-z_][A-Za-z0-9_.]*; '#' starts a comment; blank lines
// and CRLF endings are tolerated. Without a species header, species are
// numbered in order of first appearance. parse -> print -> parse is identity.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cmekit/network.hpp"
#include "cmekit/util.hpp"

namespace cmekit {

class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

namespace detail {

// One side of a reaction arrow: "2 P + Q" or "0".
inline std::map<std::string, int> parse_side(std::string_view side, int lineno) {
    std::map<std::string, int> coeffs;
    side = trim(side);
    if (side == "0") return coeffs;
    if (side.empty()) throw ParseError(lineno, "empty reaction side (use '0')");
    for (std::string_view term : split(side, '+')) {
        term = trim(term);
        if (term.empty()) throw ParseError(lineno, "empty term in reaction side");
        int count = 1;
        std::string name;
        // Optional leading integer coefficient, separated by whitespace.
        std::size_t ws = term.find_first_of(" \t");
        if (ws != std::string_view::npos) {
            std::string_view head = trim(term.substr(0, ws));
            std::string_view tail = trim(term.substr(ws + 1));
            if (!head.empty() && std::isdigit(static_cast<unsigned char>(head[0]))) {
                count = static_cast<int>(parse_int_strict(head, "line " + std::to_string(lineno)));
                if (count <= 0) throw ParseError(lineno, "stoichiometric coefficient must be positive");
                name = std::string(tail);
            } else {
                throw ParseError(lineno, "malformed term '" + std::string(term) + "'");
            }
        } else {
            name = std::string(term);
        }
        if (!is_identifier(name))
            throw ParseError(lineno, "invalid species name '" + name + "'");
        coeffs[name] += count;
    }
    return coeffs;
}

}  // namespace detail

/// Parse the network DSL. Errors carry the offending line number.
inline ReactionNetwork parse_network(const std::string& text) {
    ReactionNetwork net;
    std::map<std::string, std::size_t> index;
    bool explicit_species = false;
    bool saw_init = false;
    std::map<std::string, std::int64_t> init;

    auto intern = [&](const std::string& name, int lineno) -> std::size_t {
        auto it = index.find(name);
        if (it != index.end()) return it->second;
        if (explicit_species)
            throw ParseError(lineno, "species '" + name + "' not in species header");
        index.emplace(name, net.species.size());
        net.species.push_back(name);
        return net.species.size() - 1;
    };

    struct RawReaction {
        std::map<std::string, int> re, pr;
        double rate;
    };
    std::vector<RawReaction> raw;

    int lineno = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view s = line;
        if (std::size_t hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;

        if (s.substr(0, 8) == "species:") {
            if (explicit_species) throw ParseError(lineno, "duplicate species header");
            if (!net.species.empty())
                throw ParseError(lineno, "species header must precede reactions");
            explicit_species = true;
            for (std::string_view tok : split(s.substr(8), ',')) {
                std::string name(trim(tok));
                if (!is_identifier(name))
                    throw ParseError(lineno, "invalid species name '" + name + "'");
                if (index.count(name)) throw ParseError(lineno, "duplicate species '" + name + "'");
                index.emplace(name, net.species.size());
                net.species.push_back(name);
            }
            if (net.species.empty()) throw ParseError(lineno, "empty species header");
            continue;
        }

        if (s.substr(0, 5) == "init:") {
            if (saw_init) throw ParseError(lineno, "duplicate init line");
            saw_init = true;
            for (std::string_view tok : split(s.substr(5), ',')) {
                tok = trim(tok);
                if (tok.empty()) continue;
                std::size_t eq = tok.find('=');
                if (eq == std::string_view::npos)
                    throw ParseError(lineno, "expected Name=count in init line");
                std::string name(trim(tok.substr(0, eq)));
                std::int64_t count =
                    parse_int_strict(tok.substr(eq + 1), "line " + std::to_string(lineno));
                if (count < 0) throw ParseError(lineno, "negative initial count");
                if (init.count(name))
                    throw ParseError(lineno, "duplicate init entry for '" + name + "'");
                intern(name, lineno);
                init[name] = count;
            }
            continue;
        }

        // Reaction line: side -> side @ rate
        std::size_t arrow = s.find("->");
        if (arrow == std::string_view::npos)
            throw ParseError(lineno, "expected '->' in reaction");
        std::size_t at = s.rfind('@');
        if (at == std::string_view::npos || at < arrow)
            throw ParseError(lineno, "expected '@ rate' after products");
        auto re = detail::parse_side(s.substr(0, arrow), lineno);
        auto pr = detail::parse_side(s.substr(arrow + 2, at - arrow - 2), lineno);
        double rate = parse_double_strict(s.substr(at + 1), "line " + std::to_string(lineno));
        if (!(rate >= 0.0))
            throw ParseError(lineno, "rate constant must be >= 0");
        int order = 0;
        for (const auto& [name, c] : re) order += c;
        if (order > 2) throw ParseError(lineno, "trimolecular reaction not supported");
        if (re == pr) throw ParseError(lineno, "no-op reaction (change vector is zero)");
        for (const auto& [name, c] : re) intern(name, lineno);
        for (const auto& [name, c] : pr) intern(name, lineno);
        raw.push_back({std::move(re), std::move(pr), rate});
    }

    if (net.species.empty()) throw ParseError(lineno, "no species defined");

    const std::size_t n = net.species.size();
    for (RawReaction& rr : raw) {
        Reaction r;
        r.reactants.assign(n, 0);
        r.products.assign(n, 0);
        for (const auto& [name, c] : rr.re) r.reactants[index.at(name)] = c;
        for (const auto& [name, c] : rr.pr) r.products[index.at(name)] = c;
        r.rate = rr.rate;
        net.reactions.push_back(std::move(r));
    }
    net.initial_state.assign(n, 0);
    for (const auto& [name, c] : init) net.initial_state[index.at(name)] = c;

    try {
        finalize_network(net);
    } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
    }
    return net;
}

/// Canonical text form; parse(print(net)) == net.
inline std::string print_network(const ReactionNetwork& net) {
    std::ostringstream os;
    os << "species: ";
    for (std::size_t i = 0; i < net.species.size(); ++i)
        os << (i ? ", " : "") << net.species[i];
    os << "\n";
    auto side = [&](const std::vector<int>& coeffs) {
        std::string s;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            if (coeffs[i] == 0) continue;
            if (!s.empty()) s += " + ";
            if (coeffs[i] != 1) s += std::to_string(coeffs[i]) + " ";
            s += net.species[i];
        }
        return s.empty() ? std::string("0") : s;
    };
    for (const Reaction& r : net.reactions)
        os << side(r.reactants) << " -> " << side(r.products) << " @ " << format_double(r.rate)
           << "\n";
    os << "init: ";
    for (std::size_t i = 0; i < net.species.size(); ++i)
        os << (i ? ", " : "") << net.species[i] << "=" << net.initial_state[i];
    os << "\n";
    return os.str();
}

}  // namespace cmekit
