#pragma once
// Reaction networks with mass-action propensities. A reaction j is a pair of
// stoichiometric coefficient vectors (reactants l_j, products l~_j) plus a
// rate constant c_j; its propensity in state x is
//     alpha_j(x) = c_j * prod_i binom(x_i, l_{j,i}),
// the number of distinct reactant combinations times the rate constant. Only
// networks that are at most bimolecular (sum_i l_{j,i} <= 2) are accepted.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmekit/multi_index.hpp"
#include "cmekit/polynomial.hpp"

namespace cmekit {

using StateVector = std::vector<std::int64_t>;

struct Reaction {
    std::vector<int> reactants;  // l_j, aligned with species order
    std::vector<int> products;   // l~_j
    double rate = 0.0;           // c_j
    std::vector<int> change;     // v_j = l~_j - l_j, derived

    int reactant_order() const {
        int s = 0;
        for (int v : reactants) s += v;
        return s;
    }
};

struct ReactionNetwork {
    std::vector<std::string> species;
    std::vector<Reaction> reactions;
    StateVector initial_state;

    std::size_t n_species() const { return species.size(); }

    std::size_t species_index(const std::string& name) const {
        for (std::size_t i = 0; i < species.size(); ++i)
            if (species[i] == name) return i;
        throw std::invalid_argument("unknown species '" + name + "'");
    }

    bool operator==(const ReactionNetwork& o) const {
        if (species != o.species || initial_state != o.initial_state ||
            reactions.size() != o.reactions.size())
            return false;
        for (std::size_t j = 0; j < reactions.size(); ++j)
            if (reactions[j].reactants != o.reactions[j].reactants ||
                reactions[j].products != o.reactions[j].products ||
                reactions[j].rate != o.reactions[j].rate)
                return false;
        return true;
    }
};

/// Validate coefficients and derive change vectors. Throws on trimolecular
/// or higher reactions, negative rates, and (by default) no-op reactions.
inline void finalize_network(ReactionNetwork& net, bool allow_noop = false) {
    const std::size_t n = net.species.size();
    if (net.initial_state.empty()) net.initial_state.assign(n, 0);
    if (net.initial_state.size() != n)
        throw std::invalid_argument("initial state size does not match species count");
    for (std::int64_t c : net.initial_state)
        if (c < 0) throw std::invalid_argument("negative initial molecule count");
    for (std::size_t j = 0; j < net.reactions.size(); ++j) {
        Reaction& r = net.reactions[j];
        r.reactants.resize(n, 0);
        r.products.resize(n, 0);
        const std::string where = "reaction " + std::to_string(j + 1);
        for (int v : r.reactants)
            if (v < 0) throw std::invalid_argument(where + ": negative stoichiometry");
        for (int v : r.products)
            if (v < 0) throw std::invalid_argument(where + ": negative stoichiometry");
        if (r.reactant_order() > 2)
            throw std::invalid_argument(where + ": trimolecular reaction not supported");
        if (!(r.rate >= 0.0) || !(r.rate < 1e300))
            throw std::invalid_argument(where + ": rate constant must be finite and >= 0");
        r.change.resize(n);
        bool noop = true;
        for (std::size_t i = 0; i < n; ++i) {
            r.change[i] = r.products[i] - r.reactants[i];
            noop = noop && r.change[i] == 0;
        }
        if (noop && !allow_noop)
            throw std::invalid_argument(where + ": no-op reaction (change vector is zero)");
    }
}

/// Mass-action propensity alpha_j(x). Total on valid inputs: states with
/// x_i < l_{j,i} simply give zero.
inline double propensity(const Reaction& r, const StateVector& x) {
    double a = r.rate;
    for (std::size_t i = 0; i < r.reactants.size(); ++i) {
        switch (r.reactants[i]) {
            case 0: break;
            case 1: a *= static_cast<double>(x[i]); break;
            case 2: a *= 0.5 * static_cast<double>(x[i]) * static_cast<double>(x[i] - 1); break;
            default:  // unreachable after finalize_network
                a *= binomial(static_cast<int>(x[i]), r.reactants[i]);
        }
        if (x[i] < r.reactants[i]) return 0.0;
    }
    return a;
}

inline double total_propensity(const ReactionNetwork& net, const StateVector& x) {
    double s = 0.0;
    for (const Reaction& r : net.reactions) s += propensity(r, x);
    return s;
}

/// alpha_j as an explicit polynomial in the species counts; degree <= 2.
/// Evaluating it at any nonnegative integer state reproduces propensity().
inline StatePolynomial propensity_polynomial(const ReactionNetwork& net, std::size_t j) {
    const Reaction& r = net.reactions.at(j);
    const std::size_t n = net.n_species();
    StatePolynomial p = StatePolynomial::constant(n, r.rate);
    for (std::size_t i = 0; i < n; ++i) {
        if (r.reactants[i] == 1) {
            p = p * StatePolynomial::variable(n, i);
        } else if (r.reactants[i] == 2) {
            StatePolynomial xi = StatePolynomial::variable(n, i);
            p = p * ((xi * xi - xi) * 0.5);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Built-in models.

/// Reversible dimerization 2P <-> P2. The literature source for the t=20
/// benchmark does not fix the rate constants, so they are parameters with
/// placeholder defaults; override via CLI/config for quantitative comparisons.
inline ReactionNetwork make_dimerization(double c1 = 0.00166, double c2 = 0.2) {
    ReactionNetwork net;
    net.species = {"P", "P2"};
    net.reactions.resize(2);
    net.reactions[0].reactants = {2, 0};
    net.reactions[0].products = {0, 1};
    net.reactions[0].rate = c1;
    net.reactions[1].reactants = {0, 1};
    net.reactions[1].products = {2, 0};
    net.reactions[1].rate = c2;
    net.initial_state = {301, 0};
    finalize_network(net);
    return net;
}

/// Exclusive switch: two genes sharing one promotor region. Either product
/// P1 or P2 may bind the promotor and block expression of the other gene.
inline ReactionNetwork make_exclusive_switch() {
    ReactionNetwork net;
    net.species = {"DNA", "P1", "P2", "DNA.P1", "DNA.P2"};
    auto add = [&](std::vector<int> re, std::vector<int> pr, double c) {
        Reaction r;
        r.reactants = std::move(re);
        r.products = std::move(pr);
        r.rate = c;
        net.reactions.push_back(std::move(r));
    };
    //    DNA P1  P2  DNA.P1 DNA.P2
    add({1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, 2.0);    // DNA -> DNA + P1
    add({1, 0, 0, 0, 0}, {1, 0, 1, 0, 0}, 5.0);    // DNA -> DNA + P2
    add({0, 1, 0, 0, 0}, {0, 0, 0, 0, 0}, 0.005);  // P1 -> 0
    add({0, 0, 1, 0, 0}, {0, 0, 0, 0, 0}, 0.005);  // P2 -> 0
    add({1, 1, 0, 0, 0}, {0, 0, 0, 1, 0}, 0.005);  // DNA + P1 -> DNA.P1
    add({1, 0, 1, 0, 0}, {0, 0, 0, 0, 1}, 0.002);  // DNA + P2 -> DNA.P2
    add({0, 0, 0, 1, 0}, {1, 1, 0, 0, 0}, 0.02);   // DNA.P1 -> DNA + P1
    add({0, 0, 0, 0, 1}, {1, 0, 1, 0, 0}, 0.02);   // DNA.P2 -> DNA + P2
    add({0, 0, 0, 1, 0}, {0, 1, 0, 1, 0}, 2.0);    // DNA.P1 -> DNA.P1 + P1
    add({0, 0, 0, 0, 1}, {0, 0, 1, 0, 1}, 5.0);    // DNA.P2 -> DNA.P2 + P2
    net.initial_state = {1, 0, 0, 0, 0};
    finalize_network(net);
    return net;
}

/// Multi-attractor gene network (myeloid differentiation motif): three genes
/// whose proteins bind each other's promotors; 13 species, 24 reactions.
inline ReactionNetwork make_multi_attractor(double cp = 5.0, double cd = 0.1, double cb = 1.0,
                                            double cu = 1.0) {
    ReactionNetwork net;
    net.species = {"MAFAProt",        "DeltaProt",        "PaxProt",          "PaxDna",
                   "MAFADna",         "DeltaDna",         "PaxDnaDeltaProt",  "MAFADnaPaxProt",
                   "MAFADnaMAFAProt", "MAFADnaDeltaProt", "DeltaDnaPaxProt",  "DeltaDnaMAFAProt",
                   "DeltaDnaDeltaProt"};
    const std::size_t n = net.species.size();
    auto idx = [&](const char* name) { return net.species_index(name); };
    auto add = [&](std::vector<std::pair<const char*, int>> re,
                   std::vector<std::pair<const char*, int>> pr, double c) {
        Reaction r;
        r.reactants.assign(n, 0);
        r.products.assign(n, 0);
        for (auto& [name, k] : re) r.reactants[idx(name)] += k;
        for (auto& [name, k] : pr) r.products[idx(name)] += k;
        r.rate = c;
        net.reactions.push_back(std::move(r));
    };
    add({{"PaxDna", 1}}, {{"PaxDna", 1}, {"PaxProt", 1}}, cp);
    add({{"PaxProt", 1}}, {}, cd);
    add({{"PaxDna", 1}, {"DeltaProt", 1}}, {{"PaxDnaDeltaProt", 1}}, cb);
    add({{"PaxDnaDeltaProt", 1}}, {{"PaxDna", 1}, {"DeltaProt", 1}}, cu);
    add({{"MAFADna", 1}}, {{"MAFADna", 1}, {"MAFAProt", 1}}, cp);
    add({{"MAFAProt", 1}}, {}, cd);
    add({{"MAFADna", 1}, {"PaxProt", 1}}, {{"MAFADnaPaxProt", 1}}, cb);
    add({{"MAFADnaPaxProt", 1}}, {{"MAFADna", 1}, {"PaxProt", 1}}, cu);
    add({{"MAFADnaPaxProt", 1}}, {{"MAFADnaPaxProt", 1}, {"MAFAProt", 1}}, cp);
    add({{"MAFADna", 1}, {"MAFAProt", 1}}, {{"MAFADnaMAFAProt", 1}}, cb);
    add({{"MAFADnaMAFAProt", 1}}, {{"MAFADna", 1}, {"MAFAProt", 1}}, cu);
    add({{"MAFADnaMAFAProt", 1}}, {{"MAFADnaMAFAProt", 1}, {"MAFAProt", 1}}, cp);
    add({{"MAFADna", 1}, {"DeltaProt", 1}}, {{"MAFADnaDeltaProt", 1}}, cb);
    add({{"MAFADnaDeltaProt", 1}}, {{"MAFADna", 1}, {"DeltaProt", 1}}, cu);
    add({{"DeltaDna", 1}}, {{"DeltaDna", 1}, {"DeltaProt", 1}}, cp);
    add({{"DeltaProt", 1}}, {}, cd);
    add({{"DeltaDna", 1}, {"PaxProt", 1}}, {{"DeltaDnaPaxProt", 1}}, cb);
    add({{"DeltaDnaPaxProt", 1}}, {{"DeltaDna", 1}, {"PaxProt", 1}}, cu);
    add({{"DeltaDnaPaxProt", 1}}, {{"DeltaDnaPaxProt", 1}, {"DeltaProt", 1}}, cp);
    add({{"DeltaDna", 1}, {"MAFAProt", 1}}, {{"DeltaDnaMAFAProt", 1}}, cb);
    add({{"DeltaDnaMAFAProt", 1}}, {{"DeltaDna", 1}, {"MAFAProt", 1}}, cu);
    add({{"DeltaDna", 1}, {"DeltaProt", 1}}, {{"DeltaDnaDeltaProt", 1}}, cb);
    add({{"DeltaDnaDeltaProt", 1}}, {{"DeltaDna", 1}, {"DeltaProt", 1}}, cu);
    add({{"DeltaDnaDeltaProt", 1}}, {{"DeltaDnaDeltaProt", 1}, {"DeltaProt", 1}}, cp);
    net.initial_state.assign(n, 0);
    net.initial_state[idx("PaxDna")] = 1;
    net.initial_state[idx("MAFADna")] = 1;
    net.initial_state[idx("DeltaDna")] = 1;
    finalize_network(net);
    return net;
}

inline std::vector<std::string> builtin_model_names() {
    return {"dimerization", "exclusive_switch", "multi_attractor"};
}

inline ReactionNetwork builtin_model(const std::string& name) {
    if (name == "dimerization") return make_dimerization();
    if (name == "exclusive_switch") return make_exclusive_switch();
    if (name == "multi_attractor") return make_multi_attractor();
    throw std::invalid_argument("unknown model name '" + name + "'");
}

}  // namespace cmekit
