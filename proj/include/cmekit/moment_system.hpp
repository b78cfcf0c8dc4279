#pragma once
// Raw-moment equations for mass-action reaction networks, closed at a chosen
// order M by setting all central moments of order > M to zero.
//
// Derivation uses the generator identity
//     d/dt E[x^a] = sum_j E[ alpha_j(X) * ((X + v_j)^a - X^a) ],
// whose right-hand side is a linear combination of raw moments (the monomials
// of the expanded polynomial are read as raw-moment symbols). For an
// at-most-bimolecular network the right-hand side of an order-|a| equation
// involves raw moments up to order |a|+1, so closing at order M replaces every
// order-(M+1) symbol; the substitution is implemented recursively and also
// handles deeper overshoot.
//
// Zeroing the central moment E[(X-mu)^b] = sum_{g<=b} prod_i C(b_i,g_i)
// (-mu)^(b-g) E[X^g] and solving for the top term gives
//     E[X^b] = -sum_{g<b} (-1)^(|b|-|g|) prod_i C(b_i,g_i) mu^(b-g) E[X^g],
// a polynomial in the *tracked* moments (mu_i = E[X_i] are themselves tracked
// symbols), which makes the closed system polynomial rather than linear.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmekit/errors.hpp"
#include "cmekit/multi_index.hpp"
#include "cmekit/network.hpp"
#include "cmekit/ode.hpp"
#include "cmekit/polynomial.hpp"
#include "cmekit/util.hpp"

namespace cmekit {

/// A polynomial in tracked-moment symbols. Symbol ids are positions in the
/// tracked-index list of the system that produced the polynomial; a term is
/// coeff * prod of E[x^tracked[id]] over its (sorted, possibly repeated) ids.
struct MomentPolynomial {
    struct Term {
        double coeff = 0.0;
        std::vector<std::uint32_t> symbols;  // sorted ascending, with repetition
    };
    std::vector<Term> terms;  // sorted by symbol vector; no zero coefficients

    double evaluate(const std::vector<double>& y) const {
        KahanSum s;
        for (const Term& t : terms) {
            double v = t.coeff;
            for (std::uint32_t id : t.symbols) v *= y[id];
            s.add(v);
        }
        return s.value();
    }
};

/// d/dt E[x^alpha] as a linear combination of raw moments: the returned
/// polynomial's monomial beta carries the coefficient of E[X^beta] (the empty
/// monomial is the constant term). No closure is applied.
inline StatePolynomial derive_raw_moment_ode(const ReactionNetwork& net, const MultiIndex& alpha) {
    const std::size_t n = net.n_species();
    if (alpha.size() != n)
        throw std::invalid_argument("derive_raw_moment_ode: multi-index length " +
                                    std::to_string(alpha.size()) + " != species count " +
                                    std::to_string(n));
    StatePolynomial rhs(n);
    for (std::size_t j = 0; j < net.reactions.size(); ++j) {
        const Reaction& r = net.reactions[j];
        // (x + v_j)^alpha as a polynomial in x.
        StatePolynomial shifted = StatePolynomial::constant(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] == 0) continue;
            StatePolynomial lin = StatePolynomial::variable(n, i);
            lin += StatePolynomial::constant(n, static_cast<double>(r.change[i]));
            for (int p = 0; p < int(alpha[i]); ++p) shifted = shifted * lin;
        }
        shifted.add_term(alpha, -1.0);  // (x+v)^alpha - x^alpha
        rhs += propensity_polynomial(net, j) * shifted;
    }
    return rhs;
}

/// Evaluate a linear raw-moment form against a moment functional
/// (moment(beta) must return E[X^beta]; the empty index means 1).
template <typename MomentFn>
double apply_linear_form(const StatePolynomial& form, MomentFn&& moment) {
    KahanSum s;
    for (const auto& [beta, c] : form.terms()) s.add(c * moment(beta));
    return s.value();
}

/// A closed system of moment equations: one polynomial right-hand side per
/// tracked raw moment, stored in a flat compiled form for fast evaluation.
class MomentODESystem {
  public:
    std::vector<std::string> species;
    int order = 0;
    std::vector<MultiIndex> tracked;                                 // graded-lex
    std::unordered_map<MultiIndex, std::uint32_t, MultiIndexHash> index;
    std::size_t substituted_symbols = 0;  // distinct above-order raw moments closed out

    std::size_t n_equations() const { return tracked.size(); }

    std::uint32_t index_of(const MultiIndex& m) const {
        auto it = index.find(m);
        if (it == index.end())
            throw std::out_of_range("MomentODESystem: moment " + to_string(m) + " is not tracked");
        return it->second;
    }

    /// Evaluate all right-hand sides at the raw-moment vector y.
    void rhs_eval(const std::vector<double>& y, std::vector<double>& dy) const {
        dy.resize(tracked.size());
        for (std::size_t k = 0; k < tracked.size(); ++k) {
            double acc = 0.0;
            for (std::uint32_t t = eq_off_[k]; t < eq_off_[k + 1]; ++t) {
                double v = coeff_[t];
                for (std::uint32_t s = term_off_[t]; s < term_off_[t + 1]; ++s) v *= y[sym_[s]];
                acc += v;
            }
            dy[k] = acc;
        }
    }

    /// Materialize equation k as a MomentPolynomial (small systems/printing).
    MomentPolynomial equation(std::size_t k) const {
        if (k >= tracked.size()) throw std::out_of_range("MomentODESystem::equation");
        MomentPolynomial p;
        for (std::uint32_t t = eq_off_[k]; t < eq_off_[k + 1]; ++t) {
            MomentPolynomial::Term term;
            term.coeff = coeff_[t];
            term.symbols.assign(sym_.begin() + term_off_[t], sym_.begin() + term_off_[t + 1]);
            p.terms.push_back(std::move(term));
        }
        return p;
    }

    std::size_t total_terms() const { return coeff_.size(); }

    // Compiled-form builders (used by close_system).
    void begin_equations() {
        eq_off_.assign(1, 0);
        term_off_.assign(1, 0);
        coeff_.clear();
        sym_.clear();
    }
    void append_equation(const std::map<std::vector<std::uint32_t>, double>& acc) {
        for (const auto& [syms, c] : acc) {
            if (c == 0.0) continue;
            coeff_.push_back(c);
            sym_.insert(sym_.end(), syms.begin(), syms.end());
            term_off_.push_back(static_cast<std::uint32_t>(sym_.size()));
        }
        eq_off_.push_back(static_cast<std::uint32_t>(coeff_.size()));
    }

  private:
    // Equation k owns terms [eq_off_[k], eq_off_[k+1]); term t owns symbol ids
    // [term_off_[t], term_off_[t+1]).
    std::vector<double> coeff_;
    std::vector<std::uint32_t> sym_;
    std::vector<std::uint32_t> term_off_{0};
    std::vector<std::uint32_t> eq_off_{0};
};

namespace detail {

using SymTermMap = std::map<std::vector<std::uint32_t>, double>;

/// Closure substitution for an above-order raw moment beta: its expansion as a
/// polynomial in tracked symbols, derived from "central moment of beta is
/// zero". Recursive so that overshoot past order M+1 also resolves.
class ClosureExpander {
  public:
    ClosureExpander(const std::unordered_map<MultiIndex, std::uint32_t, MultiIndexHash>& index,
                    int order)
        : index_(index), order_(order) {}

    const SymTermMap& expand(const MultiIndex& beta) {
        if (auto it = cache_.find(beta); it != cache_.end()) return it->second;
        SymTermMap acc;
        const std::size_t n = beta.size();
        MultiIndex gamma(n, 0);
        // Odometer over all gamma <= beta componentwise.
        while (true) {
            if (gamma != beta) {
                int drop = order_of(beta) - order_of(gamma);
                double coeff = (drop % 2 != 0) ? 1.0 : -1.0;  // -(-1)^drop
                for (std::size_t i = 0; i < n; ++i)
                    coeff *= binomial(int(beta[i]), int(gamma[i]));
                std::vector<std::uint32_t> mu_syms;
                for (std::size_t i = 0; i < n; ++i)
                    for (int p = 0; p < int(beta[i]) - int(gamma[i]); ++p)
                        mu_syms.push_back(static_cast<std::uint32_t>(i));  // E[x_i] ids are 0..n-1
                const int og = order_of(gamma);
                if (og == 0) {
                    acc[mu_syms] += coeff;
                } else if (og <= order_) {
                    std::vector<std::uint32_t> syms = mu_syms;
                    insert_sorted(syms, index_.at(gamma));
                    acc[syms] += coeff;
                } else {
                    const SymTermMap sub = expand(gamma);  // copy: recursion may rehash cache_
                    for (const auto& [s2, d] : sub) {
                        std::vector<std::uint32_t> merged;
                        merged.reserve(mu_syms.size() + s2.size());
                        std::merge(mu_syms.begin(), mu_syms.end(), s2.begin(), s2.end(),
                                   std::back_inserter(merged));
                        acc[merged] += coeff * d;
                    }
                }
            }
            // Advance the odometer.
            std::size_t i = 0;
            for (; i < n; ++i) {
                if (gamma[i] < beta[i]) {
                    ++gamma[i];
                    break;
                }
                gamma[i] = 0;
            }
            if (i == n) break;
        }
        return cache_.emplace(beta, std::move(acc)).first->second;
    }

  private:
    static void insert_sorted(std::vector<std::uint32_t>& v, std::uint32_t x) {
        v.insert(std::upper_bound(v.begin(), v.end(), x), x);
    }

    const std::unordered_map<MultiIndex, std::uint32_t, MultiIndexHash>& index_;
    int order_;
    std::unordered_map<MultiIndex, SymTermMap, MultiIndexHash> cache_;
};

}  // namespace detail

/// Build the order-M closed moment system for a network. Every raw moment of
/// order > M appearing in a right-hand side is replaced by its zero-central-
/// moment expansion in tracked moments.
inline MomentODESystem close_system(const ReactionNetwork& net, int order) {
    if (order < 1) throw std::invalid_argument("close_system: order must be >= 1");
    const std::size_t n = net.n_species();
    MomentODESystem sys;
    sys.species = net.species;
    sys.order = order;
    sys.tracked = enumerate_moment_indices(n, order);
    sys.index.reserve(sys.tracked.size());
    for (std::uint32_t k = 0; k < sys.tracked.size(); ++k) sys.index.emplace(sys.tracked[k], k);

    detail::ClosureExpander expander(sys.index, order);
    std::set<MultiIndex, GradedLexLess> substituted;
    sys.begin_equations();
    std::map<std::vector<std::uint32_t>, double> acc;
    for (const MultiIndex& alpha : sys.tracked) {
        const StatePolynomial form = derive_raw_moment_ode(net, alpha);
        acc.clear();
        for (const auto& [beta, c] : form.terms()) {
            const int ob = order_of(beta);
            if (ob == 0) {
                acc[{}] += c;
            } else if (ob <= order) {
                acc[std::vector<std::uint32_t>{sys.index.at(beta)}] += c;
            } else {
                substituted.insert(beta);
                for (const auto& [syms, d] : expander.expand(beta)) acc[syms] += c * d;
            }
        }
        sys.append_equation(acc);
    }
    sys.substituted_symbols = substituted.size();
    return sys;
}

/// Raw moments with their defining multi-indices, the time they refer to, and
/// any realizability warnings attached by the integrator.
struct MomentVector {
    int order = 0;
    double time = 0.0;
    std::vector<std::string> species;
    std::vector<MultiIndex> indices;  // graded-lex
    std::vector<double> values;
    std::vector<std::string> warnings;

    double at(const MultiIndex& m) const {
        for (std::size_t k = 0; k < indices.size(); ++k)
            if (indices[k] == m) return values[k];
        throw std::out_of_range("MomentVector: moment " + to_string(m) + " not present");
    }

    /// Raw moments 1..max_order of one species: [E[x], E[x^2], ...].
    std::vector<double> species_moments(std::size_t sp, int max_order) const {
        if (sp >= species_count())
            throw std::out_of_range("MomentVector: species index out of range");
        std::vector<double> out;
        MultiIndex m(species_count(), 0);
        for (int k = 1; k <= max_order; ++k) {
            m[sp] = static_cast<std::uint8_t>(k);
            out.push_back(at(m));
        }
        return out;
    }

    std::size_t species_count() const {
        return indices.empty() ? species.size() : indices.front().size();
    }
};

/// Moments of a deterministic initial state: E[X^a] = x0^a.
inline MomentVector init_moments_from_state(const ReactionNetwork& net, int order) {
    MomentVector mv;
    mv.order = order;
    mv.time = 0.0;
    mv.species = net.species;
    mv.indices = enumerate_moment_indices(net.n_species(), order);
    mv.values.reserve(mv.indices.size());
    for (const MultiIndex& a : mv.indices) {
        double v = 1.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (int p = 0; p < int(a[i]); ++p) v *= static_cast<double>(net.initial_state[i]);
        mv.values.push_back(v);
    }
    return mv;
}

namespace detail {

inline void check_realizability(MomentVector& mv) {
    const std::size_t n = mv.species_count();
    MultiIndex m(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(m.begin(), m.end(), 0);
        m[i] = 1;
        const double mu = mv.at(m);
        if (mu < -1e-9 * std::max(1.0, std::abs(mu)))
            mv.warnings.push_back("negative mean for species " + mv.species[i] + ": " +
                                  format_double(mu));
        if (mv.order < 2) continue;
        m[i] = 2;
        const double m2 = mv.at(m);
        const double var = m2 - mu * mu;
        if (var < -1e-9 * std::max(1.0, std::abs(m2)))
            mv.warnings.push_back("negative variance for species " + mv.species[i] + ": " +
                                  format_double(var));
        // Even diagonal raw moments must be nonnegative.
        for (int k = 4; k <= mv.order; k += 2) {
            m[i] = static_cast<std::uint8_t>(k);
            const double mk = mv.at(m);
            if (mk < -1e-9 * std::max(1.0, std::abs(mk)))
                mv.warnings.push_back("negative raw moment E[" + mv.species[i] + "^" +
                                      std::to_string(k) + "]: " + format_double(mk));
        }
    }
}

}  // namespace detail

using MomentCheckpointFn = std::function<void(const MomentVector&)>;

/// Integrate the closed moment equations from the state in `init` to t_end.
/// `checkpoints` (strictly increasing, <= t_end) fire the callback with the
/// moments at each listed time. Realizability warnings accumulate on results.
inline MomentVector integrate_moments(const MomentODESystem& sys, const MomentVector& init,
                                      double t_end, const OdeOptions& opt = {},
                                      const std::vector<double>& checkpoints = {},
                                      const MomentCheckpointFn& on_checkpoint = {}) {
    if (init.values.size() != sys.n_equations())
        throw std::invalid_argument("integrate_moments: initial vector has " +
                                    std::to_string(init.values.size()) + " entries, system has " +
                                    std::to_string(sys.n_equations()));
    if (t_end < init.time)
        throw std::invalid_argument("integrate_moments: t_end is before the initial time");
    double prev = init.time;
    for (double c : checkpoints) {
        if (c <= prev)
            throw std::invalid_argument("integrate_moments: checkpoints must be strictly "
                                        "increasing and after the initial time");
        if (c > t_end) throw std::invalid_argument("integrate_moments: checkpoint after t_end");
        prev = c;
    }

    OdeRhs f = [&sys](double, const std::vector<double>& y, std::vector<double>& dy) {
        sys.rhs_eval(y, dy);
    };

    MomentVector cur = init;
    std::vector<double> events = checkpoints;
    if (events.empty() || events.back() != t_end) events.push_back(t_end);
    for (double target : events) {
        integrate_ode(f, cur.time, target, cur.values, opt);
        cur.time = target;
        detail::check_realizability(cur);
        if (on_checkpoint &&
            std::find(checkpoints.begin(), checkpoints.end(), target) != checkpoints.end())
            on_checkpoint(cur);
    }
    return cur;
}

/// Central moments from raw moments over the same index set. Order-1 entries
/// keep the raw means (the true order-1 central moments are identically zero),
/// so the transform is invertible.
inline MomentVector central_from_raw(const MomentVector& raw) {
    std::map<MultiIndex, double, GradedLexLess> lut;
    for (std::size_t k = 0; k < raw.indices.size(); ++k) lut[raw.indices[k]] = raw.values[k];
    const std::size_t n = raw.species_count();
    std::vector<double> mu(n, 0.0);
    MultiIndex e(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(e.begin(), e.end(), 0);
        e[i] = 1;
        mu[i] = lut.at(e);
    }
    MomentVector out = raw;
    for (std::size_t k = 0; k < out.indices.size(); ++k) {
        const MultiIndex& b = out.indices[k];
        if (order_of(b) < 2) continue;  // means pass through
        KahanSum s;
        MultiIndex g(n, 0);
        while (true) {  // odometer over g <= b
            double c = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                c *= binomial(int(b[i]), int(g[i]));
                for (int p = 0; p < int(b[i]) - int(g[i]); ++p) c *= -mu[i];
            }
            const double rg = order_of(g) == 0 ? 1.0 : lut.at(g);
            s.add(c * rg);
            std::size_t i = 0;
            for (; i < n; ++i) {
                if (g[i] < b[i]) {
                    ++g[i];
                    break;
                }
                g[i] = 0;
            }
            if (i == n) break;
        }
        out.values[k] = s.value();
    }
    return out;
}

/// Inverse of central_from_raw (order-1 entries of `central` are the means).
inline MomentVector raw_from_central(const MomentVector& central) {
    std::map<MultiIndex, double, GradedLexLess> lut;
    for (std::size_t k = 0; k < central.indices.size(); ++k)
        lut[central.indices[k]] = central.values[k];
    const std::size_t n = central.species_count();
    std::vector<double> mu(n, 0.0);
    MultiIndex e(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(e.begin(), e.end(), 0);
        e[i] = 1;
        mu[i] = lut.at(e);
    }
    MomentVector out = central;
    for (std::size_t k = 0; k < out.indices.size(); ++k) {
        const MultiIndex& b = out.indices[k];
        if (order_of(b) < 2) continue;
        KahanSum s;
        MultiIndex g(n, 0);
        while (true) {
            const int og = order_of(g);
            // True central moments: order 0 is 1, order 1 is 0.
            const double cg = og == 0 ? 1.0 : (og == 1 ? 0.0 : lut.at(g));
            if (cg != 0.0) {
                double c = cg;
                for (std::size_t i = 0; i < n; ++i) {
                    c *= binomial(int(b[i]), int(g[i]));
                    for (int p = 0; p < int(b[i]) - int(g[i]); ++p) c *= mu[i];
                }
                s.add(c);
            }
            std::size_t i = 0;
            for (; i < n; ++i) {
                if (g[i] < b[i]) {
                    ++g[i];
                    break;
                }
                g[i] = 0;
            }
            if (i == n) break;
        }
        out.values[k] = s.value();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text formats.

/// Moment-symbol name like "E[P1^2*P2]".
inline std::string moment_symbol_name(const MultiIndex& m, const std::vector<std::string>& species) {
    std::string s = "E[";
    bool any = false;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] == 0) continue;
        if (any) s += '*';
        s += species[i];
        if (m[i] > 1) {
            s += '^';
            s += std::to_string(int(m[i]));
        }
        any = true;
    }
    if (!any) s += '1';
    s += ']';
    return s;
}

/// Human-readable closed system, one "d/dt E[...] = ..." line per equation.
inline void print_moment_system(const MomentODESystem& sys, std::ostream& os) {
    for (std::size_t k = 0; k < sys.n_equations(); ++k) {
        os << "d/dt " << moment_symbol_name(sys.tracked[k], sys.species) << " = ";
        const MomentPolynomial eq = sys.equation(k);
        if (eq.terms.empty()) {
            os << "0\n";
            continue;
        }
        bool first = true;
        for (const auto& term : eq.terms) {
            const double c = term.coeff;
            if (first) {
                if (c < 0) os << '-';
            } else {
                os << (c < 0 ? " - " : " + ");
            }
            first = false;
            const double a = std::abs(c);
            bool wrote_coeff = false;
            if (a != 1.0 || term.symbols.empty()) {
                os << format_double(a);
                wrote_coeff = true;
            }
            // Group repeated symbol ids into powers.
            for (std::size_t s = 0; s < term.symbols.size();) {
                std::size_t e2 = s;
                while (e2 < term.symbols.size() && term.symbols[e2] == term.symbols[s]) ++e2;
                if (wrote_coeff || s > 0) os << '*';
                os << moment_symbol_name(sys.tracked[term.symbols[s]], sys.species);
                if (e2 - s > 1) os << '^' << (e2 - s);
                s = e2;
            }
        }
        os << '\n';
    }
}

/// CSV dump: comment lines with time/order/species, then "multi_index,value"
/// rows in graded-lex order with colon-separated indices.
inline void dump_moments(const MomentVector& mv, std::ostream& os) {
    os << "# t=" << format_double(mv.time) << ", order=" << mv.order << '\n';
    if (!mv.species.empty()) {
        os << "# species=";
        for (std::size_t i = 0; i < mv.species.size(); ++i) {
            if (i) os << ':';
            os << mv.species[i];
        }
        os << '\n';
    }
    os << "multi_index,value\n";
    for (std::size_t k = 0; k < mv.indices.size(); ++k)
        os << to_string(mv.indices[k]) << ',' << format_double(mv.values[k]) << '\n';
}

inline MomentVector load_moments(std::istream& is) {
    MomentVector mv;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::size_t width = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t{trim(line)};
        if (t.empty()) continue;
        if (t[0] == '#') {
            for (std::string_view field : split(std::string_view(t).substr(1), ',')) {
                std::string_view f = trim(field);
                if (f.rfind("t=", 0) == 0)
                    mv.time = parse_double_strict(f.substr(2), "moment CSV time");
                else if (f.rfind("order=", 0) == 0)
                    mv.order = static_cast<int>(parse_int_strict(f.substr(6), "moment CSV order"));
                else if (f.rfind("species=", 0) == 0)
                    for (std::string_view name : split(f.substr(8), ':'))
                        mv.species.emplace_back(trim(name));
            }
            continue;
        }
        if (!header_seen) {
            if (t != "multi_index,value")
                throw std::runtime_error("load_moments: line " + std::to_string(lineno) +
                                         ": expected 'multi_index,value' header, got '" + t + "'");
            header_seen = true;
            continue;
        }
        auto cols = split(t, ',');
        if (cols.size() != 2)
            throw std::runtime_error("load_moments: line " + std::to_string(lineno) +
                                     ": expected 2 columns, got " + std::to_string(cols.size()));
        MultiIndex m;
        for (std::string_view part : split(trim(cols[0]), ':')) {
            std::int64_t v = parse_int_strict(trim(part), "moment multi-index");
            if (v < 0 || v > 255)
                throw std::runtime_error("load_moments: line " + std::to_string(lineno) +
                                         ": multi-index entry out of range");
            m.push_back(static_cast<std::uint8_t>(v));
        }
        if (width == 0)
            width = m.size();
        else if (m.size() != width)
            throw std::runtime_error("load_moments: line " + std::to_string(lineno) +
                                     ": inconsistent multi-index length");
        mv.indices.push_back(std::move(m));
        mv.values.push_back(parse_double_strict(trim(cols[1]), "moment value"));
    }
    if (!header_seen) throw std::runtime_error("load_moments: missing 'multi_index,value' header");
    if (mv.order == 0)
        for (const MultiIndex& m : mv.indices) mv.order = std::max(mv.order, order_of(m));
    if (mv.species.empty() && width > 0)
        for (std::size_t i = 0; i < width; ++i) mv.species.push_back("x" + std::to_string(i + 1));
    return mv;
}

}  // namespace cmekit
