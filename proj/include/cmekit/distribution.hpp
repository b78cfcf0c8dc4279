#pragma once
// Sparse probability distributions over integer population vectors, plus the
// reference implementation of the dynamically truncated explicit Euler step:
//
//   p(x,t+h) = p(x,t) + h * sum_j [ alpha_j(x-v_j) p(x-v_j,t) - alpha_j(x) p(x,t) ]
//
// restricted to a finite support that evolves with the probability mass. At
// the start of every step, states with p <= delta1 are dropped (their mass is
// booked into mass_defect); during a step, a successor outside the support is
// admitted only if a single inflow h*alpha_j(x)*p(x) exceeds delta2, otherwise
// its inflow is booked into mass_defect as well. All removed or rejected mass
// is lost, so every retained probability under-approximates the true value
// and the defect certifies the total truncation error.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmekit/errors.hpp"
#include "cmekit/network.hpp"
#include "cmekit/util.hpp"

namespace cmekit {

struct StateHash {
    std::size_t operator()(const StateVector& x) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        for (std::int64_t v : x) {
            std::uint64_t z = h ^ (static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            h = z ^ (z >> 31);
        }
        return static_cast<std::size_t>(h);
    }
};

struct SparseDistribution {
    std::unordered_map<StateVector, double, StateHash> entries;
    double time = 0.0;
    double mass_defect = 0.0;

    static SparseDistribution point_mass(StateVector x, double t = 0.0) {
        SparseDistribution d;
        d.time = t;
        d.entries.emplace(std::move(x), 1.0);
        return d;
    }

    double total_mass() const {
        KahanSum s;
        for (const auto& [x, p] : entries) s.add(p);
        return s.value();
    }
};

inline std::string state_to_string(const StateVector& x) {
    std::string s = "(";
    for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
    return s + ")";
}

/// Drop states with probability <= delta1; their mass moves to mass_defect.
inline void prune(SparseDistribution& dist, double delta1) {
    KahanSum lost;
    for (auto it = dist.entries.begin(); it != dist.entries.end();) {
        if (it->second <= delta1) {
            lost.add(it->second);
            it = dist.entries.erase(it);
        } else {
            ++it;
        }
    }
    dist.mass_defect += lost.value();
}

/// One explicit Euler step on the truncated state space (two-buffer scheme:
/// every update reads only the previous-step snapshot).
inline SparseDistribution euler_step(const ReactionNetwork& net, const SparseDistribution& dist,
                                     double h, double delta2) {
    if (!(h > 0.0)) throw std::invalid_argument("euler_step: h must be > 0");
    SparseDistribution out;
    out.time = dist.time + h;
    out.mass_defect = dist.mass_defect;
    out.entries = dist.entries;

    struct Inflow {
        double sum = 0.0;
        double max_single = 0.0;
    };
    std::unordered_map<StateVector, Inflow, StateHash> pending;

    StateVector target;
    for (const auto& [x, p] : dist.entries) {
        double exit_rate = 0.0;
        for (const Reaction& r : net.reactions) {
            const double a = propensity(r, x);
            if (a == 0.0) continue;
            exit_rate += a;
            const double flux = h * a * p;
            target = x;
            for (std::size_t i = 0; i < target.size(); ++i) target[i] += r.change[i];
            if (dist.entries.count(target)) {
                out.entries[target] += flux;
            } else {
                Inflow& in = pending[target];
                in.sum += flux;
                if (flux > in.max_single) in.max_single = flux;
            }
        }
        if (h * exit_rate >= 1.0)
            throw StepSizeError("euler_step: h * total propensity = " +
                                    format_double(h * exit_rate) + " >= 1 at state " +
                                    state_to_string(x) + "; reduce the step size",
                                state_to_string(x));
        out.entries[x] -= h * exit_rate * p;
    }

    KahanSum rejected;
    for (auto& [x, in] : pending) {
        if (in.max_single > delta2)
            out.entries[x] = in.sum;
        else
            rejected.add(in.sum);
    }
    out.mass_defect += rejected.value();

    // Underflow guard: probabilities cannot go negative while the stability
    // check holds, but they can round to exactly zero; zero states are absent.
    for (auto it = out.entries.begin(); it != out.entries.end();) {
        if (it->second <= 0.0)
            it = out.entries.erase(it);
        else
            ++it;
    }
    return out;
}

enum class SolverBackend { auto_select, reference, blocked };

struct TruncationConfig {
    double delta1 = 1e-15;  // retention threshold: keep states with p > delta1
    double delta2 = 1e-15;  // admission threshold on single-reaction inflow
    double step_size = 0.0; // fixed Euler h; 0 selects the adaptive policy
    double h_factor = 0.1;  // adaptive h = h_factor / alpha_max over support
    double t_end = 0.0;
    SolverBackend backend = SolverBackend::auto_select;
    std::vector<double> checkpoints;  // must be increasing, within (t0, t_end]
};

inline void validate(const TruncationConfig& cfg) {
    if (cfg.delta1 < 0 || cfg.delta2 < 0)
        throw std::invalid_argument("truncation thresholds must be >= 0");
    if (cfg.step_size < 0) throw std::invalid_argument("step_size must be >= 0");
    if (cfg.h_factor <= 0) throw std::invalid_argument("h_factor must be > 0");
    if (cfg.t_end < 0) throw std::invalid_argument("t_end must be >= 0");
    for (std::size_t i = 0; i + 1 < cfg.checkpoints.size(); ++i)
        if (cfg.checkpoints[i] >= cfg.checkpoints[i + 1])
            throw std::invalid_argument("checkpoints must be strictly increasing");
    if (!cfg.checkpoints.empty() && cfg.checkpoints.back() > cfg.t_end)
        throw std::invalid_argument("checkpoints must not exceed t_end");
}

using CheckpointFn = std::function<void(const SparseDistribution&)>;

/// Reference integrator: prune at every step start, then one Euler step, with
/// the step clipped to land exactly on checkpoints and t_end. The final
/// mass defect is recomputed as 1 - sum(entries), which it equals up to the
/// integrator's own local error whenever dist0 summed to 1.
inline SparseDistribution integrate_reference(const ReactionNetwork& net,
                                              SparseDistribution dist, TruncationConfig cfg,
                                              const CheckpointFn& on_checkpoint = {}) {
    validate(cfg);
    std::vector<double> events = cfg.checkpoints;
    if (events.empty() || events.back() < cfg.t_end) events.push_back(cfg.t_end);

    for (double target : events) {
        while (dist.time < target && (target - dist.time) > 1e-12 * std::max(1.0, target)) {
            prune(dist, cfg.delta1);
            double h = target - dist.time;
            if (cfg.step_size > 0.0) {
                h = std::min(h, cfg.step_size);
            } else {
                double amax = 0.0;
                for (const auto& [x, p] : dist.entries)
                    amax = std::max(amax, total_propensity(net, x));
                if (amax > 0.0) h = std::min(h, cfg.h_factor / amax);
            }
            dist = euler_step(net, dist, h, cfg.delta2);
        }
        dist.time = target;
        const bool requested =
            std::find(cfg.checkpoints.begin(), cfg.checkpoints.end(), target) !=
            cfg.checkpoints.end();
        if (on_checkpoint && requested) on_checkpoint(dist);
    }
    dist.mass_defect = 1.0 - dist.total_mass();
    return dist;
}

// ---------------------------------------------------------------------------
// Reductions.

/// Marginal distribution of one species (not renormalized).
inline std::map<std::int64_t, double> marginal(const SparseDistribution& dist, std::size_t i) {
    std::map<std::int64_t, double> m;
    for (const auto& [x, p] : dist.entries) m[x.at(i)] += p;
    return m;
}

/// Marginal of `target` over states matching all (species, value) conditions,
/// renormalized by the probability of the conditioning event.
inline std::map<std::int64_t, double> conditional_marginal(
    const SparseDistribution& dist, const std::vector<std::pair<std::size_t, std::int64_t>>& cond,
    std::size_t target) {
    std::map<std::int64_t, double> m;
    double total = 0.0;
    for (const auto& [x, p] : dist.entries) {
        bool match = true;
        for (const auto& [i, v] : cond)
            if (x.at(i) != v) {
                match = false;
                break;
            }
        if (!match) continue;
        m[x.at(target)] += p;
        total += p;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("conditional_marginal: conditioning event has zero probability");
    for (auto& [k, v] : m) v /= total;
    return m;
}

/// Raw moments mu_0..mu_M of species i, renormalized over the retained mass.
inline std::vector<double> empirical_moments(const SparseDistribution& dist, std::size_t i,
                                             int max_order) {
    if (max_order < 0) throw std::invalid_argument("empirical_moments: max_order must be >= 0");
    if (dist.entries.empty()) throw std::invalid_argument("empirical_moments: empty distribution");
    std::vector<KahanSum> acc(max_order + 1);
    for (const auto& [x, p] : dist.entries) {
        double t = p;
        acc[0].add(t);
        for (int k = 1; k <= max_order; ++k) {
            t *= static_cast<double>(x.at(i));
            acc[k].add(t);
        }
    }
    std::vector<double> mu(max_order + 1);
    const double mass = acc[0].value();
    for (int k = 0; k <= max_order; ++k) mu[k] = acc[k].value() / mass;
    return mu;
}

// ---------------------------------------------------------------------------
// CSV dump/load. Format: header "species names..., probability", one state
// per row sorted lexicographically, footer "# t=..., mass_defect=...".

inline void dump_distribution(const SparseDistribution& dist,
                              const std::vector<std::string>& species, std::ostream& os) {
    for (std::size_t i = 0; i < species.size(); ++i) os << species[i] << ",";
    os << "probability\n";
    std::vector<const StateVector*> order;
    order.reserve(dist.entries.size());
    for (const auto& [x, p] : dist.entries) order.push_back(&x);
    std::sort(order.begin(), order.end(),
              [](const StateVector* a, const StateVector* b) { return *a < *b; });
    for (const StateVector* x : order) {
        for (std::int64_t v : *x) os << v << ",";
        os << format_double(dist.entries.at(*x)) << "\n";
    }
    os << "# t=" << format_double(dist.time) << ", mass_defect=" << format_double(dist.mass_defect)
       << "\n";
}

struct DistributionTable {
    std::vector<std::string> species;
    SparseDistribution dist;
};

inline DistributionTable load_distribution(std::istream& is) {
    DistributionTable out;
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("distribution CSV: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split(line, ',');
    if (header.size() < 2 || trim(header.back()) != "probability")
        throw std::invalid_argument("distribution CSV: expected 'species..., probability' header");
    for (std::size_t i = 0; i + 1 < header.size(); ++i)
        out.species.emplace_back(trim(header[i]));

    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view s = trim(line);
        if (s.empty()) continue;
        if (s[0] == '#') {
            // footer: # t=..., mass_defect=...
            for (std::string_view part : split(s.substr(1), ',')) {
                part = trim(part);
                if (part.substr(0, 2) == "t=")
                    out.dist.time = parse_double_strict(part.substr(2), "distribution CSV footer");
                else if (part.substr(0, 12) == "mass_defect=")
                    out.dist.mass_defect =
                        parse_double_strict(part.substr(12), "distribution CSV footer");
            }
            continue;
        }
        auto cells = split(s, ',');
        if (cells.size() != out.species.size() + 1)
            throw std::invalid_argument("distribution CSV line " + std::to_string(lineno) +
                                        ": expected " + std::to_string(out.species.size() + 1) +
                                        " columns");
        StateVector x(out.species.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = parse_int_strict(cells[i], "distribution CSV line " + std::to_string(lineno));
        double p = parse_double_strict(cells.back(),
                                       "distribution CSV line " + std::to_string(lineno));
        if (p > 0.0) out.dist.entries[std::move(x)] = p;
    }
    return out;
}

}  // namespace cmekit
