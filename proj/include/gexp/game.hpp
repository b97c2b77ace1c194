#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gexp/bsde.hpp"
#include "gexp/errors.hpp"
#include "gexp/generators.hpp"
#include "gexp/lattice.hpp"
#include "gexp/rbsde.hpp"

namespace gexp {

/// |X - barrier| threshold for treating a node as a barrier hit when reading
/// off stopping rules. Solver noise sits at the fixed-point tolerance, three
/// orders below.
inline constexpr double kHitTol = 1e-9;

/// Eligible-node cap for rule enumeration (2^15 rules) and the smaller cap for
/// all-pairs sweeps.
inline constexpr int kEnumerationCap = 15;
inline constexpr int kPairwiseCap = 10;

/// Zero-sum stopping game: the sup player collects L at their stop, the inf
/// player pays U at theirs, ties go to the sup player, and the terminal
/// settlement is L(T). Evaluation is under the nonlinear expectation induced
/// by the generator, which must vanish at z = 0.
struct GameInstance {
    GameInstance(const Lattice& lat_, GeneratorSpec gen_, BarrierSpec barriers_)
        : lat(&lat_), gen(gen_), barriers(std::move(barriers_)) {
        if (!gen.coherent())
            throw ValidationError("generator", "game evaluation needs g(t,y,0) = 0");
        barriers.validate(*lat, false);
    }

    const Lattice* lat;
    GeneratorSpec gen;
    BarrierSpec barriers;
};

/// Candidate game value: doubly reflected solve with terminal L(T).
inline SolutionTriple game_value(const GameInstance& gi) {
    return solve_drbsde(*gi.lat, gi.gen, gi.barriers, gi.barriers.terminal_lower(*gi.lat));
}

struct SaddleRules {
    StoppingRule tau_star;    // first entry into {X = L}
    StoppingRule sigma_star;  // first entry into {X = U}
};

inline SaddleRules saddle_times(const Lattice& lat, const SolutionTriple& sol,
                                const BarrierSpec& barriers, int from_level = 0) {
    SaddleRules r{StoppingRule(lat), StoppingRule(lat)};
    for (int lvl = from_level; lvl < lat.steps(); ++lvl) {
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            const double x = sol.x.at(n);
            if (std::abs(x - barriers.lower_at(lat, n)) <= kHitTol) r.tau_star.add(n);
            if (std::abs(x - barriers.upper_at(lat, n)) <= kHitTol) r.sigma_star.add(n);
        }
    }
    return r;
}

/// E^g of the reward settled at the first stop of either rule: L where the
/// sup player's rule fires (shared nodes included), U where only the inf
/// player's does.
inline double evaluate_pair(const GameInstance& gi, const StoppingRule& tau,
                            const StoppingRule& sigma, NodeId from) {
    const Lattice& lat = *gi.lat;
    const StoppingRule both = rule_union(tau, sigma);
    auto payoff = [&](NodeId n) {
        return tau.stops_at(n) ? gi.barriers.lower_at(lat, n) : gi.barriers.upper_at(lat, n);
    };
    return evaluate_at_rule(lat, gi.gen, payoff, both, from);
}

/// Every stopping rule on nonterminal nodes at level >= from_level (each
/// augmented with the mandatory terminal stops). Count doubles per eligible
/// node, hence the hard cap.
inline std::vector<StoppingRule> enumerate_rules(const Lattice& lat, int from_level = 0) {
    std::vector<NodeId> eligible;
    for (int lvl = from_level; lvl < lat.steps(); ++lvl)
        for (int j = 0; j < lat.level_size(lvl); ++j) eligible.push_back(NodeId{lvl, j});

    if (eligible.size() > static_cast<std::size_t>(kEnumerationCap))
        throw EnumerationTooLarge("rule enumeration needs <= " +
                                  std::to_string(kEnumerationCap) +
                                  " eligible nodes, got " + std::to_string(eligible.size()));

    const std::uint32_t count = 1u << eligible.size();
    std::vector<StoppingRule> rules;
    rules.reserve(count);
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        StoppingRule r(lat);
        for (std::size_t b = 0; b < eligible.size(); ++b)
            if (mask & (1u << b)) r.add(eligible[b]);
        rules.push_back(std::move(r));
    }
    return rules;
}

/// True when rule `a` stops no later than rule `b` along every path (ties
/// count as no-later). Linear in the node count: a path can witness the
/// contrary only by reaching a b-stop with a never hit, which depends on the
/// node alone.
inline bool stops_no_later(const Lattice& lat, const StoppingRule& a,
                           const StoppingRule& b) {
    std::vector<std::uint8_t> b_first(lat.node_count(), 0);
    for (int lvl = lat.steps(); lvl >= 0; --lvl) {
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            if (a.stops_at(n)) continue;  // a fires here first (or ties)
            if (b.stops_at(n)) {
                b_first[lat.flat_index(n)] = 1;
            } else if (lvl < lat.steps()) {
                const auto [up, down] = lat.children(n);
                b_first[lat.flat_index(n)] = static_cast<std::uint8_t>(
                    b_first[lat.flat_index(up)] | b_first[lat.flat_index(down)]);
            }
        }
    }
    return !b_first[lat.flat_index(Lattice::root())];
}

struct SaddleReport {
    double value_root = 0.0;   // X at the root
    double saddle_value = 0.0; // E[R(tau*, sigma*)] at the root
    StoppingRule tau_star;
    StoppingRule sigma_star;
    // Pairwise mode: exact lower/upper game values by brute force.
    // Single-sided mode: a bracket [min_sigma E[R(tau*,.)], max_tau E[R(.,sigma*)]]
    // that pins both game values whenever the two ends agree.
    double lower_value = 0.0;
    double upper_value = 0.0;
    double max_left_violation = 0.0;   // sup_tau (E[R(tau,sigma*)] - saddle)^+
    double max_right_violation = 0.0;  // sup_sigma (saddle - E[R(tau*,sigma)])^+
    long pairs_checked = 0;
    bool pairwise = false;
};

/// Exhaustive check of the saddle inequalities at the root. All-pairs min-max
/// when the rule count allows it, otherwise the two single-sided sweeps
/// against (tau*, sigma*).
inline SaddleReport verify_saddle(const GameInstance& gi) {
    const Lattice& lat = *gi.lat;
    const NodeId root = Lattice::root();

    const SolutionTriple sol = game_value(gi);
    SaddleRules stars = saddle_times(lat, sol, gi.barriers);

    SaddleReport rep;
    rep.value_root = sol.x.at(root);
    rep.tau_star = stars.tau_star;
    rep.sigma_star = stars.sigma_star;
    rep.saddle_value = evaluate_pair(gi, stars.tau_star, stars.sigma_star, root);

    const std::vector<StoppingRule> rules = enumerate_rules(lat, 0);
    const std::size_t eligible = lat.nonterminal_count();

    double best_tau = -std::numeric_limits<double>::infinity();
    for (const StoppingRule& tau : rules)
        best_tau = std::max(best_tau, evaluate_pair(gi, tau, stars.sigma_star, root));
    double best_sigma = std::numeric_limits<double>::infinity();
    for (const StoppingRule& sigma : rules)
        best_sigma = std::min(best_sigma, evaluate_pair(gi, stars.tau_star, sigma, root));

    rep.max_left_violation = std::max(0.0, best_tau - rep.saddle_value);
    rep.max_right_violation = std::max(0.0, rep.saddle_value - best_sigma);

    if (eligible <= static_cast<std::size_t>(kPairwiseCap)) {
        rep.pairwise = true;
        // lower = max_tau min_sigma, upper = min_sigma max_tau.
        std::vector<double> col_max(rules.size(), -std::numeric_limits<double>::infinity());
        double lower = -std::numeric_limits<double>::infinity();
        for (const StoppingRule& tau : rules) {
            double row_min = std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < rules.size(); ++s) {
                const double v = evaluate_pair(gi, tau, rules[s], root);
                row_min = std::min(row_min, v);
                col_max[s] = std::max(col_max[s], v);
                ++rep.pairs_checked;
            }
            lower = std::max(lower, row_min);
        }
        double upper = std::numeric_limits<double>::infinity();
        for (double m : col_max) upper = std::min(upper, m);
        rep.lower_value = lower;
        rep.upper_value = upper;
    } else {
        rep.pairwise = false;
        rep.lower_value = best_sigma;  // <= saddle value, bounds V-lower from below
        rep.upper_value = best_tau;    // >= saddle value, bounds V-upper from above
        rep.pairs_checked = static_cast<long>(2 * rules.size());
    }
    return rep;
}

}  // namespace gexp
