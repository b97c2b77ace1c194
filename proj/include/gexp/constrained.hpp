#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gexp/bsde.hpp"
#include "gexp/errors.hpp"
#include "gexp/game.hpp"
#include "gexp/generators.hpp"
#include "gexp/lattice.hpp"
#include "gexp/rbsde.hpp"

namespace gexp {

inline constexpr double kMonotoneSlack = 1e-12;

struct LadderLevel {
    double m = 0.0;
    SolutionTriple sol;
    StoppingRule tau_star;
    StoppingRule sigma_star;
    AdaptedProcess penalty_increment;  // m * phi(t, X, Z) * dt per nonterminal node
    double root_value = 0.0;
};

/// Penalty ladder for the constrained game: one reflected solve per weight m
/// with driver g + m*phi, plus the monotonicity facts that make the ladder a
/// meaningful approximation from below.
struct PenalizationLadder {
    std::vector<LadderLevel> levels;     // sorted by ascending m
    std::vector<double> gaps;            // sup-norm |X^{m_{k+1}} - X^{m_k}|
    double worst_value_decrease = 0.0;   // max over nodes of (X^m - X^{m'})^+, m < m'
    bool values_monotone = true;         // worst_value_decrease <= slack
    bool rules_monotone = true;          // tau* never later->earlier, sigma* never earlier->later
    double max_value = -std::numeric_limits<double>::infinity();
};

/// Runs the ladder under the constrained-game hypotheses: barriers inside
/// [0, B] and, when requested, L nondecreasing in time. Refuses step sizes the
/// largest weight cannot support rather than adapting them.
inline PenalizationLadder run_ladder(const GameInstance& gi, const ConstraintSpec& phi,
                                     std::vector<double> schedule) {
    const Lattice& lat = *gi.lat;
    if (schedule.empty())
        throw ValidationError("schedule", "penalty schedule must be nonempty");
    for (double m : schedule)
        if (!(m >= 0.0)) throw ValidationError("schedule", "penalty weights must be >= 0");
    std::sort(schedule.begin(), schedule.end());

    gi.barriers.validate(lat, true);
    validate_step(effective_lipschitz(gi.gen, phi, schedule.back()), lat.dt(),
                  lat.horizon());

    const std::vector<double> terminal = gi.barriers.terminal_lower(lat);

    PenalizationLadder ladder;
    for (double m : schedule) {
        LadderLevel lvl;
        lvl.m = m;
        lvl.sol = solve_drbsde_driver(
            lat,
            [&](NodeId, double t, double y, double z) {
                return gi.gen(t, y, z) + m * phi(t, y, z);
            },
            gi.barriers, terminal);
        const SaddleRules stars = saddle_times(lat, lvl.sol, gi.barriers);
        lvl.tau_star = stars.tau_star;
        lvl.sigma_star = stars.sigma_star;
        lvl.root_value = lvl.sol.x.at(Lattice::root());

        lvl.penalty_increment = AdaptedProcess(lat);
        for (int l = 0; l < lat.steps(); ++l)
            for (int j = 0; j < lat.level_size(l); ++j) {
                const NodeId n{l, j};
                lvl.penalty_increment.at(n) =
                    m * phi(lat.time_of(l), lvl.sol.x.at(n), lvl.sol.z.at(n)) * lat.dt();
            }
        ladder.levels.push_back(std::move(lvl));
    }

    for (std::size_t k = 0; k + 1 < ladder.levels.size(); ++k) {
        const auto& lo = ladder.levels[k];
        const auto& hi = ladder.levels[k + 1];
        double gap = 0.0;
        double decrease = 0.0;
        for (std::size_t i = 0; i < lo.sol.x.values().size(); ++i) {
            const double d = hi.sol.x.values()[i] - lo.sol.x.values()[i];
            gap = std::max(gap, std::abs(d));
            decrease = std::max(decrease, -d);
        }
        ladder.gaps.push_back(gap);
        ladder.worst_value_decrease = std::max(ladder.worst_value_decrease, decrease);
        if (!stops_no_later(lat, lo.tau_star, hi.tau_star)) ladder.rules_monotone = false;
        if (!stops_no_later(lat, hi.sigma_star, lo.sigma_star)) ladder.rules_monotone = false;
    }
    ladder.values_monotone = ladder.worst_value_decrease <= kMonotoneSlack;
    for (const auto& lvl : ladder.levels)
        for (double v : lvl.sol.x.values()) ladder.max_value = std::max(ladder.max_value, v);
    return ladder;
}

struct ConstrainedReport {
    double value_estimate = 0.0;      // top-level root value
    double residual_gap = 0.0;        // last ladder gap (honesty metric)
    StoppingRule tau_limit;           // top-level rules, flagged stable when the
    StoppingRule sigma_limit;         // last two levels agree exactly
    bool tau_stable = false;
    bool sigma_stable = false;
    double violation_lower = 0.0;     // sweep of E^{g_m1}[R(tau, sigma_limit)] - value
    double violation_upper = 0.0;     // sweep of value - E^{g_mtop}[R(tau_limit, sigma)]
    double constraint_residual = 0.0; // max phi(t, X^top, Z^top) over nodes
    bool sweep_performed = false;
    long rules_swept = 0;
};

/// Distills the ladder into the constrained game's verdict: the reported value
/// is the top level with its residual gap, the limit rules are accepted only
/// when already stabilized, and the two one-sided sweeps bound the deviation
/// payoffs against the reported value.
inline ConstrainedReport constrained_report(const PenalizationLadder& ladder,
                                            const GameInstance& gi,
                                            const ConstraintSpec& phi) {
    if (ladder.levels.size() < 2)
        throw LadderTooShort("penalty ladder needs at least two levels");

    const Lattice& lat = *gi.lat;
    const NodeId root = Lattice::root();
    const LadderLevel& top = ladder.levels.back();
    const LadderLevel& prev = ladder.levels[ladder.levels.size() - 2];
    const double m_low = ladder.levels.front().m;

    ConstrainedReport rep;
    rep.value_estimate = top.root_value;
    rep.residual_gap = ladder.gaps.empty() ? 0.0 : ladder.gaps.back();
    rep.tau_limit = top.tau_star;
    rep.sigma_limit = top.sigma_star;
    rep.tau_stable = top.tau_star == prev.tau_star;
    rep.sigma_stable = top.sigma_star == prev.sigma_star;

    for (int l = 0; l <= lat.steps(); ++l)
        for (int j = 0; j < lat.level_size(l); ++j) {
            const NodeId n{l, j};
            rep.constraint_residual =
                std::max(rep.constraint_residual,
                         phi(lat.time_of(l), top.sol.x.at(n), top.sol.z.at(n)));
        }

    if (lat.nonterminal_count() <= static_cast<std::size_t>(kEnumerationCap)) {
        rep.sweep_performed = true;
        auto reward = [&](const StoppingRule& tau, const StoppingRule& sigma, double m) {
            const StoppingRule both = rule_union(tau, sigma);
            auto payoff = [&](NodeId n) {
                return tau.stops_at(n) ? gi.barriers.lower_at(lat, n)
                                       : gi.barriers.upper_at(lat, n);
            };
            return evaluate_at_rule_driver(
                       lat,
                       [&](NodeId, double t, double y, double z) {
                           return gi.gen(t, y, z) + m * phi(t, y, z);
                       },
                       payoff, both, root)
                .at_from;
        };
        const std::vector<StoppingRule> rules = enumerate_rules(lat, 0);
        for (const StoppingRule& tau : rules) {
            const double v = reward(tau, rep.sigma_limit, m_low);
            rep.violation_lower = std::max(rep.violation_lower, v - rep.value_estimate);
        }
        for (const StoppingRule& sigma : rules) {
            const double v = reward(rep.tau_limit, sigma, top.m);
            rep.violation_upper = std::max(rep.violation_upper, rep.value_estimate - v);
        }
        rep.rules_swept = static_cast<long>(2 * rules.size());
    }
    return rep;
}

struct ContinuityReport {
    std::vector<double> weights;                // penalty schedule used
    std::vector<std::vector<double>> values;    // values[mi][ni] = x^m(root)(xi_n)
    std::vector<double> limit_values;           // x^m(root)(xi)
    double max_decrease_in_n = 0.0;             // worst monotonicity defect over n
    double max_decrease_in_m = 0.0;             // worst monotonicity defect over m
    double max_overshoot = 0.0;                 // worst (x^m(xi_n) - x^m(xi))^+
    double terminal_gap = 0.0;                  // max_m (x^m(xi) - x^m(xi_last))
    double corner_sup_gap = 0.0;                // sup over grid minus the corner value
    double interchange_gap = 0.0;               // |sup over grid - sup_m x^m(xi)|
};

/// Monotone-approximation check for the penalized (unreflected) solves: for a
/// nondecreasing terminal sequence xi_n -> xi, each fixed weight's values rise
/// in n toward the limit value, every fixed n rises in the weight, and the
/// grid supremum sits at the (m_max, n_max) corner, which is the discrete face
/// of swapping the two limits.
inline ContinuityReport continuity_from_below_check(
    const Lattice& lat, const GeneratorSpec& gen, const ConstraintSpec& phi,
    const std::vector<std::vector<double>>& terminal_sequence,
    const std::vector<double>& limit_terminal, std::vector<double> schedule) {
    if (terminal_sequence.empty())
        throw ValidationError("terminal_sequence", "needs at least one element");
    if (schedule.empty())
        throw ValidationError("schedule", "penalty schedule must be nonempty");
    std::sort(schedule.begin(), schedule.end());
    validate_step(effective_lipschitz(gen, phi, schedule.back()), lat.dt(), lat.horizon());

    const std::size_t width = static_cast<std::size_t>(lat.level_size(lat.steps()));
    for (const auto& xi : terminal_sequence)
        if (xi.size() != width)
            throw ValidationError("terminal_sequence", "element does not cover terminal level");
    if (limit_terminal.size() != width)
        throw ValidationError("terminal", "limit terminal does not cover terminal level");

    for (std::size_t k = 0; k + 1 < terminal_sequence.size(); ++k)
        for (std::size_t j = 0; j < width; ++j)
            if (terminal_sequence[k + 1][j] < terminal_sequence[k][j])
                throw NotMonotone("terminal sequence decreases at element " +
                                  std::to_string(k + 1));
    for (std::size_t j = 0; j < width; ++j)
        if (terminal_sequence.back()[j] > limit_terminal[j])
            throw NotMonotone("terminal sequence overshoots its limit");

    ContinuityReport rep;
    rep.weights = schedule;
    for (double m : schedule) {
        auto driver = [&](NodeId, double t, double y, double z) {
            return gen(t, y, z) + m * phi(t, y, z);
        };
        std::vector<double> row;
        row.reserve(terminal_sequence.size());
        for (const auto& xi : terminal_sequence)
            row.push_back(solve_bsde_driver(lat, driver, xi).x.at(Lattice::root()));
        rep.values.push_back(std::move(row));
        rep.limit_values.push_back(
            solve_bsde_driver(lat, driver, limit_terminal).x.at(Lattice::root()));
    }

    double sup = -std::numeric_limits<double>::infinity();
    for (std::size_t mi = 0; mi < rep.values.size(); ++mi) {
        for (std::size_t ni = 0; ni < rep.values[mi].size(); ++ni) {
            const double v = rep.values[mi][ni];
            sup = std::max(sup, v);
            if (ni + 1 < rep.values[mi].size())
                rep.max_decrease_in_n =
                    std::max(rep.max_decrease_in_n, v - rep.values[mi][ni + 1]);
            if (mi + 1 < rep.values.size())
                rep.max_decrease_in_m =
                    std::max(rep.max_decrease_in_m, v - rep.values[mi + 1][ni]);
        }
        rep.max_overshoot =
            std::max(rep.max_overshoot, rep.values[mi].back() - rep.limit_values[mi]);
        rep.terminal_gap =
            std::max(rep.terminal_gap, rep.limit_values[mi] - rep.values[mi].back());
    }
    rep.corner_sup_gap = sup - rep.values.back().back();
    double limit_sup = -std::numeric_limits<double>::infinity();
    for (double b : rep.limit_values) limit_sup = std::max(limit_sup, b);
    rep.interchange_gap = std::abs(sup - limit_sup);
    return rep;
}

/// Convenience builder for the canonical sequence xi_n = xi * (1 - 1/n).
inline std::vector<std::vector<double>> shrinking_terminal_sequence(
    const std::vector<double>& xi, int n_max) {
    if (n_max < 1) throw ValidationError("n_max", "must be >= 1");
    for (double v : xi)
        if (v < 0.0)
            throw NotMonotone("shrinking sequence needs a nonnegative limit terminal");
    std::vector<std::vector<double>> seq;
    seq.reserve(static_cast<std::size_t>(n_max));
    for (int n = 1; n <= n_max; ++n) {
        std::vector<double> xin(xi.size());
        const double f = 1.0 - 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < xi.size(); ++j) xin[j] = xi[j] * f;
        seq.push_back(std::move(xin));
    }
    return seq;
}

}  // namespace gexp
