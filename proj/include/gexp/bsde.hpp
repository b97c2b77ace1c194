#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "gexp/errors.hpp"
#include "gexp/generators.hpp"
#include "gexp/lattice.hpp"

namespace gexp {

/// Real-valued process indexed by lattice nodes (one value per node).
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    explicit AdaptedProcess(const Lattice& lat, double fill = 0.0)
        : lat_(&lat), values_(lat.node_count(), fill) {}

    double& at(NodeId n) { return values_[lat_->flat_index(n)]; }
    double at(NodeId n) const { return values_[lat_->flat_index(n)]; }

    const Lattice& lattice() const { return *lat_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    const Lattice* lat_ = nullptr;
    std::vector<double> values_;
};

/// Stop/continue decision per node. Terminal nodes are always members, so
/// every rule stops by the horizon. Membership depends on the node alone,
/// which is exactly adaptedness on this filtration.
class StoppingRule {
public:
    StoppingRule() = default;

    explicit StoppingRule(const Lattice& lat) : lat_(&lat), mask_(lat.node_count(), 0) {
        for (int j = 0; j < lat.level_size(lat.steps()); ++j)
            mask_[lat.flat_index(NodeId{lat.steps(), j})] = 1;
    }

    static StoppingRule terminal_only(const Lattice& lat) { return StoppingRule(lat); }

    void add(NodeId n) { mask_[lat_->flat_index(n)] = 1; }

    bool stops_at(NodeId n) const { return mask_[lat_->flat_index(n)] != 0; }

    const Lattice& lattice() const { return *lat_; }

    std::size_t interior_stop_count() const {
        std::size_t k = 0;
        for (std::size_t i = 0; i < lat_->nonterminal_count(); ++i) k += mask_[i];
        return k;
    }

    std::vector<NodeId> interior_stops() const {
        std::vector<NodeId> out;
        for (int lvl = 0; lvl < lat_->steps(); ++lvl)
            for (int j = 0; j < lat_->level_size(lvl); ++j)
                if (mask_[lat_->level_offset(lvl) + j]) out.push_back(NodeId{lvl, j});
        return out;
    }

    friend StoppingRule rule_union(const StoppingRule& a, const StoppingRule& b) {
        StoppingRule u = a;
        for (std::size_t i = 0; i < u.mask_.size(); ++i)
            u.mask_[i] = static_cast<std::uint8_t>(u.mask_[i] | b.mask_[i]);
        return u;
    }

    friend bool operator==(const StoppingRule& a, const StoppingRule& b) {
        return a.mask_ == b.mask_;
    }

private:
    const Lattice* lat_ = nullptr;
    std::vector<std::uint8_t> mask_;
};

struct StepResult {
    double value;  // x solving x = (x_up + x_down)/2 + dt * g(t, x, z)
    double slope;  // z = (x_up - x_down) / (2 sqrt(dt))
};

inline constexpr double kFixedPointTol = 1e-12;
inline constexpr int kMaxFixedPointIters = 100;

/// One backward step of the implicit scheme: z is read off the martingale
/// increment, x from the fixed point of the driver term. The iteration is a
/// contraction whenever dt * M <= 1/2 (see validate_step); drivers with no y
/// dependence converge on the second pass exactly.
template <class Driver>
StepResult one_step_driver(Driver&& g, double t, double dt, double x_up, double x_down) {
    const double z = (x_up - x_down) / (2.0 * std::sqrt(dt));
    const double e = 0.5 * (x_up + x_down);
    double x = e;
    for (int it = 0; it < kMaxFixedPointIters; ++it) {
        const double next = e + dt * g(t, x, z);
        if (std::abs(next - x) <= kFixedPointTol) return {next, z};
        x = next;
    }
    throw NoConvergence("one-step fixed point failed to converge; was the step validated?");
}

inline StepResult one_step(const GeneratorSpec& gen, double t, double dt, double x_up,
                           double x_down) {
    return one_step_driver([&gen](double t_, double y_, double z_) { return gen(t_, y_, z_); },
                           t, dt, x_up, x_down);
}

struct BsdeSolution {
    AdaptedProcess x;  // value process
    AdaptedProcess z;  // slope process (0 at terminal nodes by convention)
};

/// Backward solve with a node-dependent driver (NodeId, t, y, z) -> double.
/// `terminal` is indexed by the terminal-level node index.
template <class NodeDriver>
BsdeSolution solve_bsde_driver(const Lattice& lat, NodeDriver&& driver,
                               const std::vector<double>& terminal) {
    const int n_steps = lat.steps();
    if (terminal.size() != static_cast<std::size_t>(lat.level_size(n_steps)))
        throw InvalidNode("terminal data must cover every terminal node");

    BsdeSolution sol{AdaptedProcess(lat), AdaptedProcess(lat)};
    for (int j = 0; j < lat.level_size(n_steps); ++j)
        sol.x.at(NodeId{n_steps, j}) = terminal[static_cast<std::size_t>(j)];

    const double dt = lat.dt();
    for (int lvl = n_steps - 1; lvl >= 0; --lvl) {
        const double t = lat.time_of(lvl);
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            const auto [up, down] = lat.children(n);
            const auto step = one_step_driver(
                [&](double t_, double y_, double z_) { return driver(n, t_, y_, z_); }, t,
                dt, sol.x.at(up), sol.x.at(down));
            sol.x.at(n) = step.value;
            sol.z.at(n) = step.slope;
        }
    }
    return sol;
}

inline BsdeSolution solve_bsde(const Lattice& lat, const GeneratorSpec& gen,
                               const std::vector<double>& terminal) {
    return solve_bsde_driver(
        lat, [&gen](NodeId, double t, double y, double z) { return gen(t, y, z); },
        terminal);
}

namespace detail {

template <class Payoff>
std::optional<double> payoff_value(Payoff&& payoff, NodeId n) {
    if constexpr (std::is_convertible_v<std::invoke_result_t<Payoff, NodeId>,
                                        std::optional<double>> &&
                  !std::is_convertible_v<std::invoke_result_t<Payoff, NodeId>, double>) {
        return payoff(n);
    } else {
        return std::optional<double>(payoff(n));
    }
}

}  // namespace detail

struct RuleEvaluation {
    double at_from;           // evaluation at the requested node
    AdaptedProcess values;    // defined on reachable nodes of the sub-tree
    std::vector<std::uint8_t> reachable;
};

/// Stopped evaluation from `from`: each path is frozen at its first entry into
/// the stop set, where `payoff` is collected; before that the backward step
/// applies. Payoff may be partial (return nullopt) as long as it covers every
/// stop node actually reachable before stopping.
template <class NodeDriver, class Payoff>
RuleEvaluation evaluate_at_rule_driver(const Lattice& lat, NodeDriver&& driver,
                                       Payoff&& payoff, const StoppingRule& rule,
                                       NodeId from) {
    if (!lat.valid(from)) throw InvalidNode("evaluate_at_rule: bad start node");

    RuleEvaluation ev{0.0, AdaptedProcess(lat), std::vector<std::uint8_t>(lat.node_count(), 0)};
    auto idx = [&lat](NodeId n) { return lat.flat_index(n); };

    // Forward reachability: a node behind an earlier stop never needs payoff.
    ev.reachable[idx(from)] = 1;
    for (int lvl = from.level; lvl < lat.steps(); ++lvl) {
        auto [lo, hi] = lat.descendant_range(from, lvl);
        for (int j = lo; j <= hi; ++j) {
            const NodeId n{lvl, j};
            if (!ev.reachable[idx(n)] || rule.stops_at(n)) continue;
            const auto [up, down] = lat.children(n);
            ev.reachable[idx(up)] = 1;
            ev.reachable[idx(down)] = 1;
        }
    }

    const double dt = lat.dt();
    for (int lvl = lat.steps(); lvl >= from.level; --lvl) {
        auto [lo, hi] = lat.descendant_range(from, lvl);
        const double t = lat.time_of(lvl);
        for (int j = lo; j <= hi; ++j) {
            const NodeId n{lvl, j};
            if (!ev.reachable[idx(n)]) continue;
            if (rule.stops_at(n)) {
                auto v = detail::payoff_value(payoff, n);
                if (!v)
                    throw MissingPayoff("payoff undefined at reachable stop node (" +
                                        std::to_string(n.level) + "," +
                                        std::to_string(n.index) + ")");
                ev.values.at(n) = *v;
            } else {
                const auto [up, down] = lat.children(n);
                ev.values.at(n) = one_step_driver(
                                      [&](double t_, double y_, double z_) {
                                          return driver(n, t_, y_, z_);
                                      },
                                      t, dt, ev.values.at(up), ev.values.at(down))
                                      .value;
            }
        }
    }
    ev.at_from = ev.values.at(from);
    return ev;
}

/// Generator front end; requires g(t,y,0) = 0 so that the value of a stopped
/// path stays put after stopping.
template <class Payoff>
double evaluate_at_rule(const Lattice& lat, const GeneratorSpec& gen, Payoff&& payoff,
                        const StoppingRule& rule, NodeId from) {
    if (!gen.coherent())
        throw ValidationError("generator", "stopped evaluation needs g(t,y,0) = 0");
    return evaluate_at_rule_driver(
               lat, [&gen](NodeId, double t, double y, double z) { return gen(t, y, z); },
               std::forward<Payoff>(payoff), rule, from)
        .at_from;
}

}  // namespace gexp
