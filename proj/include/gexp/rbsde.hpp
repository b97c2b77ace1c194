#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gexp/bsde.hpp"
#include "gexp/errors.hpp"
#include "gexp/generators.hpp"
#include "gexp/lattice.hpp"

namespace gexp {

/// Node function of (t, w): constant, affine, or the positive part of an
/// affine form. Barriers and terminal payoffs are drawn from this family.
struct NodeFn {
    enum class Form { Constant, Affine, ClippedAffine };

    Form form = Form::Constant;
    double a0 = 0.0;  // constant term
    double a1 = 0.0;  // walk coefficient
    double a2 = 0.0;  // time coefficient

    static NodeFn constant(double c) { return {Form::Constant, c, 0.0, 0.0}; }
    static NodeFn affine(double a0, double a1, double a2) {
        return {Form::Affine, a0, a1, a2};
    }
    static NodeFn clipped(double a0, double a1, double a2) {
        return {Form::ClippedAffine, a0, a1, a2};
    }

    double operator()(double t, double w) const {
        if (form == Form::Constant) return a0;
        const double v = a0 + a1 * w + a2 * t;
        return form == Form::Affine ? v : std::max(0.0, v);
    }
};

/// Lower/upper obstacle pair. `bound` is the ceiling B required by the
/// constrained game; `increasing_lower` demands L nondecreasing in t along
/// every path and is validated node against children.
struct BarrierSpec {
    NodeFn lower;
    NodeFn upper;
    double bound = 1.0;
    bool increasing_lower = false;

    double lower_at(const Lattice& lat, NodeId n) const {
        return lower(lat.time_of(n.level), lat.walk_value(n));
    }
    double upper_at(const Lattice& lat, NodeId n) const {
        return upper(lat.time_of(n.level), lat.walk_value(n));
    }

    void validate(const Lattice& lat, bool constrained_regime) const {
        if (constrained_regime && !(bound > 0.0))
            throw HypothesisViolation("barrier bound B must be > 0");
        for (int lvl = 0; lvl <= lat.steps(); ++lvl) {
            for (int j = 0; j < lat.level_size(lvl); ++j) {
                const NodeId n{lvl, j};
                const double lo = lower_at(lat, n);
                const double hi = upper_at(lat, n);
                if (lo > hi)
                    throw BarrierCrossing("L > U at node (" + std::to_string(lvl) + "," +
                                          std::to_string(j) + ")");
                if (constrained_regime && (lo < 0.0 || hi > bound))
                    throw HypothesisViolation(
                        "constrained game needs 0 <= L <= U <= B; violated at node (" +
                        std::to_string(lvl) + "," + std::to_string(j) + ")");
                if (increasing_lower && lvl < lat.steps()) {
                    const auto [up, down] = lat.children(n);
                    if (lower_at(lat, up) < lo || lower_at(lat, down) < lo)
                        throw HypothesisViolation(
                            "increasing_L set but L decreases below node (" +
                            std::to_string(lvl) + "," + std::to_string(j) + ")");
                }
            }
        }
    }

    std::vector<double> terminal_lower(const Lattice& lat) const {
        std::vector<double> xi(static_cast<std::size_t>(lat.level_size(lat.steps())));
        for (int j = 0; j < lat.level_size(lat.steps()); ++j)
            xi[static_cast<std::size_t>(j)] = lower_at(lat, NodeId{lat.steps(), j});
        return xi;
    }
};

/// Doubly reflected solution. dk_plus / dk_minus hold the per-node flush
/// increments (the jump of K over the step starting at the node); they vanish
/// at terminal nodes. Cumulative K along a path is the sum of increments over
/// the strict ancestors, so K starts at 0.
struct SolutionTriple {
    AdaptedProcess x;
    AdaptedProcess z;
    AdaptedProcess dk_plus;
    AdaptedProcess dk_minus;
};

/// Backward clamp scheme with a node-dependent driver: the implicit step is
/// taken at the unclamped value, then the result is pushed back inside
/// [L, U] and the push is recorded as a flush increment. Keeps one factor of
/// each Skorokhod product exactly zero by construction.
template <class NodeDriver>
SolutionTriple solve_drbsde_driver(const Lattice& lat, NodeDriver&& driver,
                                   const BarrierSpec& barriers,
                                   const std::vector<double>& terminal) {
    barriers.validate(lat, false);
    const int n_steps = lat.steps();
    if (terminal.size() != static_cast<std::size_t>(lat.level_size(n_steps)))
        throw InvalidNode("terminal data must cover every terminal node");

    SolutionTriple sol{AdaptedProcess(lat), AdaptedProcess(lat), AdaptedProcess(lat),
                       AdaptedProcess(lat)};

    for (int j = 0; j < lat.level_size(n_steps); ++j) {
        const NodeId n{n_steps, j};
        const double xi = terminal[static_cast<std::size_t>(j)];
        if (xi < barriers.lower_at(lat, n) || xi > barriers.upper_at(lat, n))
            throw TerminalOutOfBand("terminal value outside [L(T), U(T)] at index " +
                                    std::to_string(j));
        sol.x.at(n) = xi;
    }

    const double dt = lat.dt();
    for (int lvl = n_steps - 1; lvl >= 0; --lvl) {
        const double t = lat.time_of(lvl);
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            const auto [up, down] = lat.children(n);
            const auto step = one_step_driver(
                [&](double t_, double y_, double z_) { return driver(n, t_, y_, z_); }, t,
                dt, sol.x.at(up), sol.x.at(down));
            const double lo = barriers.lower_at(lat, n);
            const double hi = barriers.upper_at(lat, n);
            const double clamped = std::min(std::max(step.value, lo), hi);
            sol.x.at(n) = clamped;
            sol.z.at(n) = step.slope;
            sol.dk_plus.at(n) = std::max(clamped - step.value, 0.0);
            sol.dk_minus.at(n) = std::max(step.value - clamped, 0.0);
        }
    }
    return sol;
}

inline SolutionTriple solve_drbsde(const Lattice& lat, const GeneratorSpec& gen,
                                   const BarrierSpec& barriers,
                                   const std::vector<double>& terminal) {
    validate_step(gen, lat.dt(), lat.horizon());
    return solve_drbsde_driver(
        lat, [&gen](NodeId, double t, double y, double z) { return gen(t, y, z); },
        barriers, terminal);
}

/// Penalized stand-in for the clamp scheme: an unreflected solve whose driver
/// pays p per unit of excursion outside the band. Cross-checks the reflected
/// solver; the gap at the root shrinks as p grows.
inline BsdeSolution solve_drbsde_penalized(const Lattice& lat, const GeneratorSpec& gen,
                                           const BarrierSpec& barriers,
                                           const std::vector<double>& terminal, double p) {
    if (p < 0.0) throw ValidationError("penalty", "p must be >= 0");
    validate_step(gen.lipschitz() + p, lat.dt(), lat.horizon());
    barriers.validate(lat, false);
    return solve_bsde_driver(
        lat,
        [&](NodeId n, double t, double y, double z) {
            const double lo = barriers.lower_at(lat, n);
            const double hi = barriers.upper_at(lat, n);
            return gen(t, y, z) + p * std::max(lo - y, 0.0) - p * std::max(y - hi, 0.0);
        },
        terminal);
}

struct SkorokhodResiduals {
    double rplus;
    double rminus;
};

/// Max over nodes of |dK+ * (X - L)| and |dK- * (U - X)|. Zero on every
/// solver output; nonzero flags a corrupted or foreign solution.
inline SkorokhodResiduals skorokhod_residuals(const Lattice& lat, const SolutionTriple& sol,
                                              const BarrierSpec& barriers) {
    SkorokhodResiduals r{0.0, 0.0};
    for (int lvl = 0; lvl <= lat.steps(); ++lvl) {
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            const double x = sol.x.at(n);
            r.rplus = std::max(r.rplus,
                               std::abs(sol.dk_plus.at(n) * (x - barriers.lower_at(lat, n))));
            r.rminus = std::max(
                r.rminus, std::abs(sol.dk_minus.at(n) * (barriers.upper_at(lat, n) - x)));
        }
    }
    return r;
}

/// Cumulative reflection process at a node: sum of flush increments over the
/// strict ancestors. Path-unique, so only meaningful in full-tree mode.
inline double cumulative_flush(const Lattice& lat, const AdaptedProcess& increments,
                               NodeId n) {
    if (lat.mode() != LatticeMode::FullTree)
        throw InvalidNode("cumulative flush is path-wise; full-tree mode only");
    double acc = 0.0;
    NodeId cur = n;
    while (cur.level > 0) {
        cur = NodeId{cur.level - 1, cur.index / 2};
        acc += increments.at(cur);
    }
    return acc;
}

}  // namespace gexp
