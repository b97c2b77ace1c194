#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

#include "gexp/errors.hpp"

namespace gexp {

/// Lattice layout. Recombining keeps level i at i+1 nodes (binomial lattice);
/// FullTree keeps every path distinct (2^i nodes at level i), which is what
/// exhaustive stopping-rule enumeration needs.
enum class LatticeMode { Recombining, FullTree };

struct NodeId {
    int level = 0;
    int index = 0;
    friend bool operator==(const NodeId&, const NodeId&) = default;
};

/// Symmetric random walk on a uniform grid over [0, T]: N steps of size
/// dt = T/N, one-step increments +-sqrt(dt) with weight 1/2 each.
/// Immutable after construction; safe for concurrent reads.
class Lattice {
public:
    Lattice(double horizon, int steps, LatticeMode mode)
        : horizon_(horizon), steps_(steps), mode_(mode) {
        if (!(horizon > 0.0) || steps < 1)
            throw NonPositiveHorizon("lattice requires T > 0 and N >= 1");
        if (mode == LatticeMode::FullTree && steps > kMaxFullTreeDepth)
            throw TreeTooDeep("full-tree lattice capped at N <= 12, got N = " +
                              std::to_string(steps));
        dt_ = horizon_ / static_cast<double>(steps_);
        increment_ = std::sqrt(dt_);
    }

    double horizon() const { return horizon_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    double increment() const { return increment_; }
    LatticeMode mode() const { return mode_; }

    double time_of(int level) const { return static_cast<double>(level) * dt_; }

    int level_size(int level) const {
        return mode_ == LatticeMode::Recombining ? level + 1 : 1 << level;
    }

    std::size_t level_offset(int level) const {
        if (mode_ == LatticeMode::Recombining)
            return static_cast<std::size_t>(level) * (level + 1) / 2;
        return (std::size_t{1} << level) - 1;
    }

    std::size_t node_count() const { return level_offset(steps_) + level_size(steps_); }
    std::size_t nonterminal_count() const { return level_offset(steps_); }

    bool valid(NodeId n) const {
        return n.level >= 0 && n.level <= steps_ && n.index >= 0 &&
               n.index < level_size(n.level);
    }

    bool is_terminal(NodeId n) const { return n.level == steps_; }

    std::size_t flat_index(NodeId n) const {
        if (!valid(n))
            throw InvalidNode("node (" + std::to_string(n.level) + "," +
                              std::to_string(n.index) + ") not in lattice");
        return level_offset(n.level) + static_cast<std::size_t>(n.index);
    }

    /// (up, down) children. Up adds +sqrt(dt) to the walk, down subtracts it.
    std::pair<NodeId, NodeId> children(NodeId n) const {
        if (!valid(n))
            throw InvalidNode("children: node not in lattice");
        if (is_terminal(n))
            throw TerminalNode("children: node at terminal level " +
                               std::to_string(n.level));
        if (mode_ == LatticeMode::Recombining)
            return {NodeId{n.level + 1, n.index + 1}, NodeId{n.level + 1, n.index}};
        return {NodeId{n.level + 1, 2 * n.index + 1}, NodeId{n.level + 1, 2 * n.index}};
    }

    double walk_value(NodeId n) const {
        if (!valid(n))
            throw InvalidNode("walk_value: node not in lattice");
        int ups = mode_ == LatticeMode::Recombining
                      ? n.index
                      : std::popcount(static_cast<unsigned>(n.index));
        return static_cast<double>(2 * ups - n.level) * increment_;
    }

    static constexpr NodeId root() { return NodeId{0, 0}; }

    /// Index range [first, last] occupied at `level` by descendants of n.
    std::pair<int, int> descendant_range(NodeId n, int level) const {
        if (!valid(n) || level < n.level || level > steps_)
            throw InvalidNode("descendant_range: bad node/level");
        int depth = level - n.level;
        if (mode_ == LatticeMode::Recombining)
            return {n.index, n.index + depth};
        return {n.index << depth, ((n.index + 1) << depth) - 1};
    }

    static constexpr int kMaxFullTreeDepth = 12;

private:
    double horizon_;
    int steps_;
    LatticeMode mode_;
    double dt_ = 0.0;
    double increment_ = 0.0;
};

inline Lattice build_lattice(double horizon, int steps, LatticeMode mode) {
    return Lattice(horizon, steps, mode);
}

}  // namespace gexp
