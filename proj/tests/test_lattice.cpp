#include <doctest.h>

#include <cmath>
#include <map>

#include "gexp/lattice.hpp"

using namespace gexp;

TEST_CASE("recombining lattice counts") {
    Lattice lat(1.0, 2, LatticeMode::Recombining);
    CHECK(lat.dt() == 0.5);
    CHECK(lat.increment() == doctest::Approx(0.70710678118654752).epsilon(1e-15));
    CHECK(lat.node_count() == 6);
    CHECK(lat.nonterminal_count() == 3);
    CHECK(lat.level_size(0) == 1);
    CHECK(lat.level_size(1) == 2);
    CHECK(lat.level_size(2) == 3);
}

TEST_CASE("full tree counts") {
    Lattice lat(1.0, 3, LatticeMode::FullTree);
    CHECK(lat.node_count() == 15);  // 1 + 2 + 4 + 8
    CHECK(lat.nonterminal_count() == 7);
    for (int lvl = 0; lvl <= 3; ++lvl) CHECK(lat.level_size(lvl) == (1 << lvl));
}

TEST_CASE("construction guards") {
    CHECK_THROWS_AS(Lattice(1.0, 13, LatticeMode::FullTree), TreeTooDeep);
    CHECK_NOTHROW(Lattice(1.0, 12, LatticeMode::FullTree));
    CHECK_THROWS_AS(Lattice(0.0, 4, LatticeMode::Recombining), NonPositiveHorizon);
    CHECK_THROWS_AS(Lattice(-1.0, 4, LatticeMode::Recombining), NonPositiveHorizon);
    CHECK_THROWS_AS(Lattice(1.0, 0, LatticeMode::Recombining), NonPositiveHorizon);
}

TEST_CASE("children index rules") {
    Lattice rec(1.0, 4, LatticeMode::Recombining);
    auto [up, down] = rec.children(NodeId{1, 0});
    CHECK(up == NodeId{2, 1});
    CHECK(down == NodeId{2, 0});

    Lattice full(1.0, 4, LatticeMode::FullTree);
    auto [fup, fdown] = full.children(NodeId{1, 1});
    CHECK(fup == NodeId{2, 3});
    CHECK(fdown == NodeId{2, 2});

    CHECK_THROWS_AS(rec.children(NodeId{4, 2}), TerminalNode);
    CHECK_THROWS_AS(rec.children(NodeId{2, 9}), InvalidNode);
}

TEST_CASE("walk values") {
    Lattice lat(1.0, 4, LatticeMode::Recombining);
    CHECK(lat.walk_value(Lattice::root()) == 0.0);
    CHECK(lat.walk_value(NodeId{2, 2}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lat.walk_value(NodeId{2, 0}) == doctest::Approx(-1.0).epsilon(1e-15));

    Lattice full(1.0, 3, LatticeMode::FullTree);
    // index bits encode the up-moves
    CHECK(full.walk_value(NodeId{3, 7}) == 3.0 * full.increment());
    CHECK(full.walk_value(NodeId{3, 0}) == -3.0 * full.increment());
    CHECK(full.walk_value(NodeId{2, 1}) == 0.0);
}

TEST_CASE("one-step martingale identity") {
    for (LatticeMode mode : {LatticeMode::Recombining, LatticeMode::FullTree}) {
        Lattice lat(2.0, 6, mode);
        for (int lvl = 0; lvl < lat.steps(); ++lvl) {
            for (int j = 0; j < lat.level_size(lvl); ++j) {
                const NodeId n{lvl, j};
                const auto [up, down] = lat.children(n);
                const double mid = 0.5 * (lat.walk_value(up) + lat.walk_value(down));
                CHECK(std::abs(mid - lat.walk_value(n)) <= 1e-14);
                CHECK(std::abs(lat.walk_value(up) - lat.walk_value(n) - lat.increment()) <=
                      1e-14);
                CHECK(std::abs(lat.walk_value(n) - lat.walk_value(down) - lat.increment()) <=
                      1e-14);
            }
        }
    }
}

TEST_CASE("full tree parentage is unique") {
    Lattice lat(1.0, 5, LatticeMode::FullTree);
    std::map<std::pair<int, int>, int> seen;
    for (int lvl = 0; lvl < lat.steps(); ++lvl)
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const auto [up, down] = lat.children(NodeId{lvl, j});
            ++seen[{up.level, up.index}];
            ++seen[{down.level, down.index}];
        }
    for (int lvl = 1; lvl <= lat.steps(); ++lvl)
        for (int j = 0; j < lat.level_size(lvl); ++j)
            CHECK(seen[{lvl, j}] == 1);
}

TEST_CASE("descendant ranges") {
    Lattice rec(1.0, 5, LatticeMode::Recombining);
    CHECK(rec.descendant_range(NodeId{2, 1}, 4) == std::pair<int, int>{1, 3});
    Lattice full(1.0, 5, LatticeMode::FullTree);
    CHECK(full.descendant_range(NodeId{2, 1}, 4) == std::pair<int, int>{4, 7});
    CHECK(full.descendant_range(NodeId{2, 1}, 2) == std::pair<int, int>{1, 1});
}
