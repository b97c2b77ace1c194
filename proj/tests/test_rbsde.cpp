#include <doctest.h>

#include <cmath>
#include <vector>

#include "gexp/rbsde.hpp"
#include "oracle_helpers.hpp"

using namespace gexp;

TEST_CASE("constant band with matching terminal never flushes") {
    Lattice lat(1.0, 4, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::constant(1.0), NodeFn::constant(2.0), 5.0, false};
    const auto sol = solve_drbsde(lat, GeneratorSpec::zero(), b, std::vector<double>(5, 1.0));
    for (double v : sol.x.values()) CHECK(v == 1.0);
    for (double v : sol.dk_plus.values()) CHECK(v == 0.0);
    for (double v : sol.dk_minus.values()) CHECK(v == 0.0);
}

TEST_CASE("collapsed band pins the solution regardless of the driver") {
    Lattice lat(1.0, 4, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::constant(1.5), NodeFn::constant(1.5), 5.0, false};
    const auto sol =
        solve_drbsde(lat, GeneratorSpec::kappa_abs(0.8), b, std::vector<double>(5, 1.5));
    for (double v : sol.x.values()) CHECK(v == 1.5);
}

TEST_CASE("pinned three-step instance against the straight-line oracle") {
    Lattice lat(1.0, 3, LatticeMode::FullTree);
    const BarrierSpec b = testkit::pinned_reflected_barriers();
    const auto sol =
        solve_drbsde(lat, GeneratorSpec::kappa_abs(0.5), b, b.terminal_lower(lat));
    const auto oracle = testkit::pinned_reflected_oracle();
    for (int lvl = 0; lvl <= 3; ++lvl)
        for (int j = 0; j < lat.level_size(lvl); ++j)
            CHECK(std::abs(sol.x.at(NodeId{lvl, j}) - oracle[lvl][j]) <= 1e-12);

    // frozen values from the oracle recursion
    CHECK(sol.x.at(Lattice::root()) == 1.0);  // lower barrier binds at the root
    CHECK(sol.x.at(NodeId{1, 0}) == doctest::Approx(0.11855414423419787).epsilon(1e-15));
    CHECK(sol.x.at(NodeId{1, 1}) == doctest::Approx(1.2440169358562925).epsilon(1e-15));
    CHECK(sol.dk_plus.at(Lattice::root()) ==
          doctest::Approx(1.0 - 0.51883897861876427).epsilon(1e-15));
    CHECK(sol.dk_minus.at(Lattice::root()) == 0.0);
}

TEST_CASE("terminal outside the band is rejected") {
    Lattice lat(1.0, 3, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::constant(0.0), NodeFn::constant(1.0), 5.0, false};
    CHECK_THROWS_AS(
        solve_drbsde(lat, GeneratorSpec::zero(), b, std::vector<double>(4, 1.5)),
        TerminalOutOfBand);
}

TEST_CASE("crossing barriers are rejected") {
    Lattice lat(1.0, 3, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::constant(2.0), NodeFn::constant(1.0), 5.0, false};
    CHECK_THROWS_AS(b.validate(lat, false), BarrierCrossing);
    CHECK_THROWS_AS(solve_drbsde(lat, GeneratorSpec::zero(), b, std::vector<double>(4, 1.5)),
                    BarrierCrossing);
}

TEST_CASE("increasing-lower flag is enforced when set") {
    Lattice lat(1.0, 3, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::affine(0.5, 0.0, -0.2), NodeFn::constant(2.0), 5.0, true};
    CHECK_THROWS_AS(b.validate(lat, false), HypothesisViolation);
    b.increasing_lower = false;
    CHECK_NOTHROW(b.validate(lat, false));
}

TEST_CASE("zero penalty weight reproduces the unreflected solve") {
    Lattice lat(1.0, 10, LatticeMode::Recombining);
    BarrierSpec b{NodeFn::constant(-1.0), NodeFn::constant(1.0), 5.0, false};
    std::vector<double> xi(11);
    for (int j = 0; j <= 10; ++j) xi[j] = 0.4 * std::tanh(lat.walk_value(NodeId{10, j}));
    const auto pen = solve_drbsde_penalized(lat, GeneratorSpec::kappa_abs(0.3), b, xi, 0.0);
    const auto plain = solve_bsde(lat, GeneratorSpec::kappa_abs(0.3), xi);
    for (std::size_t i = 0; i < pen.x.values().size(); ++i)
        CHECK(pen.x.values()[i] == plain.x.values()[i]);
}

TEST_CASE("inactive barriers: penalized and reflected collapse to the plain solve") {
    Lattice lat(1.0, 20, LatticeMode::Recombining);  // dt * (kappa + p) = 0.42
    BarrierSpec wide{NodeFn::constant(-100.0), NodeFn::constant(100.0), 500.0, false};
    std::vector<double> xi(21);
    for (int j = 0; j <= 20; ++j) xi[j] = std::abs(lat.walk_value(NodeId{20, j}));
    const GeneratorSpec gen = GeneratorSpec::kappa_abs(0.4);

    const auto plain = solve_bsde(lat, gen, xi);
    const auto pen = solve_drbsde_penalized(lat, gen, wide, xi, 8.0);
    const auto refl = solve_drbsde(lat, gen, wide, xi);
    for (std::size_t i = 0; i < plain.x.values().size(); ++i) {
        CHECK(pen.x.values()[i] == plain.x.values()[i]);
        CHECK(std::abs(refl.x.values()[i] - plain.x.values()[i]) <= 1e-12);
    }
    for (double v : refl.dk_plus.values()) CHECK(v == 0.0);
    for (double v : refl.dk_minus.values()) CHECK(v == 0.0);
}

TEST_CASE("penalization gap at the root shrinks as the weight doubles") {
    const auto inst = testkit::penalized_instance(3);
    const auto refl = solve_drbsde(inst.lat, inst.gen, inst.barriers, inst.terminal);
    double flush = 0.0;
    for (double v : refl.dk_plus.values()) flush += v;
    for (double v : refl.dk_minus.values()) flush += v;
    REQUIRE(flush > 0.0);  // barriers active on this instance

    std::vector<double> gaps;
    for (double p : {4.0, 8.0, 16.0, 32.0}) {
        const auto pen =
            solve_drbsde_penalized(inst.lat, inst.gen, inst.barriers, inst.terminal, p);
        gaps.push_back(
            std::abs(pen.x.at(Lattice::root()) - refl.x.at(Lattice::root())));
    }
    CHECK(gaps[1] < gaps[0]);  // strict on the first doubling
    for (std::size_t i = 1; i < gaps.size(); ++i) CHECK(gaps[i] <= gaps[i - 1]);
}

TEST_CASE("skorokhod residuals: zero on solver output, positive on a corrupted one") {
    Lattice lat(1.0, 3, LatticeMode::FullTree);
    const BarrierSpec b = testkit::pinned_reflected_barriers();
    auto sol = solve_drbsde(lat, GeneratorSpec::kappa_abs(0.5), b, b.terminal_lower(lat));

    auto res = skorokhod_residuals(lat, sol, b);
    CHECK(res.rplus == 0.0);
    CHECK(res.rminus == 0.0);

    // lift X off the lower barrier where a flush happened
    REQUIRE(sol.dk_plus.at(Lattice::root()) > 0.0);
    sol.x.at(Lattice::root()) += 0.1;
    res = skorokhod_residuals(lat, sol, b);
    CHECK(res.rplus >= 0.1 * sol.dk_plus.at(Lattice::root()) - 1e-15);
}

TEST_CASE("raising the lower barrier never lowers the solution") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto inst = testkit::random_reflected_instance(400 + seed);
        const auto base = solve_drbsde(inst.lat, inst.gen, inst.barriers, inst.terminal);

        BarrierSpec raised = inst.barriers;
        raised.lower.a0 += 0.05;  // still below U: parallel forms keep a gap >= 0.1
        std::vector<double> xi = inst.terminal;
        for (int j = 0; j < inst.lat.level_size(inst.lat.steps()); ++j) {
            const NodeId n{inst.lat.steps(), j};
            xi[j] = std::max(xi[j], raised.lower_at(inst.lat, n));
        }
        const auto up = solve_drbsde(inst.lat, inst.gen, raised, xi);
        for (std::size_t i = 0; i < base.x.values().size(); ++i)
            CHECK(up.x.values()[i] >= base.x.values()[i] - 1e-12);
    }
}

TEST_CASE("solution structure on randomized instances") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto inst = testkit::random_reflected_instance(500 + seed);
        const auto sol = solve_drbsde(inst.lat, inst.gen, inst.barriers, inst.terminal);
        const auto res = skorokhod_residuals(inst.lat, sol, inst.barriers);
        CHECK(res.rplus == 0.0);
        CHECK(res.rminus == 0.0);
        for (int lvl = 0; lvl <= inst.lat.steps(); ++lvl)
            for (int j = 0; j < inst.lat.level_size(lvl); ++j) {
                const NodeId n{lvl, j};
                CHECK(sol.x.at(n) >= inst.barriers.lower_at(inst.lat, n));
                CHECK(sol.x.at(n) <= inst.barriers.upper_at(inst.lat, n));
                CHECK(sol.dk_plus.at(n) >= 0.0);
                CHECK(sol.dk_minus.at(n) >= 0.0);
            }
    }
}

TEST_CASE("cumulative flush is path-wise and full-tree only") {
    Lattice lat(1.0, 3, LatticeMode::FullTree);
    const BarrierSpec b = testkit::pinned_reflected_barriers();
    const auto sol =
        solve_drbsde(lat, GeneratorSpec::kappa_abs(0.5), b, b.terminal_lower(lat));
    CHECK(cumulative_flush(lat, sol.dk_plus, Lattice::root()) == 0.0);
    const double at_leaf = cumulative_flush(lat, sol.dk_plus, NodeId{3, 0});
    CHECK(at_leaf >= sol.dk_plus.at(Lattice::root()));

    Lattice rec(1.0, 3, LatticeMode::Recombining);
    AdaptedProcess inc(rec);
    CHECK_THROWS_AS(cumulative_flush(rec, inc, NodeId{2, 1}), InvalidNode);
}
