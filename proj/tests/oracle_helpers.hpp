// Test-side oracles and instance generators. Everything here stays
// independent of the solver code paths it is used to check: the dynamic
// programs below run on plain arrays with their own arithmetic.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gexp/bsde.hpp"
#include "gexp/game.hpp"
#include "gexp/lattice.hpp"
#include "gexp/rbsde.hpp"

namespace testkit {

struct Rng {
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uni(double a, double b) {
        return a + (b - a) * std::uniform_real_distribution<double>(0.0, 1.0)(eng);
    }
    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(eng); }
    std::mt19937_64 eng;
};

inline gexp::GeneratorSpec random_coherent_generator(Rng& rng, double max_m = 1.0) {
    switch (rng.pick(3)) {
        case 0: return gexp::GeneratorSpec::zero();
        case 1: return gexp::GeneratorSpec::kappa_abs(rng.uni(0.05, max_m));
        default: return gexp::GeneratorSpec::linear_z(rng.uni(-max_m, max_m));
    }
}

/// Clipped parallel forms: U = max(0, affine_L + gap0 + gapt * t) dominates
/// L = max(0, affine_L) for any gap0 > 0, gapt >= 0, on every node.
inline gexp::BarrierSpec random_parallel_barriers(Rng& rng) {
    const double a0 = rng.uni(-0.4, 0.2);
    const double a1 = rng.uni(-0.5, 0.5);
    const double a2 = rng.uni(-0.4, 0.4);
    const double gap0 = rng.uni(0.1, 0.5);
    const double gapt = rng.uni(0.0, 0.3);
    return gexp::BarrierSpec{gexp::NodeFn::clipped(a0, a1, a2),
                             gexp::NodeFn::clipped(a0 + gap0, a1, a2 + gapt), 5.0, false};
}

/// Terminal between the barriers: lambda * L(T) + (1 - lambda) * U(T).
inline std::vector<double> mixed_terminal(const gexp::Lattice& lat,
                                          const gexp::BarrierSpec& b, double lambda) {
    std::vector<double> xi(static_cast<std::size_t>(lat.level_size(lat.steps())));
    for (int j = 0; j < lat.level_size(lat.steps()); ++j) {
        const gexp::NodeId n{lat.steps(), j};
        xi[static_cast<std::size_t>(j)] =
            lambda * b.lower_at(lat, n) + (1.0 - lambda) * b.upper_at(lat, n);
    }
    return xi;
}

struct ReflectedInstance {
    gexp::Lattice lat;
    gexp::GeneratorSpec gen;
    gexp::BarrierSpec barriers;
    std::vector<double> terminal;
};

inline ReflectedInstance random_reflected_instance(std::uint64_t seed) {
    Rng rng(0x9e3779b97f4a7c15ULL ^ (seed * 0x2545f4914f6cdd1dULL));
    const bool full = rng.pick(3) == 0;
    const int steps = full ? 2 + rng.pick(7) : 2 + rng.pick(30);
    gexp::Lattice lat(rng.uni(0.4, 2.0), steps,
                      full ? gexp::LatticeMode::FullTree : gexp::LatticeMode::Recombining);
    // dt <= 1 on these lattices, so M <= 0.5 keeps dt * M inside the step guard
    gexp::GeneratorSpec gen = random_coherent_generator(rng, 0.5);
    gexp::BarrierSpec b = random_parallel_barriers(rng);
    std::vector<double> xi = mixed_terminal(lat, b, rng.uni(0.0, 1.0));
    return ReflectedInstance{lat, gen, b, std::move(xi)};
}

/// Fine recombining lattice (N = 80 over [0, 1]) sized for barrier-penalty
/// weights up to 32; barriers from the parallel-clipped family, terminal mixed
/// between them. Every seed checked here keeps the barriers active.
inline ReflectedInstance penalized_instance(std::uint64_t seed) {
    Rng rng(0x51a7e * seed + 17);
    gexp::Lattice lat(1.0, 80, gexp::LatticeMode::Recombining);
    const int fam = static_cast<int>(rng.uni(0, 3));
    gexp::GeneratorSpec gen = fam == 0   ? gexp::GeneratorSpec::zero()
                              : fam == 1 ? gexp::GeneratorSpec::kappa_abs(rng.uni(0.1, 0.5))
                                         : gexp::GeneratorSpec::linear_z(rng.uni(-0.5, 0.5));
    const double a0 = rng.uni(-0.4, 0.2), a1 = rng.uni(-0.5, 0.5), a2 = rng.uni(-0.4, 0.4);
    const double gap0 = rng.uni(0.1, 0.5), gapt = rng.uni(0.0, 0.3);
    gexp::BarrierSpec b{gexp::NodeFn::clipped(a0, a1, a2),
                        gexp::NodeFn::clipped(a0 + gap0, a1, a2 + gapt), 5.0, false};
    std::vector<double> xi = mixed_terminal(lat, b, rng.uni(0.0, 1.0));
    return ReflectedInstance{lat, gen, b, std::move(xi)};
}

/// Classical two-obstacle dynamic program for the zero generator:
/// V(T) = L(T), V = clamp((V_up + V_down) / 2, L, U). Own loops, no solver.
inline double classical_dynkin_value(const gexp::Lattice& lat, const gexp::BarrierSpec& b) {
    std::vector<double> next(static_cast<std::size_t>(lat.level_size(lat.steps())));
    for (int j = 0; j < lat.level_size(lat.steps()); ++j)
        next[static_cast<std::size_t>(j)] = b.lower_at(lat, gexp::NodeId{lat.steps(), j});
    for (int lvl = lat.steps() - 1; lvl >= 0; --lvl) {
        std::vector<double> cur(static_cast<std::size_t>(lat.level_size(lvl)));
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const gexp::NodeId n{lvl, j};
            const auto [up, down] = lat.children(n);
            const double cont = 0.5 * (next[static_cast<std::size_t>(up.index)] +
                                       next[static_cast<std::size_t>(down.index)]);
            const double lo = b.lower_at(lat, n);
            const double hi = b.upper_at(lat, n);
            cur[static_cast<std::size_t>(j)] = cont < lo ? lo : (cont > hi ? hi : cont);
        }
        next = std::move(cur);
    }
    return next[0];
}

/// E[xi(W_T)] on the recombining lattice via binomial weights.
inline double binomial_expectation(const gexp::Lattice& lat,
                                   const std::vector<double>& terminal) {
    const int n = lat.steps();
    double acc = 0.0;
    double coeff = 1.0;  // C(n, 0)
    for (int j = 0; j <= n; ++j) {
        acc += coeff * terminal[static_cast<std::size_t>(j)];
        coeff = coeff * static_cast<double>(n - j) / static_cast<double>(j + 1);
    }
    return acc * std::pow(0.5, n);
}

/// The pinned three-step reflected instance: full tree, T = 1, g = -|z|/2,
/// L = max(0, 1 + w - t), U = max(0, 2 + w - t), terminal L(T).
inline gexp::BarrierSpec pinned_reflected_barriers() {
    return gexp::BarrierSpec{gexp::NodeFn::clipped(1.0, 1.0, -1.0),
                             gexp::NodeFn::clipped(2.0, 1.0, -1.0), 5.0, false};
}

/// Straight-line recursion for the pinned instance, node by node on plain
/// arrays. Returns x[level][index] (full-tree indexing).
inline std::array<std::array<double, 8>, 4> pinned_reflected_oracle() {
    const double dt = 1.0 / 3.0;
    const double sdt = std::sqrt(dt);
    const double kappa = 0.5;
    auto lower = [](double t, double w) { return std::max(0.0, 1.0 + w - t); };
    auto upper = [](double t, double w) { return std::max(0.0, 2.0 + w - t); };
    auto walk = [&](int level, int k) {
        int ups = 0;
        for (int b = 0; b < level; ++b) ups += (k >> b) & 1;
        return (2.0 * ups - level) * sdt;
    };
    std::array<std::array<double, 8>, 4> x{};
    for (int k = 0; k < 8; ++k) x[3][static_cast<std::size_t>(k)] = lower(1.0, walk(3, k));
    for (int lvl = 2; lvl >= 0; --lvl) {
        const double t = lvl * dt;
        for (int k = 0; k < (1 << lvl); ++k) {
            const double xu = x[static_cast<std::size_t>(lvl + 1)][static_cast<std::size_t>(2 * k + 1)];
            const double xd = x[static_cast<std::size_t>(lvl + 1)][static_cast<std::size_t>(2 * k)];
            const double z = (xu - xd) / (2.0 * sdt);
            const double raw = 0.5 * (xu + xd) + dt * (-kappa * std::abs(z));
            const double w = walk(lvl, k);
            x[static_cast<std::size_t>(lvl)][static_cast<std::size_t>(k)] =
                std::min(std::max(raw, lower(t, w)), upper(t, w));
        }
    }
    return x;
}

}  // namespace testkit
