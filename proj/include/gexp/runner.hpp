#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gexp/config.hpp"
#include "gexp/constrained.hpp"
#include "gexp/errors.hpp"
#include "gexp/game.hpp"
#include "gexp/rbsde.hpp"

namespace gexp {

/// 17 significant digits: round-trip exact for binary64 and stable across
/// platforms, so committed reports can be compared byte for byte.
inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

struct TableRow {
    int level;
    int index;
    double t;
    double w;
    double x;
    double z;
    double kplus;
    double kminus;
};

struct RunReport {
    Scenario scenario;
    std::vector<std::pair<std::string, std::string>> summary;  // ordered key = value
    std::vector<TableRow> table;
    bool all_pass = true;
    double wall_seconds = 0.0;  // stdout only, never written to report files

    void row(const std::string& key, const std::string& value) {
        summary.emplace_back(key, value);
    }
    // without this overload a string literal would convert to bool, not string
    void row(const std::string& key, const char* value) {
        summary.emplace_back(key, std::string(value));
    }
    void row(const std::string& key, double value) { row(key, format_real(value)); }
    void row(const std::string& key, bool value) { row(key, value ? "true" : "false"); }
    void row(const std::string& key, long value) { row(key, std::to_string(value)); }

    /// One invariant = one check row. `observed` must not exceed `tolerance`.
    void check(const std::string& name, double observed, double tolerance) {
        const bool pass = observed <= tolerance;
        summary.emplace_back("check." + name + ".observed", format_real(observed));
        summary.emplace_back("check." + name + ".tolerance", format_real(tolerance));
        summary.emplace_back("check." + name + ".status", pass ? "pass" : "fail");
        all_pass = all_pass && pass;
    }

    void check_flag(const std::string& name, bool pass) {
        summary.emplace_back("check." + name + ".status", pass ? "pass" : "fail");
        all_pass = all_pass && pass;
    }
};

namespace detail {

inline void echo_scenario(RunReport& rep, const Scenario& s) {
    rep.row("scenario.name", s.name);
    rep.row("scenario.pipeline", std::string(pipeline_name(s.pipeline)));
    rep.row("lattice.T", s.lattice.horizon);
    rep.row("lattice.N", static_cast<long>(s.lattice.steps));
    rep.row("lattice.mode",
            std::string(s.lattice.mode == LatticeMode::Recombining ? "Recombining"
                                                                   : "FullTree"));
    rep.row("generator.lipschitz", s.generator.lipschitz());
    rep.row("generator.coherent", s.generator.coherent());
    rep.row("constraint.lipschitz", s.constraint.lipschitz());
    rep.row("seed", static_cast<long>(s.seed));
}

inline void fill_table(RunReport& rep, const Lattice& lat, const AdaptedProcess& x,
                       const AdaptedProcess& z, const AdaptedProcess* dkp,
                       const AdaptedProcess* dkm) {
    for (int lvl = 0; lvl <= lat.steps(); ++lvl) {
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            TableRow r{lvl,
                       j,
                       lat.time_of(lvl),
                       lat.walk_value(n),
                       x.at(n),
                       z.at(n),
                       0.0,
                       0.0};
            if (dkp && dkm) {
                if (lat.mode() == LatticeMode::FullTree) {
                    // Path-unique nodes carry the cumulative reflection.
                    r.kplus = cumulative_flush(lat, *dkp, n);
                    r.kminus = cumulative_flush(lat, *dkm, n);
                } else {
                    // Recombining nodes carry the per-node increments.
                    r.kplus = dkp->at(n);
                    r.kminus = dkm->at(n);
                }
            }
            rep.table.push_back(r);
        }
    }
}

/// Sampled (A1) Lipschitz bound and, for coherent drivers, g(t,y,0) = 0.
/// Violations are reported without tolerance: the family formulas satisfy both
/// identically.
inline void generator_sample_checks(RunReport& rep, const Scenario& s) {
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> ut(0.0, s.lattice.horizon);
    std::uniform_real_distribution<double> uv(-5.0, 5.0);

    double lip_violation = 0.0;
    const double m = s.generator.lipschitz();
    for (int i = 0; i < 1000; ++i) {
        const double t = ut(rng);
        const double y1 = uv(rng), z1 = uv(rng), y2 = uv(rng), z2 = uv(rng);
        const double lhs = std::abs(s.generator(t, y1, z1) - s.generator(t, y2, z2));
        const double rhs = m * (std::abs(y1 - y2) + std::abs(z1 - z2));
        lip_violation = std::max(lip_violation, lhs - rhs);
    }
    rep.check("generator_lipschitz_sample", lip_violation, 0.0);

    if (s.generator.coherent()) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i)
            worst = std::max(worst, std::abs(s.generator(ut(rng), uv(rng), 0.0)));
        rep.check("generator_vanishes_at_z0", worst, 0.0);
    }

    if (!s.constraint.is_none()) {
        double neg = 0.0;
        for (int i = 0; i < 1000; ++i)
            neg = std::max(neg, -s.constraint(ut(rng), uv(rng), uv(rng)));
        rep.check("constraint_nonnegative_sample", neg, 0.0);
    }
}

inline void reflected_structure_checks(RunReport& rep, const Lattice& lat,
                                       const GeneratorSpec& gen, const BarrierSpec& b,
                                       const SolutionTriple& sol, double median_tol) {
    double below = 0.0, above = 0.0, neg_flush = 0.0, median = 0.0;
    for (int lvl = 0; lvl <= lat.steps(); ++lvl) {
        for (int j = 0; j < lat.level_size(lvl); ++j) {
            const NodeId n{lvl, j};
            below = std::max(below, b.lower_at(lat, n) - sol.x.at(n));
            above = std::max(above, sol.x.at(n) - b.upper_at(lat, n));
            neg_flush = std::max(neg_flush, -sol.dk_plus.at(n));
            neg_flush = std::max(neg_flush, -sol.dk_minus.at(n));
            if (lvl < lat.steps()) {
                const auto [up, down] = lat.children(n);
                const double raw =
                    one_step(gen, lat.time_of(lvl), lat.dt(), sol.x.at(up), sol.x.at(down))
                        .value;
                const double med =
                    std::min(std::max(raw, b.lower_at(lat, n)), b.upper_at(lat, n));
                median = std::max(median, std::abs(sol.x.at(n) - med));
            }
        }
    }
    const auto res = skorokhod_residuals(lat, sol, b);
    rep.check("band_lower", below, 0.0);
    rep.check("band_upper", above, 0.0);
    rep.check("flush_nonnegative", neg_flush, 0.0);
    rep.check("skorokhod_rplus", res.rplus, 0.0);
    rep.check("skorokhod_rminus", res.rminus, 0.0);
    rep.check("median_recursion", median, median_tol);
}

inline void run_bsde(RunReport& rep, const Scenario& s, const Lattice& lat) {
    validate_step(s.generator, lat.dt(), lat.horizon());
    const auto sol = solve_bsde(lat, s.generator, s.terminal_values(lat));
    rep.row("result.root_x", sol.x.at(Lattice::root()));
    rep.row("result.root_z", sol.z.at(Lattice::root()));
    generator_sample_checks(rep, s);
    rep.check_flag("values_finite", sol.x.all_finite() && sol.z.all_finite());
    fill_table(rep, lat, sol.x, sol.z, nullptr, nullptr);
}

inline void run_reflected(RunReport& rep, const Scenario& s, const Lattice& lat) {
    const BarrierSpec& b = *s.barriers;
    const auto terminal = s.terminal_values(lat);
    const auto sol = solve_drbsde(lat, s.generator, b, terminal);
    rep.row("result.root_x", sol.x.at(Lattice::root()));
    rep.row("result.root_z", sol.z.at(Lattice::root()));
    generator_sample_checks(rep, s);
    reflected_structure_checks(rep, lat, s.generator, b, sol, s.tol.median);
    rep.check_flag("values_finite", sol.x.all_finite() && sol.z.all_finite());

    if (!s.schedule.empty()) {
        // Penalized cross-check: root gap must not grow as the weight doubles.
        std::vector<double> weights = s.schedule;
        std::sort(weights.begin(), weights.end());
        double prev_gap = 0.0;
        double worst_increase = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const auto pen = solve_drbsde_penalized(lat, s.generator, b, terminal, weights[i]);
            const double gap =
                std::abs(pen.x.at(Lattice::root()) - sol.x.at(Lattice::root()));
            rep.row("penalized.p" + format_real(weights[i]) + ".gap", gap);
            if (i > 0) worst_increase = std::max(worst_increase, gap - prev_gap);
            prev_gap = gap;
        }
        rep.check("penalized_gap_nonincreasing", worst_increase, 0.0);
    }
    fill_table(rep, lat, sol.x, sol.z, &sol.dk_plus, &sol.dk_minus);
}

inline void run_game(RunReport& rep, const Scenario& s, const Lattice& lat, bool verify) {
    const GameInstance gi(lat, s.generator, *s.barriers);
    const SolutionTriple sol = game_value(gi);
    const SaddleRules stars = saddle_times(lat, sol, gi.barriers);
    const double root_x = sol.x.at(Lattice::root());
    const double saddle = evaluate_pair(gi, stars.tau_star, stars.sigma_star, Lattice::root());

    rep.row("result.value_root", root_x);
    rep.row("result.saddle_value", saddle);
    rep.row("result.tau_star_interior", static_cast<long>(stars.tau_star.interior_stop_count()));
    rep.row("result.sigma_star_interior",
            static_cast<long>(stars.sigma_star.interior_stop_count()));

    generator_sample_checks(rep, s);
    reflected_structure_checks(rep, lat, s.generator, gi.barriers, sol, s.tol.median);
    rep.check("saddle_pair_matches_value", std::abs(saddle - root_x), s.tol.saddle);

    if (verify) {
        const SaddleReport sr = verify_saddle(gi);
        rep.row("verify.mode", std::string(sr.pairwise ? "pairwise" : "single-sided"));
        rep.row("verify.pairs_checked", sr.pairs_checked);
        rep.row("verify.lower_value", sr.lower_value);
        rep.row("verify.upper_value", sr.upper_value);
        rep.check("saddle_left_violation", sr.max_left_violation, s.tol.saddle);
        rep.check("saddle_right_violation", sr.max_right_violation, s.tol.saddle);
        rep.check("lower_value_matches", std::abs(sr.lower_value - root_x), s.tol.saddle);
        rep.check("upper_value_matches", std::abs(sr.upper_value - root_x), s.tol.saddle);
        rep.check_flag("lower_le_upper", sr.lower_value <= sr.upper_value);
    }
    fill_table(rep, lat, sol.x, sol.z, &sol.dk_plus, &sol.dk_minus);
}

inline void run_constrained(RunReport& rep, const Scenario& s, const Lattice& lat) {
    const GameInstance gi(lat, s.generator, *s.barriers);
    if (!gi.barriers.increasing_lower)
        rep.row("warn.increasing_L", std::string("disabled: limit-rule claims need L increasing"));

    const PenalizationLadder ladder = run_ladder(gi, s.constraint, s.schedule);
    for (std::size_t k = 0; k < ladder.levels.size(); ++k) {
        rep.row("ladder.m" + format_real(ladder.levels[k].m) + ".root",
                ladder.levels[k].root_value);
        if (k > 0)
            rep.row("ladder.m" + format_real(ladder.levels[k].m) + ".gap",
                    ladder.gaps[k - 1]);
    }

    const ConstrainedReport cr = constrained_report(ladder, gi, s.constraint);
    rep.row("result.value_estimate", cr.value_estimate);
    rep.row("result.residual_gap", cr.residual_gap);
    rep.row("result.tau_stable", cr.tau_stable);
    rep.row("result.sigma_stable", cr.sigma_stable);
    rep.row("result.constraint_residual", cr.constraint_residual);
    rep.row("result.sweep_performed", cr.sweep_performed);
    if (!cr.tau_stable || !cr.sigma_stable)
        rep.row("warn.limit_rules", std::string("unstabilized: top two levels disagree"));

    generator_sample_checks(rep, s);
    rep.check("ladder_values_monotone", ladder.worst_value_decrease, s.tol.monotone_slack);
    rep.check_flag("ladder_rules_monotone", ladder.rules_monotone);
    rep.check("values_bounded_by_B", ladder.max_value - gi.barriers.bound,
              s.tol.monotone_slack);
    if (cr.sweep_performed) {
        rep.row("verify.rules_swept", cr.rules_swept);
        rep.check("deviation_sweep_lower", cr.violation_lower, s.tol.sweep);
        rep.check("deviation_sweep_upper", cr.violation_upper, s.tol.sweep);
    }
    if (s.constraint.is_none()) {
        const SolutionTriple plain = game_value(gi);
        rep.check("unconstrained_reduction",
                  std::abs(cr.value_estimate - plain.x.at(Lattice::root())),
                  s.tol.reduction);
    }

    const SolutionTriple& top = ladder.levels.back().sol;
    fill_table(rep, lat, top.x, top.z, &top.dk_plus, &top.dk_minus);
}

inline void run_continuity(RunReport& rep, const Scenario& s, const Lattice& lat) {
    const std::vector<double> xi = s.terminal_values(lat);
    const auto seq = shrinking_terminal_sequence(xi, s.continuity_n_max);
    const ContinuityReport cr =
        continuity_from_below_check(lat, s.generator, s.constraint, seq, xi, s.schedule);

    for (std::size_t mi = 0; mi < cr.weights.size(); ++mi) {
        rep.row("continuity.m" + format_real(cr.weights[mi]) + ".last",
                cr.values[mi].back());
        rep.row("continuity.m" + format_real(cr.weights[mi]) + ".limit",
                cr.limit_values[mi]);
    }
    rep.row("result.terminal_gap", cr.terminal_gap);

    generator_sample_checks(rep, s);
    rep.check("monotone_in_n", cr.max_decrease_in_n, s.tol.monotone_slack);
    rep.check("monotone_in_m", cr.max_decrease_in_m, s.tol.monotone_slack);
    rep.check("no_overshoot", cr.max_overshoot, s.tol.monotone_slack);
    rep.check("terminal_gap", cr.terminal_gap, s.tol.gap);
    rep.check("corner_is_supremum", cr.corner_sup_gap, s.tol.monotone_slack);
    rep.check("limit_interchange", cr.interchange_gap, s.tol.gap);

    std::vector<double> m_sorted = s.schedule;
    std::sort(m_sorted.begin(), m_sorted.end());
    const double m_top = m_sorted.back();
    const auto limit_sol = solve_bsde_driver(
        lat,
        [&](NodeId, double t, double y, double z) {
            return s.generator(t, y, z) + m_top * s.constraint(t, y, z);
        },
        xi);
    fill_table(rep, lat, limit_sol.x, limit_sol.z, nullptr, nullptr);
}

}  // namespace detail

/// Runs one scenario end to end. Deterministic: identical (scenario, seed)
/// pairs produce identical reports.
inline RunReport run_scenario(const Scenario& s) {
    const auto t0 = std::chrono::steady_clock::now();

    RunReport rep;
    rep.scenario = s;
    detail::echo_scenario(rep, s);

    const Lattice lat = s.build();
    switch (s.pipeline) {
        case Pipeline::Bsde: detail::run_bsde(rep, s, lat); break;
        case Pipeline::Reflected: detail::run_reflected(rep, s, lat); break;
        case Pipeline::Game: detail::run_game(rep, s, lat, false); break;
        case Pipeline::GameVerify: detail::run_game(rep, s, lat, true); break;
        case Pipeline::Constrained: detail::run_constrained(rep, s, lat); break;
        case Pipeline::ContinuityCheck: detail::run_continuity(rep, s, lat); break;
    }
    rep.row("status", std::string(rep.all_pass ? "pass" : "fail"));

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct EmittedFiles {
    std::filesystem::path values;
    std::filesystem::path summary;
};

/// Writes the node table and the key-value summary. Files are byte-stable
/// across reruns; wall time stays out of them on purpose.
inline EmittedFiles emit_report(const RunReport& rep, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());

    EmittedFiles files{dir / (rep.scenario.name + "_values.tsv"),
                       dir / (rep.scenario.name + "_summary.txt")};

    {
        std::ofstream out(files.values, std::ios::binary);
        if (!out) throw IoError("cannot write " + files.values.string());
        out << "level\tindex\tt\tw\tX\tZ\tKplus\tKminus\n";
        for (const TableRow& r : rep.table) {
            out << r.level << '\t' << r.index << '\t' << format_real(r.t) << '\t'
                << format_real(r.w) << '\t' << format_real(r.x) << '\t' << format_real(r.z)
                << '\t' << format_real(r.kplus) << '\t' << format_real(r.kminus) << '\n';
        }
        if (!out.good()) throw IoError("short write to " + files.values.string());
    }
    {
        std::ofstream out(files.summary, std::ios::binary);
        if (!out) throw IoError("cannot write " + files.summary.string());
        for (const auto& [k, v] : rep.summary) out << k << " = " << v << '\n';
        if (!out.good()) throw IoError("short write to " + files.summary.string());
    }
    return files;
}

}  // namespace gexp
