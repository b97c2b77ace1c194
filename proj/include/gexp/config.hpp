#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gexp/constrained.hpp"
#include "gexp/errors.hpp"
#include "gexp/game.hpp"
#include "gexp/generators.hpp"
#include "gexp/lattice.hpp"
#include "gexp/rbsde.hpp"

namespace gexp {

enum class Pipeline { Bsde, Reflected, Game, GameVerify, Constrained, ContinuityCheck };

inline const char* pipeline_name(Pipeline p) {
    switch (p) {
        case Pipeline::Bsde: return "Bsde";
        case Pipeline::Reflected: return "Reflected";
        case Pipeline::Game: return "Game";
        case Pipeline::GameVerify: return "GameVerify";
        case Pipeline::Constrained: return "Constrained";
        case Pipeline::ContinuityCheck: return "ContinuityCheck";
    }
    return "?";
}

struct LatticeConfig {
    double horizon = 1.0;
    int steps = 1;
    LatticeMode mode = LatticeMode::Recombining;
};

struct Tolerances {
    double saddle = 1e-10;          // saddle inequality / value identity
    double monotone_slack = 1e-12;  // ladder and comparison slack
    double sweep = 1e-8;            // constrained deviation sweeps
    double gap = 1e-8;              // continuity terminal gap
    double median = 1e-12;          // clamp recursion identity
    double reduction = 1e-12;       // phi == 0 and classical reductions
};

struct TerminalConfig {
    NodeFn fn;
    double scale = 1.0;
};

/// One declarative run: which pipeline, on which lattice, with which driver,
/// constraint, barriers and schedule. Parsed from a JSON file (// comments
/// allowed) and fully validated before anything runs.
struct Scenario {
    std::string name;
    Pipeline pipeline = Pipeline::Bsde;
    LatticeConfig lattice;
    GeneratorSpec generator;
    ConstraintSpec constraint;
    std::optional<BarrierSpec> barriers;
    std::optional<TerminalConfig> terminal;
    std::vector<double> schedule;
    int continuity_n_max = 64;
    std::uint64_t seed = 1;
    Tolerances tol;

    Lattice build() const { return Lattice(lattice.horizon, lattice.steps, lattice.mode); }

    std::vector<double> terminal_values(const Lattice& lat) const {
        if (!terminal) throw ValidationError("terminal", "pipeline requires a terminal payoff");
        std::vector<double> xi(static_cast<std::size_t>(lat.level_size(lat.steps())));
        for (int j = 0; j < lat.level_size(lat.steps()); ++j)
            xi[static_cast<std::size_t>(j)] =
                terminal->scale *
                terminal->fn(lat.time_of(lat.steps()), lat.walk_value(NodeId{lat.steps(), j}));
        return xi;
    }
};

namespace detail {

using njson = nlohmann::json;

inline void expect_keys(const njson& j, const std::string& where,
                        const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError(where.empty() ? it.key() : where + "." + it.key(),
                                  "unknown key");
}

template <class T>
T require(const njson& j, const std::string& where, const std::string& key) {
    if (!j.contains(key)) throw ValidationError(where + key, "required key is missing");
    try {
        return j.at(key).get<T>();
    } catch (const njson::exception&) {
        throw ValidationError(where + key, "wrong type");
    }
}

template <class T>
T get_or(const njson& j, const std::string& where, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const njson::exception&) {
        throw ValidationError(where + key, "wrong type");
    }
}

inline NodeFn parse_node_fn(const njson& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where, "expected an object");
    expect_keys(j, where, {"form", "a0", "a1", "a2"});
    const std::string form = require<std::string>(j, where + ".", "form");
    NodeFn fn;
    if (form == "Constant")
        fn.form = NodeFn::Form::Constant;
    else if (form == "Affine")
        fn.form = NodeFn::Form::Affine;
    else if (form == "ClippedAffine")
        fn.form = NodeFn::Form::ClippedAffine;
    else
        throw ValidationError(where + ".form",
                              "must be Constant, Affine or ClippedAffine");
    fn.a0 = get_or<double>(j, where + ".", "a0", 0.0);
    fn.a1 = get_or<double>(j, where + ".", "a1", 0.0);
    fn.a2 = get_or<double>(j, where + ".", "a2", 0.0);
    if (fn.form == NodeFn::Form::Constant && (j.contains("a1") || j.contains("a2")))
        throw ValidationError(where, "Constant form takes a0 only");
    return fn;
}

inline GeneratorSpec parse_generator(const njson& j) {
    if (!j.is_object()) throw ValidationError("generator", "expected an object");
    expect_keys(j, "generator", {"family", "a", "b", "kappa"});
    const std::string fam = require<std::string>(j, "generator.", "family");
    if (fam == "Zero") return GeneratorSpec::zero();
    if (fam == "LinearZ") return GeneratorSpec::linear_z(require<double>(j, "generator.", "b"));
    if (fam == "KappaAbs")
        return GeneratorSpec::kappa_abs(require<double>(j, "generator.", "kappa"));
    if (fam == "LinearYZ")
        return GeneratorSpec::linear_yz(require<double>(j, "generator.", "a"),
                                        require<double>(j, "generator.", "b"));
    throw ValidationError("generator.family", "must be Zero, LinearZ, KappaAbs or LinearYZ");
}

inline ConstraintSpec parse_constraint(const njson& j) {
    if (!j.is_object()) throw ValidationError("constraint", "expected an object");
    expect_keys(j, "constraint", {"family", "lambda", "c"});
    const std::string fam = require<std::string>(j, "constraint.", "family");
    if (fam == "None") return ConstraintSpec::none();
    if (fam == "AbsZ") return ConstraintSpec::abs_z(require<double>(j, "constraint.", "lambda"));
    if (fam == "NegZ") return ConstraintSpec::neg_z(require<double>(j, "constraint.", "lambda"));
    if (fam == "ZAboveC")
        return ConstraintSpec::z_above_c(require<double>(j, "constraint.", "c"),
                                         require<double>(j, "constraint.", "lambda"));
    throw ValidationError("constraint.family", "must be None, AbsZ, NegZ or ZAboveC");
}

inline BarrierSpec parse_barriers(const njson& j) {
    if (!j.is_object()) throw ValidationError("barriers", "expected an object");
    expect_keys(j, "barriers", {"L", "U", "B", "increasing_L"});
    BarrierSpec b;
    if (!j.contains("L") || !j.contains("U"))
        throw ValidationError("barriers", "needs both L and U node functions");
    b.lower = parse_node_fn(j.at("L"), "barriers.L");
    b.upper = parse_node_fn(j.at("U"), "barriers.U");
    b.bound = get_or<double>(j, "barriers.", "B", 1.0);
    b.increasing_lower = get_or<bool>(j, "barriers.", "increasing_L", false);
    if (!(b.bound > 0.0)) throw ValidationError("barriers.B", "must be > 0");
    return b;
}

inline int line_of_offset(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

}  // namespace detail

/// Parses an override of the form "dotted.path=value" into the raw config
/// tree. The value is read as a JSON literal when possible, as a bare string
/// otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override",
                              "expected key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }

    try {
        nlohmann::json* cursor = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot - start);
            if (key.empty())
                throw ValidationError("override", "empty path segment in '" + assignment + "'");
            if (dot == std::string::npos) {
                (*cursor)[key] = value;
                return;
            }
            cursor = &(*cursor)[key];
            start = dot + 1;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("override", std::string("cannot apply '") + assignment + "': " + e.what());
    }
}

inline Scenario scenario_from_json(const nlohmann::json& j);
inline void validate_scenario(const Scenario& s);

/// Reads, parses and validates a scenario file. Any diagnostic names the
/// offending key and the rule it broke.
inline Scenario parse_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(detail::line_of_offset(text, e.byte), e.what());
    }
    for (const std::string& ov : overrides) apply_override(j, ov);
    return scenario_from_json(j);
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    using detail::get_or;
    using detail::require;

    if (!j.is_object()) throw ValidationError("", "config root must be an object");
    detail::expect_keys(j, "",
                        {"name", "pipeline", "lattice", "generator", "constraint",
                         "barriers", "terminal", "schedule", "continuity", "seed",
                         "tolerances"});

    Scenario s;
    s.name = require<std::string>(j, "", "name");
    if (s.name.empty() ||
        s.name.find_first_not_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
            std::string::npos)
        throw ValidationError("name", "use [A-Za-z0-9_-]+ (it names the report files)");

    const std::string pipe = require<std::string>(j, "", "pipeline");
    if (pipe == "Bsde") s.pipeline = Pipeline::Bsde;
    else if (pipe == "Reflected") s.pipeline = Pipeline::Reflected;
    else if (pipe == "Game") s.pipeline = Pipeline::Game;
    else if (pipe == "GameVerify") s.pipeline = Pipeline::GameVerify;
    else if (pipe == "Constrained") s.pipeline = Pipeline::Constrained;
    else if (pipe == "ContinuityCheck") s.pipeline = Pipeline::ContinuityCheck;
    else
        throw ValidationError("pipeline",
                              "must be one of Bsde, Reflected, Game, GameVerify, "
                              "Constrained, ContinuityCheck");

    {
        if (!j.contains("lattice")) throw ValidationError("lattice", "required key is missing");
        const auto& jl = j.at("lattice");
        if (!jl.is_object()) throw ValidationError("lattice", "expected an object");
        detail::expect_keys(jl, "lattice", {"T", "N", "mode"});
        s.lattice.horizon = require<double>(jl, "lattice.", "T");
        s.lattice.steps = require<int>(jl, "lattice.", "N");
        const std::string mode = get_or<std::string>(jl, "lattice.", "mode", "Recombining");
        if (mode == "Recombining") s.lattice.mode = LatticeMode::Recombining;
        else if (mode == "FullTree") s.lattice.mode = LatticeMode::FullTree;
        else throw ValidationError("lattice.mode", "must be Recombining or FullTree");
        if (!(s.lattice.horizon > 0.0)) throw ValidationError("lattice.T", "must be > 0");
        if (s.lattice.steps < 1) throw ValidationError("lattice.N", "must be >= 1");
        if (s.lattice.mode == LatticeMode::FullTree &&
            s.lattice.steps > Lattice::kMaxFullTreeDepth)
            throw ValidationError("lattice.N", "full-tree mode is capped at N <= 12");
    }

    s.generator = j.contains("generator") ? detail::parse_generator(j.at("generator"))
                                          : GeneratorSpec::zero();
    s.constraint = j.contains("constraint") ? detail::parse_constraint(j.at("constraint"))
                                            : ConstraintSpec::none();
    if (j.contains("barriers")) {
        s.barriers = detail::parse_barriers(j.at("barriers"));
        // The constrained game's limit-rule claims need L increasing; enforce it
        // unless the config opts out explicitly.
        if (s.pipeline == Pipeline::Constrained && !j.at("barriers").contains("increasing_L"))
            s.barriers->increasing_lower = true;
    }

    if (j.contains("terminal")) {
        const auto& jt = j.at("terminal");
        if (!jt.is_object()) throw ValidationError("terminal", "expected an object");
        detail::expect_keys(jt, "terminal", {"form", "a0", "a1", "a2", "scale"});
        TerminalConfig tc;
        nlohmann::json fn_part = jt;
        fn_part.erase("scale");
        tc.fn = detail::parse_node_fn(fn_part, "terminal");
        tc.scale = get_or<double>(jt, "terminal.", "scale", 1.0);
        s.terminal = tc;
    }

    if (j.contains("schedule")) {
        try {
            s.schedule = j.at("schedule").get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError("schedule", "expected an array of numbers");
        }
    }

    if (j.contains("continuity")) {
        const auto& jc = j.at("continuity");
        if (!jc.is_object()) throw ValidationError("continuity", "expected an object");
        detail::expect_keys(jc, "continuity", {"n_max"});
        s.continuity_n_max = get_or<int>(jc, "continuity.", "n_max", 64);
        if (s.continuity_n_max < 2) throw ValidationError("continuity.n_max", "must be >= 2");
    }

    s.seed = get_or<std::uint64_t>(j, "", "seed", 1);

    if (j.contains("tolerances")) {
        const auto& jt = j.at("tolerances");
        if (!jt.is_object()) throw ValidationError("tolerances", "expected an object");
        detail::expect_keys(jt, "tolerances",
                            {"saddle", "monotone_slack", "sweep", "gap", "median",
                             "reduction"});
        s.tol.saddle = get_or<double>(jt, "tolerances.", "saddle", s.tol.saddle);
        s.tol.monotone_slack =
            get_or<double>(jt, "tolerances.", "monotone_slack", s.tol.monotone_slack);
        s.tol.sweep = get_or<double>(jt, "tolerances.", "sweep", s.tol.sweep);
        s.tol.gap = get_or<double>(jt, "tolerances.", "gap", s.tol.gap);
        s.tol.median = get_or<double>(jt, "tolerances.", "median", s.tol.median);
        s.tol.reduction = get_or<double>(jt, "tolerances.", "reduction", s.tol.reduction);
    }

    validate_scenario(s);
    return s;
}

/// Cross-field validation: builds the lattice, checks barrier geometry,
/// enumeration caps and step sizes for the pipeline at hand.
inline void validate_scenario(const Scenario& s) {
    const Lattice lat = s.build();

    const bool needs_barriers = s.pipeline == Pipeline::Reflected ||
                                s.pipeline == Pipeline::Game ||
                                s.pipeline == Pipeline::GameVerify ||
                                s.pipeline == Pipeline::Constrained;
    if (needs_barriers && !s.barriers)
        throw ValidationError("barriers", "pipeline requires barriers");

    if (s.barriers) {
        try {
            s.barriers->validate(lat, s.pipeline == Pipeline::Constrained);
        } catch (const BarrierCrossing&) {
            throw ValidationError("barriers", "L <= U must hold at every node");
        } catch (const HypothesisViolation& e) {
            throw ValidationError("barriers", e.what());
        }
    }

    const bool game_like = s.pipeline == Pipeline::Game ||
                           s.pipeline == Pipeline::GameVerify ||
                           s.pipeline == Pipeline::Constrained;
    if (game_like) {
        if (!s.generator.coherent())
            throw ValidationError("generator", "game pipelines need g(t,y,0) = 0");
        if (s.terminal)
            throw ValidationError("terminal",
                                  "game pipelines fix the terminal payoff to L(T)");
    }

    if ((s.pipeline == Pipeline::Bsde || s.pipeline == Pipeline::Reflected ||
         s.pipeline == Pipeline::ContinuityCheck) &&
        !s.terminal)
        throw ValidationError("terminal", "pipeline requires a terminal payoff");

    if (s.pipeline == Pipeline::GameVerify &&
        lat.nonterminal_count() > static_cast<std::size_t>(kEnumerationCap))
        throw ValidationError("lattice",
                              "GameVerify enumerates stopping rules; needs at most " +
                                  std::to_string(kEnumerationCap) + " nonterminal nodes");

    if (s.pipeline == Pipeline::Constrained || s.pipeline == Pipeline::ContinuityCheck) {
        if (s.schedule.empty())
            throw ValidationError("schedule", "pipeline requires a penalty schedule");
        for (double m : s.schedule)
            if (!(m >= 0.0)) throw ValidationError("schedule", "weights must be >= 0");
    }

    if (s.pipeline == Pipeline::ContinuityCheck) {
        const auto xi = s.terminal_values(lat);
        for (double v : xi)
            if (v < 0.0)
                throw ValidationError("terminal",
                                      "continuity check needs a nonnegative terminal");
    }

    // Step-size guard for whatever driver the pipeline will actually run.
    double m_eff = s.generator.lipschitz();
    if (s.pipeline == Pipeline::Constrained || s.pipeline == Pipeline::ContinuityCheck) {
        double m_max = 0.0;
        for (double m : s.schedule) m_max = std::max(m_max, m);
        m_eff = effective_lipschitz(s.generator, s.constraint, m_max);
    } else if (s.pipeline == Pipeline::Reflected && !s.schedule.empty()) {
        double p_max = 0.0;
        for (double p : s.schedule) p_max = std::max(p_max, p);
        m_eff = s.generator.lipschitz() + p_max;
    }
    validate_step(m_eff, lat.dt(), lat.horizon());
}

}  // namespace gexp
