#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "gexp/errors.hpp"

namespace gexp {

/// Parametric driver families g(t, y, z). Closed families keep the Lipschitz
/// constant known, which the implicit one-step scheme needs for its step-size
/// guard (see validate_step).
enum class GeneratorFamily { Zero, LinearZ, KappaAbs, LinearYZ };

struct GeneratorSpec {
    GeneratorFamily family = GeneratorFamily::Zero;
    double a = 0.0;      // y coefficient (LinearYZ)
    double b = 0.0;      // z coefficient (LinearZ, LinearYZ)
    double kappa = 0.0;  // ambiguity intensity (KappaAbs)

    static GeneratorSpec zero() { return {}; }

    static GeneratorSpec linear_z(double b) {
        GeneratorSpec s;
        s.family = GeneratorFamily::LinearZ;
        s.b = b;
        return s;
    }

    /// g(t,y,z) = -kappa * |z|: the worst-case drift under kappa-ignorance.
    static GeneratorSpec kappa_abs(double kappa) {
        if (kappa < 0.0)
            throw ValidationError("generator.kappa", "must be >= 0");
        GeneratorSpec s;
        s.family = GeneratorFamily::KappaAbs;
        s.kappa = kappa;
        return s;
    }

    static GeneratorSpec linear_yz(double a, double b) {
        GeneratorSpec s;
        s.family = GeneratorFamily::LinearYZ;
        s.a = a;
        s.b = b;
        return s;
    }

    double lipschitz() const {
        switch (family) {
            case GeneratorFamily::Zero: return 0.0;
            case GeneratorFamily::LinearZ: return std::abs(b);
            case GeneratorFamily::KappaAbs: return kappa;
            case GeneratorFamily::LinearYZ: return std::max(std::abs(a), std::abs(b));
        }
        return 0.0;
    }

    /// True when g(t, y, 0) = 0 identically. Stopped evaluation and the game
    /// pipelines require this; LinearYZ with a != 0 is the one family that
    /// breaks it and stays confined to raw backward solves.
    bool coherent() const {
        return family != GeneratorFamily::LinearYZ || a == 0.0;
    }

    double operator()(double /*t*/, double y, double z) const {
        switch (family) {
            case GeneratorFamily::Zero: return 0.0;
            case GeneratorFamily::LinearZ: return b * z;
            case GeneratorFamily::KappaAbs: return -kappa * std::abs(z);
            case GeneratorFamily::LinearYZ: return a * y + b * z;
        }
        return 0.0;
    }
};

inline double eval_generator(const GeneratorSpec& g, double t, double y, double z) {
    return g(t, y, z);
}

/// Nonnegative constraint families phi(t, y, z); the admissible set at each t
/// is {phi = 0}, which always contains (y, 0).
enum class ConstraintFamily { None, AbsZ, NegZ, ZAboveC };

struct ConstraintSpec {
    ConstraintFamily family = ConstraintFamily::None;
    double lambda = 0.0;
    double c = 0.0;

    static ConstraintSpec none() { return {}; }

    static ConstraintSpec abs_z(double lambda) { return make(ConstraintFamily::AbsZ, lambda, 0.0); }
    static ConstraintSpec neg_z(double lambda) { return make(ConstraintFamily::NegZ, lambda, 0.0); }

    static ConstraintSpec z_above_c(double c, double lambda) {
        if (c < 0.0)
            throw ValidationError("constraint.c", "must be >= 0");
        return make(ConstraintFamily::ZAboveC, lambda, c);
    }

    bool is_none() const { return family == ConstraintFamily::None; }

    double lipschitz() const { return family == ConstraintFamily::None ? 0.0 : lambda; }

    double operator()(double /*t*/, double /*y*/, double z) const {
        switch (family) {
            case ConstraintFamily::None: return 0.0;
            case ConstraintFamily::AbsZ: return lambda * std::abs(z);
            case ConstraintFamily::NegZ: return lambda * std::max(-z, 0.0);
            case ConstraintFamily::ZAboveC: return lambda * std::max(z - c, 0.0);
        }
        return 0.0;
    }

private:
    static ConstraintSpec make(ConstraintFamily f, double lambda, double c) {
        if (lambda < 0.0)
            throw ValidationError("constraint.lambda", "must be >= 0");
        ConstraintSpec s;
        s.family = f;
        s.lambda = lambda;
        s.c = c;
        return s;
    }
};

inline double eval_constraint(const ConstraintSpec& phi, double t, double y, double z) {
    return phi(t, y, z);
}

/// Step-size guard for the implicit one-step scheme: the Picard map is a
/// contraction iff dt * M_eff <= 1/2, where M_eff is the Lipschitz constant of
/// whatever driver is effective at solve time (base M, M + m*M_phi for a
/// penalty ladder level, M + p for barrier penalization).
inline void validate_step(double m_eff, double dt, double horizon) {
    if (m_eff < 0.0)
        throw ValidationError("lipschitz", "effective Lipschitz constant must be >= 0");
    if (dt * m_eff <= 0.5)
        return;
    int min_steps = std::max(1, static_cast<int>(std::ceil(2.0 * m_eff * horizon)));
    throw StepTooCoarse(
        "time step too coarse: dt * M_eff = " + std::to_string(dt * m_eff) +
            " > 0.5; need N >= " + std::to_string(min_steps) +
            " (or a smaller penalty weight)",
        min_steps);
}

inline void validate_step(const GeneratorSpec& g, double dt, double horizon) {
    validate_step(g.lipschitz(), dt, horizon);
}

/// Effective constant for a penalized driver g + weight * phi.
inline double effective_lipschitz(const GeneratorSpec& g, const ConstraintSpec& phi,
                                  double weight) {
    return g.lipschitz() + weight * phi.lipschitz();
}

}  // namespace gexp
