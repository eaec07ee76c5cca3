#include "qlab/gates.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qlab/error.hpp"

namespace qlab {

namespace {

constexpr double kClamp = 40.0;

void require_distinct(const ModeId& a, const ModeId& b, const char* gate) {
    if (a == b) {
        throw InvalidInput(fmt::format("{} gate needs distinct modes, got ({},{}) twice", gate,
                                       a.component, a.scale));
    }
}

}  // namespace

GateParams::GateParams(double alpha) : alpha_(alpha) {
    if (!std::isfinite(alpha) || !(alpha > 0.0)) {
        throw InvalidParameter(fmt::format("GateParams: alpha must be finite and > 0, got {}", alpha));
    }
}

std::vector<InteractionTerm> pump_terms(const ModeId& x, const ModeId& y, const GateParams& p) {
    require_distinct(x, y, "pump");
    return {{x, x, y, -p.alpha()}, {y, x, x, p.alpha()}};
}

std::vector<InteractionTerm> amplifier_terms(const ModeId& x, const ModeId& y, const GateParams& p) {
    require_distinct(x, y, "amplifier");
    return {{x, y, y, -p.alpha()}, {y, x, y, p.alpha()}};
}

std::vector<InteractionTerm> rotor_terms(const ModeId& x, const ModeId& y, const ModeId& z,
                                         const GateParams& p) {
    require_distinct(x, y, "rotor");
    require_distinct(x, z, "rotor");
    require_distinct(y, z, "rotor");
    return {{x, y, z, -p.alpha()}, {y, x, z, p.alpha()}};
}

double sech_clamped(double arg) {
    const double a = std::fabs(arg);
    if (a >= kClamp) return 0.0;
    const double e = std::exp(-a);
    return 2.0 * e / (1.0 + e * e);
}

double tanh_clamped(double arg) {
    const double a = std::fabs(arg);
    if (a >= kClamp) return std::copysign(1.0, arg);
    const double e = std::exp(-2.0 * a);
    return std::copysign((1.0 - e) / (1.0 + e), arg);
}

std::pair<double, double> pump_closed_form(double A, double alpha, double t) {
    const double s = alpha * A * t;
    return {A * sech_clamped(s), A * tanh_clamped(s)};
}

std::pair<double, double> amplifier_closed_form(double A, double alpha, double T, double t) {
    const double s = alpha * A * (T - t);
    return {A * tanh_clamped(s), A * sech_clamped(s)};
}

std::array<double, 3> rotor_closed_form(double x0, double y0, double z0, double alpha, double t) {
    const double theta = alpha * z0 * t;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {x0 * c - y0 * s, y0 * c + x0 * s, z0};
}

}  // namespace qlab
