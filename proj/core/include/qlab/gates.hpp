#pragma once

// Quadratic logic gates as term-list builders, plus their closed-form
// solutions. Circuits are formed by concatenating term lists.

#include <array>
#include <utility>
#include <vector>

#include "qlab/circuit.hpp"

namespace qlab {

class GateParams {
  public:
    // Throws InvalidParameter unless alpha is finite and > 0.
    explicit GateParams(double alpha);
    double alpha() const noexcept { return alpha_; }

  private:
    double alpha_;
};

// x' = -a x y,  y' = a x^2
std::vector<InteractionTerm> pump_terms(const ModeId& x, const ModeId& y, const GateParams& p);

// x' = -a y^2,  y' = a x y
std::vector<InteractionTerm> amplifier_terms(const ModeId& x, const ModeId& y, const GateParams& p);

// x' = -a y z,  y' = a x z,  z' = 0
std::vector<InteractionTerm> rotor_terms(const ModeId& x, const ModeId& y, const ModeId& z,
                                         const GateParams& p);

// Saturating hyperbolic functions; |arg| >= 40 returns the limit value.
double sech_clamped(double arg);
double tanh_clamped(double arg);

// (A sech(aAt), A tanh(aAt)): the pump started from (A, 0).
std::pair<double, double> pump_closed_form(double A, double alpha, double t);

// (A tanh(aA(T-t)), A sech(aA(T-t)))
std::pair<double, double> amplifier_closed_form(double A, double alpha, double T, double t);

// (x0, y0) rotated by alpha * z0 * t; z unchanged.
std::array<double, 3> rotor_closed_form(double x0, double y0, double z0, double alpha, double t);

}  // namespace qlab
