#pragma once

// Observables of a trajectory: per-scale energies, checkpoint detection,
// blowup-time extrapolation, the energy identity, the checkpoint-interval
// energy bounds and the rotor equipartition average.

#include <string>
#include <vector>

#include "qlab/integrator.hpp"
#include "qlab/models.hpp"

namespace qlab {

struct EnergyProfile {
    std::vector<int> scales;                   // ascending
    std::vector<double> times;
    std::vector<std::vector<double>> by_scale; // by_scale[s][i] = E_{scales[s]}(times[i])
    std::vector<double> total;
    std::vector<double> dissipation;

    // Throws ShapeError for an absent scale.
    const std::vector<double>& at_scale(int n) const;
    bool has_scale(int n) const;
};

// Throws ShapeError unless every scale carries the same component set.
EnergyProfile energy_profile(const Trajectory& traj);

struct DetectOptions {
    double dominance = 0.4;   // E_n must be at least this share of the total
    double prominence = 0.01; // relative drop that confirms a maximum
    int component = 1;
};

// First qualifying local maximum of X_{component,n} per scale, ordered by
// time. The first sample counts as a maximum when it is not below the next.
// A maximum is confirmed only if X later falls by the prominence fraction
// before exceeding it; this skips the shallow pauses of X while it is still
// being fed from the scale below. Unconfirmed maxima at the end of the
// trajectory are not reported.
std::vector<TransitionEvent> detect_transitions(const Trajectory& traj, const DetectOptions& opt = {});

struct Extrapolation {
    double T_star = 0.0;       // +inf when no geometric decay is seen
    double ratio = 0.0;        // fitted gap ratio
    double fit_residual = 0.0; // rms of log-gap residuals
    bool finite() const;
};

// Least-squares fit of log(gap_k) against k. Throws InvalidInput for fewer
// than four events or non-increasing times.
Extrapolation blowup_extrapolate(const std::vector<TransitionEvent>& events);

// |E(T) + D(T) - E(0)| / E(0); throws InvalidInput when E(0) = 0.
double energy_identity_residual(const Trajectory& traj);

struct BoundConstants {
    double C1 = 0.0, rho1 = 1.0;  // E_{n-m} <= C1 rho1^m e^2, m >= 2
    double C2 = 0.0, rho2 = 1.0;  // E_{n+m} <= C2 rho2^-m e^2, m >= 1

    // K^-10, (1+eps0)^{1/10}, K^-30, (1+eps0)^{10}
    static BoundConstants asymptotic(double eps0, double K);

    friend bool operator==(const BoundConstants&, const BoundConstants&) = default;
};

struct BoundReport {
    std::string id;           // before-en, during-en, after-en
    double max_ratio = 0.0;   // worst E / bound
    int worst_scale = 0;      // n of the interval [t_{n-1}, t_n] attaining it
    double worst_time = 0.0;
    bool pass = true;
};

// Checks every interval between consecutive events; e = e_{n-1}.
std::vector<BoundReport> monitor_proposition_bounds(const Trajectory& traj, const std::vector<TransitionEvent>& events,
                                                    const BoundConstants& c);

struct EquipartitionResult {
    double deviation = 0.0;  // |mean x^2 - E/2|
    double bound = 0.0;      // E / (alpha |z| |window|)
    double z_drift = 0.0;    // max relative change of z over the window
    double energy = 0.0;     // x^2 + y^2 at the window start
};

// Trapezoid average of x^2 over the samples in [t0, t1].
EquipartitionResult equipartition_check(const Trajectory& traj, const ModeId& x, const ModeId& y, const ModeId& z,
                                        double alpha, double t0, double t1);

}  // namespace qlab
