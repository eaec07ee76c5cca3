#pragma once

// Concrete systems: Katz-Pavlovic dyadic model and its modified-dissipation
// variant, the truncated dyadic blowup construction, the five-mode delay
// circuit and the four-component cascade with its renormalization map.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qlab/circuit.hpp"
#include "qlab/integrator.hpp"

namespace qlab {

// ---- Katz-Pavlovic ---------------------------------------------------------

struct KPParams {
    double lambda = 2.0;
    double alpha_diss = 0.25;
    int n_lo = 0;
    int n_hi = 4;
    bool inviscid = false;  // drop dissipation entirely

    void validate() const;
    friend bool operator==(const KPParams&, const KPParams&) = default;
};

// X_n' = -lambda^{2 n alpha} X_n + lambda^{n-1} X_{n-1}^2 - lambda^n X_n X_{n+1}
// on the window; interactions reaching outside it are dropped in pairs.
CircuitSpec kp_spec(const KPParams& p);

// Dissipation lambda^n / g(lambda^n)^2 and the interaction pairs
// X_{n-1}^2 + X_{n-1} X_n, X_n X_{n+1} + X_{n+1}^2.
CircuitSpec kp_modified_spec(const KPParams& p, const std::function<double(double)>& g);

// ---- cascade checkpoints -------------------------------------------------

struct TransitionEvent {
    int n = 0;
    double t = 0.0;
    double e = 0.0;

    friend bool operator==(const TransitionEvent&, const TransitionEvent&) = default;
};

// ---- truncated dyadic model ------------------------------------------------

struct TruncatedParams {
    double lambda = 2.0;
    double alpha_diss = 0.25;
    double delta = 0.25;
    double delta_prime = 0.3;
    int n0 = 14;
    int k_max = 12;

    void validate() const;

    // Rescaled dissipation strength during stage k.
    double stage_eps(int k) const;
    // Physical time per unit of rescaled stage time during stage k.
    double stage_time_scale(int k) const;

    friend bool operator==(const TruncatedParams&, const TruncatedParams&) = default;
};

struct TruncatedRun {
    std::vector<TransitionEvent> checkpoints;  // k = 0..k_max at scales n0+k
    Trajectory trajectory;                     // physical time, modes X_{n0}..X_{n0+k_max+1}
    std::vector<double> stage_durations;       // rescaled event time of each stage
    std::vector<double> weighted_norms;        // sup_n lambda^{delta' n}|X_n| at each checkpoint
    double T_star_estimate = 0.0;
};

// Pump stages in rescaled variables, inactive modes decayed exactly.
// Throws InvalidParameter if the stage eps exceeds 0.1 and StageFailure when
// a stage misses its threshold within 10 artanh(lambda^-delta).
TruncatedRun truncated_blowup_run(const TruncatedParams& p, const IntegratorConfig& cfg);

// The rescaled stage system x' = -eps x - x y, y' = -lambda^{2 alpha} eps y + x^2.
CircuitSpec truncated_stage_spec(double eps, double lambda, double alpha_diss);

// ---- delay circuit ---------------------------------------------------------

struct DelayParams {
    double K = 10.0;
    double eps = 1e-3;
    std::optional<double> Gamma;  // unset: K^10

    double gamma() const;
    void validate() const;
    friend bool operator==(const DelayParams&, const DelayParams&) = default;
};

inline constexpr double kGammaMax = 700.0;

// Modes a, b, c, d, at (the output mode) as components 1..5 at scale 0.
// c is tagged amplifier-seeded.
CircuitSpec delay_circuit_spec(const DelayParams& p);
StateVector delay_initial_state();

struct DelayRun {
    Trajectory trajectory;
    double t_c = 0.0;        // first time c >= eps^2 / Gamma
    double t_rise_lo = 0.0;  // first time at >= 0.1 (inf if never)
    double t_rise_hi = 0.0;  // first time at >= 0.9 (inf if never)
    double at_final = 0.0;
    double pre_a_dev = 0.0;  // max |a - 1| for t <= t_c - 1/sqrt(K)
    double pre_other = 0.0;  // max |b|,|c|,|d|,|at| over the same range
};

DelayRun run_delay_circuit(const DelayParams& p, const IntegratorConfig& cfg, double t_end);

// ---- Table-1 cascade -------------------------------------------------------

struct CascadeParams {
    double eps0 = 0.5;
    double eps = 1e-2;
    double K = 8.0;
    std::optional<double> Gamma;  // unset: K^10
    int n_lo = 0;
    int n_hi = 3;
    bool viscous = false;
    double alpha_diss_exponent = 2.0;
    int n0 = 0;

    static constexpr int m = 4;

    double gamma() const;
    double ratio() const { return 1.0 + eps0; }
    void validate() const;
    friend bool operator==(const CascadeParams&, const CascadeParams&) = default;
};

struct CascadeRow {
    int i1, i2, i3;
    int mu1, mu2, mu3;
    double alpha;
};

// The sixteen nonzero coefficients.
std::vector<CascadeRow> cascade_coefficients(const CascadeParams& p);

struct BoundaryDrop {
    std::size_t row = 0;  // index into cascade_coefficients
    int n = 0;            // scale of the output mode
    ModeKey missing;      // first input outside the window
};

struct CascadeBuild {
    CircuitSpec spec;
    std::vector<BoundaryDrop> dropped;
};

std::string cascade_label(int component, int scale);

// Modes X_{i,n} ordered by scale then component; X_{3,n} amplifier-seeded.
CascadeBuild cascade_build(const CascadeParams& p);
CircuitSpec cascade_spec(const CascadeParams& p);

// X_{1,n0} = 1, everything else 0.
StateVector cascade_initial_state(const CircuitSpec& spec, int n0);

struct CascadeRunOptions {
    double t_end_rescaled = 4.0;       // horizon in units of (1+eps0)^{-5 n0/2}
    double sample_rescaled = 2e-3;     // sample spacing relative to the active scale
    int max_scale = 0;                 // window cap; 0 means n0 + 12
    double window_threshold = 1e-12;
    bool grow = true;                  // false: keep [n_lo, n_hi] fixed

    friend bool operator==(const CascadeRunOptions&, const CascadeRunOptions&) = default;
};

// Starts at the window [n0, n0 + 3] (or p's window when grow is false).
WindowedRun run_cascade(const CascadeParams& p, const IntegratorConfig& cfg, const CascadeRunOptions& opt);

// tau = (t - t_N)(1+eps0)^{5N/2} e_N, values / e_N, mode (i, n) -> (i, n - N).
Trajectory rescale_run(const Trajectory& traj, const CascadeParams& p, int N, double e_N, double t_N);
Trajectory unrescale_run(const Trajectory& traj, const CascadeParams& p, int N, double e_N, double t_N);

// ---- bundled systems -------------------------------------------------------

struct BundledSystem {
    std::string name;
    CircuitSpec spec;
    StateVector initial;
    bool inviscid = true;
};

std::vector<BundledSystem> bundled_systems();
BundledSystem bundled_system(const std::string& name);  // throws InvalidInput

}  // namespace qlab
