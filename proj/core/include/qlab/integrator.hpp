#pragma once

// Adaptive Dormand-Prince 5(4) integration of CircuitSpec systems with dense
// output, threshold events and scale-window growth.

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qlab/circuit.hpp"

namespace qlab {

struct IntegratorConfig {
    double rtol = 1e-10;
    double atol = 1e-14;          // default absolute tolerance
    double atol_seeded = 1e-24;   // for modes tagged amplifier-seeded
    std::map<std::string, double> atol_overrides;  // by mode label
    double h_init = 0.0;          // 0: automatic starting step
    double h_min = 0.0;           // 0: 16 ulp of the current time
    double h_max = std::numeric_limits<double>::infinity();
    double event_tol = 1e-12;     // bisection width for event location [time]
    double sample_interval = 0.0; // 0: one sample per accepted step
    std::size_t max_steps = 200'000'000;

    // Throws InvalidParameter on violated invariants.
    void validate() const;

    // Absolute tolerance per mode of spec.
    std::vector<double> atol_for(const CircuitSpec& spec) const;

    friend bool operator==(const IntegratorConfig&, const IntegratorConfig&) = default;
};

struct StepStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evals = 0;

    StepStats& operator+=(const StepStats& o) {
        accepted += o.accepted;
        rejected += o.rejected;
        rhs_evals += o.rhs_evals;
        return *this;
    }
};

// Ordered samples (t, X(t), D(t)) where D is the accumulated dissipation
// integral of sum_j nu_j X_j^2.
class Trajectory {
  public:
    Trajectory() = default;
    explicit Trajectory(std::vector<ModeId> modes) : modes_(std::move(modes)) {}

    const std::vector<ModeId>& modes() const noexcept { return modes_; }
    std::size_t mode_count() const noexcept { return modes_.size(); }
    std::size_t size() const noexcept { return times_.size(); }
    bool empty() const noexcept { return times_.empty(); }

    const std::vector<double>& times() const noexcept { return times_; }
    double time(std::size_t i) const { return times_[i]; }
    std::span<const double> state(std::size_t i) const {
        return {values_.data() + i * modes_.size(), modes_.size()};
    }
    StateVector state_vector(std::size_t i) const;
    double dissipation(std::size_t i) const { return dissipation_[i]; }
    double dissipation_integral() const { return dissipation_.empty() ? 0.0 : dissipation_.back(); }
    const std::vector<double>& dissipation_series() const noexcept { return dissipation_; }
    std::vector<double> column(std::size_t mode) const;
    std::size_t mode_index(const ModeKey& key) const;  // throws ShapeError

    const StepStats& stats() const noexcept { return stats_; }
    StepStats& stats() noexcept { return stats_; }

    // Throws InvalidInput unless t is strictly after the last sample.
    void append(double t, std::span<const double> x, double dissipation);

    // Appends modes; earlier samples get amplitude 0 for them.
    void add_modes(const std::vector<ModeId>& extra);

    // Appends all samples of other with t > back().t; mode lists must match.
    void extend(const Trajectory& other);

  private:
    std::vector<ModeId> modes_;
    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<double> dissipation_;
    StepStats stats_;
};

// One adaptive integration context. Not copyable across threads; independent
// instances may run concurrently.
class DormandPrince45 {
  public:
    DormandPrince45(const CircuitSpec& spec, const StateVector& state0, const IntegratorConfig& cfg,
                    double t_target, double dissipation0 = 0.0);

    // Takes one accepted step, never past t_limit. Throws StiffnessFailure or
    // Divergence.
    void step(double t_limit);

    double t() const noexcept { return t_; }
    double t_prev() const noexcept { return t_prev_; }
    double h_next() const noexcept { return h_; }
    std::span<const double> x() const noexcept { return {y_.data(), n_}; }
    double dissipation() const noexcept { return y_[n_]; }
    const StepStats& stats() const noexcept { return stats_; }

    // Continuous extension over the last accepted step [t_prev, t].
    void dense(double t, std::span<double> x_out, double* dissipation_out = nullptr) const;

  private:
    void rhs(std::span<const double> y, std::span<double> dy);
    double initial_step(double t_target);

    const CircuitSpec& spec_;
    IntegratorConfig cfg_;
    std::size_t n_;  // mode count; y_ has n_ + 1 entries (dissipation last)
    std::vector<double> atol_;
    double t_ = 0.0;
    double t_prev_ = 0.0;
    double h_ = 0.0;
    double h_last_ = 0.0;
    double fac_old_ = 1e-4;
    bool last_rejected_ = false;
    std::vector<double> y_, y_prev_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_;
    std::vector<double> r1_, r2_, r3_, r4_, r5_;
    StepStats stats_;
};

// Integrates from state0.t to t_end.
Trajectory integrate(const CircuitSpec& spec, const StateVector& state0, double t_end,
                     const IntegratorConfig& cfg);

using EventFunction = std::function<double(double t, std::span<const double> x)>;

struct EventResult {
    double t_event = 0.0;
    StateVector state;
    Trajectory trajectory;  // ends at t_event
};

// Integrates until the first sign change of g, located by bisection on the
// dense output to event_tol. Throws EventNotFound if t_budget is reached.
EventResult integrate_until(const CircuitSpec& spec, const StateVector& state0, const EventFunction& g,
                            double t_budget, const IntegratorConfig& cfg);

// ---- scale windows -------------------------------------------------------

struct WindowPolicy {
    double threshold = 1e-12;  // fraction of total energy at the top scale
    int max_scale = std::numeric_limits<int>::max();
};

using WindowBuilder = std::function<CircuitSpec(int n_lo, int n_hi)>;

struct WindowedSystem {
    WindowBuilder build;
    int n_lo = 0;
    int n_hi = 0;
    CircuitSpec spec;

    WindowedSystem(WindowBuilder b, int lo, int hi) : build(std::move(b)), n_lo(lo), n_hi(hi), spec(build(lo, hi)) {}
};

// Energy at scale n of a state laid out by spec.
double scale_energy(const CircuitSpec& spec, std::span<const double> x, int scale);

bool top_scale_active(const WindowedSystem& sys, std::span<const double> x, const WindowPolicy& policy);

// Appends scale n_hi + 1 (all amplitudes exactly 0) when the top scale holds
// more than threshold of the total energy. Returns whether it grew. Throws
// WindowExhausted when growth would pass policy.max_scale.
bool extend_window(WindowedSystem& sys, StateVector& state, const WindowPolicy& policy);

struct WindowedRun {
    Trajectory trajectory;
    WindowedSystem system;
    bool truncated = false;  // stopped by the window cap before t_end
    std::string note;
};

// Integrates with window growth checked after every accepted step. When
// sample_interval_for is set it gives the sampling cadence for the current
// top scale (overriding cfg.sample_interval).
WindowedRun integrate_windowed(WindowedSystem sys, StateVector state0, double t_end,
                               const IntegratorConfig& cfg, const WindowPolicy& policy,
                               const std::function<double(int n_hi)>& sample_interval_for = {});

}  // namespace qlab
