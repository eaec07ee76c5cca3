#include "qlab/integrator.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qlab/error.hpp"

namespace qlab {

namespace {

// Dormand-Prince 5(4) tableau with Hairer's continuous extension.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// PI controller constants (Hairer & Wanner, DOPRI5 defaults).
constexpr double kSafe = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo1 = 0.2 - kBeta * 0.75;
constexpr double kFacMinInv = 5.0;   // 1 / 0.2
constexpr double kFacMaxInv = 0.1;   // 1 / 10

double min_step(double t, double h_min) {
    const double ulp = std::nextafter(std::fabs(t), std::numeric_limits<double>::infinity()) - std::fabs(t);
    return std::max(h_min, 16.0 * ulp);
}

// Emits samples of a running integration into a trajectory.
class Sampler {
  public:
    Sampler(Trajectory& traj, double t0, double interval) : traj_(traj), t0_(t0), interval_(interval) {}

    void after_step(const DormandPrince45& dp) { emit_grid_until(dp, dp.t(), /*inclusive=*/true); }

    void emit_grid_until(const DormandPrince45& dp, double t_stop, bool inclusive) {
        if (interval_ <= 0.0) {
            if (inclusive && dp.t() <= t_stop) push(dp.t(), dp.x(), dp.dissipation());
            return;
        }
        buf_.resize(dp.x().size());
        for (;;) {
            const double tg = t0_ + static_cast<double>(next_) * interval_;
            if (tg > t_stop || (!inclusive && tg >= t_stop)) break;
            if (tg == dp.t()) {
                push(tg, dp.x(), dp.dissipation());
            } else {
                double d = 0.0;
                dp.dense(tg, buf_, &d);
                push(tg, buf_, d);
            }
            ++next_;
        }
    }

    void push(double t, std::span<const double> x, double d) {
        if (!traj_.empty() && t <= traj_.times().back()) return;
        traj_.append(t, x, d);
    }

  private:
    Trajectory& traj_;
    double t0_;
    double interval_;
    std::size_t next_ = 1;
    std::vector<double> buf_;
};

bool same_sign(double a, double b) { return (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0); }

}  // namespace

// ---- config --------------------------------------------------------------

void IntegratorConfig::validate() const {
    if (!(rtol > 0.0 && rtol <= 1e-3)) throw InvalidParameter(fmt::format("rtol must be in (0, 1e-3], got {}", rtol));
    if (!(atol > 0.0)) throw InvalidParameter("atol must be > 0");
    if (!(atol_seeded > 0.0)) throw InvalidParameter("atol_seeded must be > 0");
    for (const auto& [label, v] : atol_overrides) {
        if (!(v > 0.0)) throw InvalidParameter(fmt::format("atol override for '{}' must be > 0", label));
    }
    if (!(h_min >= 0.0)) throw InvalidParameter("h_min must be >= 0");
    if (!(h_max > 0.0)) throw InvalidParameter("h_max must be > 0");
    if (h_min > h_max) throw InvalidParameter("h_min must not exceed h_max");
    if (!(h_init >= 0.0)) throw InvalidParameter("h_init must be >= 0");
    if (!(event_tol > 0.0)) throw InvalidParameter("event_tol must be > 0");
    if (!(sample_interval >= 0.0)) throw InvalidParameter("sample_interval must be >= 0");
}

std::vector<double> IntegratorConfig::atol_for(const CircuitSpec& spec) const {
    std::vector<double> out(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        out[i] = spec.amplifier_seeded(i) ? atol_seeded : atol;
        if (const auto it = atol_overrides.find(spec.modes()[i].label); it != atol_overrides.end()) {
            out[i] = it->second;
        }
    }
    return out;
}

// ---- trajectory ----------------------------------------------------------

StateVector Trajectory::state_vector(std::size_t i) const {
    const auto s = state(i);
    return {times_[i], std::vector<double>(s.begin(), s.end())};
}

std::vector<double> Trajectory::column(std::size_t mode) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = values_[i * modes_.size() + mode];
    return out;
}

std::size_t Trajectory::mode_index(const ModeKey& key) const {
    for (std::size_t i = 0; i < modes_.size(); ++i) {
        if (modes_[i].key() == key) return i;
    }
    throw ShapeError(fmt::format("trajectory has no mode (component {}, scale {})", key.first, key.second));
}

void Trajectory::append(double t, std::span<const double> x, double dissipation) {
    if (x.size() != modes_.size()) {
        throw InvalidInput(fmt::format("sample has {} values, trajectory has {} modes", x.size(), modes_.size()));
    }
    if (!times_.empty() && !(t > times_.back())) {
        throw InvalidInput(fmt::format("sample time {} not after previous {}", t, times_.back()));
    }
    times_.push_back(t);
    values_.insert(values_.end(), x.begin(), x.end());
    dissipation_.push_back(dissipation);
}

void Trajectory::add_modes(const std::vector<ModeId>& extra) {
    if (extra.empty()) return;
    const std::size_t old_n = modes_.size();
    const std::size_t new_n = old_n + extra.size();
    std::vector<double> grown(times_.size() * new_n, 0.0);
    for (std::size_t i = 0; i < times_.size(); ++i) {
        std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(i * old_n), old_n,
                    grown.begin() + static_cast<std::ptrdiff_t>(i * new_n));
    }
    values_ = std::move(grown);
    modes_.insert(modes_.end(), extra.begin(), extra.end());
}

void Trajectory::extend(const Trajectory& other) {
    if (other.modes_.size() != modes_.size()) throw InvalidInput("cannot extend trajectory: mode lists differ");
    for (std::size_t i = 0; i < other.size(); ++i) {
        if (!empty() && other.time(i) <= times_.back()) continue;
        append(other.time(i), other.state(i), other.dissipation(i));
    }
    stats_ += other.stats_;
}

// ---- stepper -------------------------------------------------------------

DormandPrince45::DormandPrince45(const CircuitSpec& spec, const StateVector& state0, const IntegratorConfig& cfg,
                                 double t_target, double dissipation0)
    : spec_(spec), cfg_(cfg), n_(spec.size()), atol_(cfg.atol_for(spec)), t_(state0.t), t_prev_(state0.t) {
    cfg_.validate();
    if (state0.x.size() != n_) {
        throw InvalidInput(fmt::format("initial state has {} amplitudes, circuit has {} modes", state0.x.size(), n_));
    }
    for (double v : state0.x) {
        if (!std::isfinite(v)) throw InvalidInput("initial state has a non-finite amplitude");
    }
    const std::size_t m = n_ + 1;
    for (auto* v : {&y_, &y_prev_, &k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_, &r1_, &r2_, &r3_, &r4_, &r5_}) {
        v->assign(m, 0.0);
    }
    std::copy(state0.x.begin(), state0.x.end(), y_.begin());
    y_[n_] = dissipation0;
    y_prev_ = y_;
    rhs(y_, k1_);
    h_ = cfg_.h_init > 0.0 ? cfg_.h_init : initial_step(t_target);
}

void DormandPrince45::rhs(std::span<const double> y, std::span<double> dy) {
    spec_.evaluate(y.first(n_), dy.first(n_));
    double d = 0.0;
    const auto& nu = spec_.dissipation();
    for (std::size_t i = 0; i < n_; ++i) d += nu[i] * y[i] * y[i];
    dy[n_] = d;
    ++stats_.rhs_evals;
}

double DormandPrince45::initial_step(double t_target) {
    const double span = std::fabs(t_target - t_);
    const double fallback = span > 0.0 ? 1e-6 * span : 1e-6;
    double dnf = 0.0, dny = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sk = atol_[i] + cfg_.rtol * std::fabs(y_[i]);
        dnf += (k1_[i] / sk) * (k1_[i] / sk);
        dny += (y_[i] / sk) * (y_[i] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? fallback : std::sqrt(dny / dnf) * 0.01;
    h = std::min({h, cfg_.h_max, span > 0.0 ? span : h});
    for (std::size_t i = 0; i <= n_; ++i) ytmp_[i] = y_[i] + h * k1_[i];
    rhs(ytmp_, k2_);
    double der2 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sk = atol_[i] + cfg_.rtol * std::fabs(y_[i]);
        const double v = (k2_[i] - k1_[i]) / sk;
        der2 += v * v;
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(fallback, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, cfg_.h_max});
    return h;
}

void DormandPrince45::step(double t_limit) {
    if (!(t_limit > t_)) return;
    int nonfinite = 0;
    const std::size_t m = n_ + 1;
    for (;;) {
        if (stats_.accepted + stats_.rejected >= cfg_.max_steps) {
            throw StiffnessFailure(fmt::format("step budget of {} exhausted at t={}", cfg_.max_steps, t_),
                                   t_, std::vector<double>(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(n_)));
        }
        double h = std::min(h_, cfg_.h_max);
        bool hits_limit = false;
        if (t_ + 1.01 * h >= t_limit) {
            h = t_limit - t_;
            hits_limit = true;
        }
        if (!hits_limit && h < min_step(t_, cfg_.h_min)) {
            throw StiffnessFailure(fmt::format("step size {:.3e} fell below minimum at t={}", h, t_), t_,
                                   std::vector<double>(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(n_)));
        }

        for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y_[i] + h * a21 * k1_[i];
        rhs(ytmp_, k2_);
        for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y_[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
        rhs(ytmp_, k3_);
        for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y_[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
        rhs(ytmp_, k4_);
        for (std::size_t i = 0; i < m; ++i)
            ytmp_[i] = y_[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
        rhs(ytmp_, k5_);
        for (std::size_t i = 0; i < m; ++i)
            ytmp_[i] = y_[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
        rhs(ytmp_, k6_);
        for (std::size_t i = 0; i < m; ++i)
            ynew_[i] = y_[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
        rhs(ynew_, k7_);
        (void)c2, (void)c3, (void)c4, (void)c5;

        // Dissipation accumulator is excluded from step control.
        double err = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double ei =
                h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
            const double sk = atol_[i] + cfg_.rtol * std::max(std::fabs(y_[i]), std::fabs(ynew_[i]));
            err = std::max(err, std::fabs(ei) / sk);
        }

        if (!std::isfinite(err)) {
            if (++nonfinite > 40) {
                throw Divergence(fmt::format("state became non-finite near t={}", t_), t_,
                                 std::vector<double>(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(n_)));
            }
            ++stats_.rejected;
            h_ = h * 0.1;
            last_rejected_ = true;
            continue;
        }

        const double fac11 = std::pow(std::max(err, 1e-300), kExpo1);
        if (err <= 1.0) {
            double fac = fac11 / std::pow(fac_old_, kBeta);
            fac = std::max(kFacMaxInv, std::min(kFacMinInv, fac / kSafe));
            double h_new = h / fac;
            if (last_rejected_) h_new = std::min(h_new, h);
            fac_old_ = std::max(err, 1e-4);

            for (std::size_t i = 0; i < m; ++i) {
                const double ydiff = ynew_[i] - y_[i];
                const double bspl = h * k1_[i] - ydiff;
                r1_[i] = y_[i];
                r2_[i] = ydiff;
                r3_[i] = bspl;
                r4_[i] = ydiff - h * k7_[i] - bspl;
                r5_[i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] + d6 * k6_[i] + d7 * k7_[i]);
            }
            y_prev_.swap(y_);
            y_.swap(ynew_);
            k1_.swap(k7_);
            t_prev_ = t_;
            t_ = hits_limit ? t_limit : t_ + h;
            h_last_ = h;
            if (!hits_limit || h_new > h) h_ = h_new;
            last_rejected_ = false;
            ++stats_.accepted;
            return;
        }
        ++stats_.rejected;
        h_ = h / std::min(kFacMinInv, fac11 / kSafe);
        last_rejected_ = true;
    }
}

void DormandPrince45::dense(double t, std::span<double> x_out, double* dissipation_out) const {
    const double theta = h_last_ > 0.0 ? (t - t_prev_) / (t_ - t_prev_) : 1.0;
    const double theta1 = 1.0 - theta;
    for (std::size_t i = 0; i < n_; ++i) {
        x_out[i] = r1_[i] + theta * (r2_[i] + theta1 * (r3_[i] + theta * (r4_[i] + theta1 * r5_[i])));
    }
    if (dissipation_out != nullptr) {
        *dissipation_out = r1_[n_] + theta * (r2_[n_] + theta1 * (r3_[n_] + theta * (r4_[n_] + theta1 * r5_[n_])));
    }
}

// ---- drivers -------------------------------------------------------------

Trajectory integrate(const CircuitSpec& spec, const StateVector& state0, double t_end, const IntegratorConfig& cfg) {
    if (!(t_end > state0.t)) {
        throw InvalidInput(fmt::format("t_end ({}) must be after the initial time ({})", t_end, state0.t));
    }
    DormandPrince45 dp(spec, state0, cfg, t_end);
    Trajectory traj(spec.modes());
    traj.append(state0.t, state0.x, 0.0);
    Sampler sampler(traj, state0.t, cfg.sample_interval);
    while (dp.t() < t_end) {
        dp.step(t_end);
        sampler.after_step(dp);
    }
    sampler.push(dp.t(), dp.x(), dp.dissipation());
    traj.stats() = dp.stats();
    return traj;
}

EventResult integrate_until(const CircuitSpec& spec, const StateVector& state0, const EventFunction& g,
                            double t_budget, const IntegratorConfig& cfg) {
    if (!(t_budget > state0.t)) throw InvalidInput("event budget must end after the initial time");
    const double g0 = g(state0.t, state0.x);
    if (!(g0 != 0.0) || !std::isfinite(g0)) {
        throw InvalidInput("event function must be finite and nonzero at the initial state");
    }
    DormandPrince45 dp(spec, state0, cfg, t_budget);
    Trajectory traj(spec.modes());
    traj.append(state0.t, state0.x, 0.0);
    Sampler sampler(traj, state0.t, cfg.sample_interval);
    std::vector<double> buf(spec.size());
    constexpr int kProbes = 4;

    while (dp.t() < t_budget) {
        dp.step(t_budget);
        double t_lo = dp.t_prev();
        for (int j = 1; j <= kProbes; ++j) {
            const bool at_end = j == kProbes;
            const double tj = at_end ? dp.t() : dp.t_prev() + (dp.t() - dp.t_prev()) * j / kProbes;
            double gj = 0.0;
            if (at_end) {
                gj = g(tj, dp.x());
            } else {
                dp.dense(tj, buf);
                gj = g(tj, buf);
            }
            if (same_sign(gj, g0)) {
                t_lo = tj;
                continue;
            }
            double lo = t_lo;
            double hi = tj;
            while (hi - lo > cfg.event_tol) {
                const double mid = lo + 0.5 * (hi - lo);
                if (mid <= lo || mid >= hi) break;
                dp.dense(mid, buf);
                if (same_sign(g(mid, buf), g0)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            EventResult result;
            result.t_event = hi;
            double d = 0.0;
            if (hi == dp.t()) {
                result.state = {hi, std::vector<double>(dp.x().begin(), dp.x().end())};
                d = dp.dissipation();
            } else {
                dp.dense(hi, buf, &d);
                result.state = {hi, buf};
            }
            sampler.emit_grid_until(dp, hi, /*inclusive=*/false);
            sampler.push(hi, result.state.x, d);
            traj.stats() = dp.stats();
            result.trajectory = std::move(traj);
            return result;
        }
        sampler.after_step(dp);
    }
    throw EventNotFound(fmt::format("no sign change of the event function before t={}", t_budget), t_budget);
}

// ---- windows -------------------------------------------------------------

double scale_energy(const CircuitSpec& spec, std::span<const double> x, int scale) {
    double e = 0.0;
    const auto& modes = spec.modes();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (modes[i].scale == scale) e += x[i] * x[i];
    }
    return 0.5 * e;
}

bool top_scale_active(const WindowedSystem& sys, std::span<const double> x, const WindowPolicy& policy) {
    const double total = total_energy(x);
    return total > 0.0 && scale_energy(sys.spec, x, sys.n_hi) > policy.threshold * total;
}

bool extend_window(WindowedSystem& sys, StateVector& state, const WindowPolicy& policy) {
    if (!(policy.threshold > 0.0 && policy.threshold < 1.0)) {
        throw InvalidParameter("window threshold must lie in (0, 1)");
    }
    if (!top_scale_active(sys, state.x, policy)) return false;
    if (sys.n_hi + 1 > policy.max_scale) {
        throw WindowExhausted(fmt::format("scale window cap {} reached", policy.max_scale), policy.max_scale);
    }
    CircuitSpec next = sys.build(sys.n_lo, sys.n_hi + 1);
    const auto& old_modes = sys.spec.modes();
    if (next.size() < old_modes.size() ||
        !std::equal(old_modes.begin(), old_modes.end(), next.modes().begin())) {
        throw InvalidInput("window builder must append new modes after the existing ones");
    }
    state.x.resize(next.size(), 0.0);
    sys.spec = std::move(next);
    ++sys.n_hi;
    return true;
}

WindowedRun integrate_windowed(WindowedSystem sys, StateVector state0, double t_end, const IntegratorConfig& cfg,
                               const WindowPolicy& policy, const std::function<double(int)>& sample_interval_for) {
    if (!(t_end > state0.t)) throw InvalidInput("t_end must be after the initial time");
    WindowedRun run{Trajectory(sys.spec.modes()), sys, false, {}};
    run.trajectory.append(state0.t, state0.x, 0.0);
    StateVector st = std::move(state0);
    double dissipation = 0.0;
    IntegratorConfig seg_cfg = cfg;

    while (st.t < t_end) {
        if (sample_interval_for) seg_cfg.sample_interval = sample_interval_for(run.system.n_hi);
        DormandPrince45 dp(run.system.spec, st, seg_cfg, t_end, dissipation);
        Trajectory seg(run.system.spec.modes());
        Sampler sampler(seg, st.t, seg_cfg.sample_interval);
        bool grow = false;
        while (dp.t() < t_end) {
            dp.step(t_end);
            sampler.after_step(dp);
            if (top_scale_active(run.system, dp.x(), policy)) {
                grow = true;
                break;
            }
        }
        sampler.push(dp.t(), dp.x(), dp.dissipation());
        seg.stats() = dp.stats();
        run.trajectory.extend(seg);
        st = {dp.t(), std::vector<double>(dp.x().begin(), dp.x().end())};
        dissipation = dp.dissipation();
        seg_cfg.h_init = dp.h_next();
        if (!grow) break;
        const std::size_t before = run.system.spec.size();
        try {
            extend_window(run.system, st, policy);
        } catch (const WindowExhausted& e) {
            run.truncated = true;
            run.note = e.what();
            break;
        }
        const auto& modes = run.system.spec.modes();
        run.trajectory.add_modes(std::vector<ModeId>(modes.begin() + static_cast<std::ptrdiff_t>(before), modes.end()));
    }
    return run;
}

}  // namespace qlab
