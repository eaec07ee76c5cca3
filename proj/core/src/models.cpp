#include "qlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qlab/diagnostics.hpp"
#include "qlab/error.hpp"
#include "qlab/gates.hpp"

namespace qlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModeId scalar_mode(int n) { return {fmt::format("X{}", n), 1, n}; }

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidParameter(what);
}

}  // namespace

// ---- Katz-Pavlovic ---------------------------------------------------------

void KPParams::validate() const {
    require(std::isfinite(lambda) && lambda > 1.0, fmt::format("KPParams: lambda must be > 1, got {}", lambda));
    require(std::isfinite(alpha_diss) && alpha_diss >= 0.0, "KPParams: alpha_diss must be >= 0");
    require(n_lo <= n_hi, fmt::format("KPParams: empty window [{}, {}]", n_lo, n_hi));
}

CircuitSpec kp_spec(const KPParams& p) {
    p.validate();
    std::vector<ModeId> modes;
    std::vector<InteractionTerm> terms;
    std::map<ModeKey, double> nu;
    for (int n = p.n_lo; n <= p.n_hi; ++n) {
        modes.push_back(scalar_mode(n));
        if (!p.inviscid) nu[{1, n}] = std::pow(p.lambda, 2.0 * n * p.alpha_diss);
    }
    for (int n = p.n_lo; n < p.n_hi; ++n) {
        const double c = std::pow(p.lambda, n);
        terms.push_back({scalar_mode(n + 1), scalar_mode(n), scalar_mode(n), c});
        terms.push_back({scalar_mode(n), scalar_mode(n), scalar_mode(n + 1), -c});
    }
    return CircuitSpec(std::move(modes), std::move(terms), nu);
}

CircuitSpec kp_modified_spec(const KPParams& p, const std::function<double(double)>& g) {
    p.validate();
    if (!g) throw InvalidParameter("kp_modified_spec: g is empty");
    std::vector<ModeId> modes;
    std::vector<InteractionTerm> terms;
    std::map<ModeKey, double> nu;
    for (int n = p.n_lo; n <= p.n_hi; ++n) {
        modes.push_back(scalar_mode(n));
        const double s = std::pow(p.lambda, n);
        const double gs = g(s);
        if (!std::isfinite(gs) || !(gs > 0.0)) {
            throw InvalidParameter(fmt::format("kp_modified_spec: g(lambda^{}) = {} is not positive", n, gs));
        }
        if (!p.inviscid) nu[{1, n}] = s / (gs * gs);
    }
    for (int n = p.n_lo; n < p.n_hi; ++n) {
        const double c = std::pow(p.lambda, n);
        const ModeId lo = scalar_mode(n);
        const ModeId hi = scalar_mode(n + 1);
        terms.push_back({hi, lo, lo, c});
        terms.push_back({hi, lo, hi, c});
        terms.push_back({lo, lo, hi, -c});
        terms.push_back({lo, hi, hi, -c});
    }
    return CircuitSpec(std::move(modes), std::move(terms), nu);
}

// ---- truncated dyadic model ------------------------------------------------

void TruncatedParams::validate() const {
    require(std::isfinite(lambda) && lambda > 1.0, "TruncatedParams: lambda must be > 1");
    require(alpha_diss > 0.0 && alpha_diss < 0.5, "TruncatedParams: alpha_diss must lie in (0, 1/2)");
    require(delta > 0.0 && delta < 1.0 - 2.0 * alpha_diss, "TruncatedParams: delta must lie in (0, 1 - 2 alpha)");
    require(delta_prime > delta, "TruncatedParams: delta_prime must exceed delta");
    require(n0 >= 1, "TruncatedParams: n0 must be >= 1");
    require(k_max >= 1, "TruncatedParams: k_max must be >= 1");
}

double TruncatedParams::stage_eps(int k) const {
    return std::pow(lambda, -(1.0 - 2.0 * alpha_diss) * n0 - (1.0 - 2.0 * alpha_diss - delta) * k);
}

double TruncatedParams::stage_time_scale(int k) const {
    return std::pow(lambda, -static_cast<double>(n0) - k + delta * k);
}

CircuitSpec truncated_stage_spec(double eps, double lambda, double alpha_diss) {
    const ModeId x{"x", 1, 0};
    const ModeId y{"y", 1, 1};
    std::map<ModeKey, double> nu;
    if (eps > 0.0) {
        nu[x.key()] = eps;
        nu[y.key()] = std::pow(lambda, 2.0 * alpha_diss) * eps;
    }
    return CircuitSpec({x, y}, pump_terms(x, y, GateParams(1.0)), nu);
}

TruncatedRun truncated_blowup_run(const TruncatedParams& p, const IntegratorConfig& cfg) {
    p.validate();
    cfg.validate();
    if (p.stage_eps(0) > 0.1) {
        throw InvalidParameter(fmt::format("truncated run: stage eps {:.3g} exceeds 0.1; increase n0", p.stage_eps(0)));
    }
    const int nm = p.k_max + 2;
    std::vector<ModeId> modes;
    std::vector<double> nu(nm);
    for (int j = 0; j < nm; ++j) {
        modes.push_back(scalar_mode(p.n0 + j));
        nu[j] = std::pow(p.lambda, 2.0 * (p.n0 + j) * p.alpha_diss);
    }
    auto weighted = [&](const std::vector<double>& X) {
        double w = 0.0;
        for (int j = 0; j < nm; ++j) w = std::max(w, std::pow(p.lambda, p.delta_prime * (p.n0 + j)) * std::fabs(X[j]));
        return w;
    };

    TruncatedRun out;
    out.trajectory = Trajectory(modes);
    std::vector<double> X(nm, 0.0);
    X[0] = 1.0;
    double t = 0.0;
    double D = 0.0;
    out.trajectory.append(t, X, D);
    out.checkpoints.push_back({p.n0, 0.0, 1.0});
    out.weighted_norms.push_back(weighted(X));

    const double threshold = std::pow(p.lambda, -p.delta);
    const double budget = 10.0 * std::atanh(threshold);
    std::vector<double> Y(nm);
    for (int k = 0; k < p.k_max; ++k) {
        const double eps = p.stage_eps(k);
        const double s = p.stage_time_scale(k);
        const double amp = std::pow(p.lambda, -p.delta * k);
        const CircuitSpec stage = truncated_stage_spec(eps, p.lambda, p.alpha_diss);
        const StateVector start{0.0, {X[k] / amp, X[k + 1] / amp}};
        EventResult ev;
        try {
            ev = integrate_until(
                stage, start, [threshold](double, std::span<const double> v) { return v[1] - threshold; }, budget,
                cfg);
        } catch (const EventNotFound&) {
            throw StageFailure(fmt::format("stage {} did not reach its threshold within rescaled time {:.4g}", k, budget),
                               k);
        }
        const Trajectory& tr = ev.trajectory;
        for (std::size_t i = 1; i < tr.size(); ++i) {
            const double dt = s * tr.time(i);
            double Di = D + amp * amp * tr.dissipation(i);
            for (int j = 0; j < nm; ++j) {
                if (j == k || j == k + 1) continue;
                const double f = std::exp(-nu[j] * dt);
                Y[j] = X[j] * f;
                Di += 0.5 * X[j] * X[j] * (1.0 - f * f);
            }
            const auto v = tr.state(i);
            Y[k] = amp * v[0];
            Y[k + 1] = amp * v[1];
            const double ti = t + dt;
            if (i + 1 == tr.size()) {
                out.trajectory.append(ti, Y, Di);
                X = Y;
                t = ti;
                D = Di;
            } else if (ti > out.trajectory.times().back()) {
                out.trajectory.append(ti, Y, Di);
            }
        }
        out.trajectory.stats() += tr.stats();
        out.stage_durations.push_back(ev.t_event);
        out.checkpoints.push_back({p.n0 + k + 1, t, X[k + 1]});
        out.weighted_norms.push_back(weighted(X));
    }
    out.T_star_estimate = out.checkpoints.size() >= 4 ? blowup_extrapolate(out.checkpoints).T_star
                                                      : std::numeric_limits<double>::quiet_NaN();
    return out;
}

// ---- delay circuit ---------------------------------------------------------

double DelayParams::gamma() const { return Gamma ? *Gamma : std::pow(K, 10.0); }

void DelayParams::validate() const {
    require(std::isfinite(K) && K >= 1.0, fmt::format("DelayParams: K must be >= 1, got {}", K));
    require(eps > 0.0 && eps < 1.0, fmt::format("DelayParams: eps must lie in (0, 1), got {}", eps));
    const double g = gamma();
    require(std::isfinite(g) && g > 0.0, "DelayParams: Gamma must be > 0");
    require(g <= kGammaMax, fmt::format("DelayParams: Gamma = {:.6g} exceeds {} (exp range)", g, kGammaMax));
}

CircuitSpec delay_circuit_spec(const DelayParams& p) {
    p.validate();
    const ModeId a{"a", 1, 0}, b{"b", 2, 0}, c{"c", 3, 0}, d{"d", 4, 0}, at{"at", 5, 0};
    const double e = p.eps;
    const double g = p.gamma();
    std::vector<InteractionTerm> terms;
    auto add = [&](std::vector<InteractionTerm> more) { terms.insert(terms.end(), more.begin(), more.end()); };
    add(rotor_terms(a, d, c, GateParams(1.0 / (e * e))));
    add(pump_terms(a, b, GateParams(e)));
    add(pump_terms(a, c, GateParams(e * e * std::exp(-g))));
    add(amplifier_terms(b, c, GateParams(g / e)));
    add(pump_terms(d, at, GateParams(p.K)));
    return CircuitSpec({a, b, c, d, at}, std::move(terms), {}, {c.key()});
}

StateVector delay_initial_state() { return {0.0, {1.0, 0.0, 0.0, 0.0, 0.0}}; }

DelayRun run_delay_circuit(const DelayParams& p, const IntegratorConfig& cfg_in, double t_end) {
    const CircuitSpec spec = delay_circuit_spec(p);
    IntegratorConfig cfg = cfg_in;
    if (cfg.sample_interval <= 0.0) cfg.sample_interval = 1e-3;
    cfg.validate();
    if (!(t_end > 0.0)) throw InvalidParameter("delay run: t_end must be > 0");

    const double c_threshold = p.eps * p.eps / p.gamma();
    const std::array<EventFunction, 3> gates = {
        [c_threshold](double, std::span<const double> x) { return x[2] - c_threshold; },
        [](double, std::span<const double> x) { return x[4] - 0.1; },
        [](double, std::span<const double> x) { return x[4] - 0.9; },
    };
    DelayRun out;
    std::array<double*, 3> slots = {&out.t_c, &out.t_rise_lo, &out.t_rise_hi};
    out.trajectory = Trajectory(spec.modes());
    StateVector st = delay_initial_state();
    out.trajectory.append(st.t, st.x, 0.0);
    std::size_t next = 0;
    for (; next < gates.size(); ++next) {
        if (!(gates[next](st.t, st.x) < 0.0)) {
            *slots[next] = st.t;
            continue;
        }
        try {
            EventResult ev = integrate_until(spec, st, gates[next], t_end, cfg);
            out.trajectory.extend(ev.trajectory);
            *slots[next] = ev.t_event;
            st = ev.state;
        } catch (const EventNotFound&) {
            break;
        }
    }
    for (std::size_t j = next; j < gates.size(); ++j) *slots[j] = kInf;
    if (st.t < t_end) out.trajectory.extend(integrate(spec, st, t_end, cfg));
    out.at_final = out.trajectory.state(out.trajectory.size() - 1)[4];

    const double t_pre = out.t_c - 1.0 / std::sqrt(p.K);
    for (std::size_t i = 0; i < out.trajectory.size() && out.trajectory.time(i) <= t_pre; ++i) {
        const auto x = out.trajectory.state(i);
        out.pre_a_dev = std::max(out.pre_a_dev, std::fabs(x[0] - 1.0));
        for (int j = 1; j < 5; ++j) out.pre_other = std::max(out.pre_other, std::fabs(x[j]));
    }
    return out;
}

// ---- Table-1 cascade -------------------------------------------------------

double CascadeParams::gamma() const { return Gamma ? *Gamma : std::pow(K, 10.0); }

void CascadeParams::validate() const {
    require(eps0 > 0.0 && eps0 < 1.0, fmt::format("CascadeParams: eps0 must lie in (0, 1), got {}", eps0));
    require(eps > 0.0 && eps < 1.0, fmt::format("CascadeParams: eps must lie in (0, 1), got {}", eps));
    require(std::isfinite(K) && K >= 1.0, fmt::format("CascadeParams: K must be >= 1, got {}", K));
    const double g = gamma();
    require(std::isfinite(g) && g > 0.0, "CascadeParams: Gamma must be > 0");
    require(g <= kGammaMax, fmt::format("CascadeParams: Gamma = {:.6g} exceeds {} (exp range)", g, kGammaMax));
    require(n_lo <= n_hi, fmt::format("CascadeParams: empty window [{}, {}]", n_lo, n_hi));
    require(std::isfinite(alpha_diss_exponent), "CascadeParams: alpha_diss_exponent must be finite");
}

std::vector<CascadeRow> cascade_coefficients(const CascadeParams& p) {
    p.validate();
    const double e = p.eps;
    const double g = p.gamma();
    const double rot = 1.0 / (e * e);
    const double seed = e * e * std::exp(-g);
    const double amp = g / e;
    const double cross = std::pow(p.ratio(), 2.5) * p.K;
    return {
        {3, 4, 1, 0, 0, 0, -rot / 2},   {4, 3, 1, 0, 0, 0, -rot / 2},   {1, 3, 4, 0, 0, 0, rot / 2},
        {3, 1, 4, 0, 0, 0, rot / 2},    {1, 2, 1, 0, 0, 0, -e / 2},     {2, 1, 1, 0, 0, 0, -e / 2},
        {1, 1, 2, 0, 0, 0, e},          {1, 3, 1, 0, 0, 0, -seed / 2},  {3, 1, 1, 0, 0, 0, -seed / 2},
        {1, 1, 3, 0, 0, 0, seed},       {3, 3, 2, 0, 0, 0, -amp},       {2, 3, 3, 0, 0, 0, amp / 2},
        {3, 2, 3, 0, 0, 0, amp / 2},    {4, 4, 1, 0, 0, 1, cross},      {1, 4, 4, 1, 0, 0, -cross / 2},
        {4, 1, 4, 0, 1, 0, -cross / 2},
    };
}

std::string cascade_label(int component, int scale) { return fmt::format("X{},{}", component, scale); }

CascadeBuild cascade_build(const CascadeParams& p) {
    const auto rows = cascade_coefficients(p);
    auto mode = [](int i, int n) { return ModeId{cascade_label(i, n), i, n}; };
    auto inside = [&](int n) { return n >= p.n_lo && n <= p.n_hi; };
    std::vector<ModeId> modes;
    std::map<ModeKey, double> nu;
    std::set<ModeKey> seeded;
    for (int n = p.n_lo; n <= p.n_hi; ++n) {
        const double rate = std::pow(p.ratio(), p.alpha_diss_exponent * n);
        for (int i = 1; i <= CascadeParams::m; ++i) {
            modes.push_back(mode(i, n));
            if (p.viscous) nu[{i, n}] = rate;
        }
        seeded.insert({3, n});
    }
    CascadeBuild out;
    std::vector<InteractionTerm> terms;
    for (int n = p.n_lo; n <= p.n_hi; ++n) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& row = rows[r];
            const int base = n - row.mu3;
            const int n1 = base + row.mu1;
            const int n2 = base + row.mu2;
            if (!inside(n1) || !inside(n2)) {
                out.dropped.push_back({r, n, inside(n1) ? ModeKey{row.i2, n2} : ModeKey{row.i1, n1}});
                continue;
            }
            const double coeff = row.alpha * std::pow(p.ratio(), 2.5 * base);
            terms.push_back({mode(row.i3, n), mode(row.i1, n1), mode(row.i2, n2), coeff});
        }
    }
    out.spec = CircuitSpec(std::move(modes), std::move(terms), nu, seeded);
    return out;
}

CircuitSpec cascade_spec(const CascadeParams& p) { return cascade_build(p).spec; }

StateVector cascade_initial_state(const CircuitSpec& spec, int n0) {
    StateVector s{0.0, std::vector<double>(spec.size(), 0.0)};
    s.x[spec.index_of(ModeKey{1, n0})] = 1.0;
    return s;
}

WindowedRun run_cascade(const CascadeParams& p, const IntegratorConfig& cfg, const CascadeRunOptions& opt) {
    p.validate();
    if (!(opt.t_end_rescaled > 0.0)) throw InvalidParameter("cascade run: t_end_rescaled must be > 0");
    if (!(opt.sample_rescaled >= 0.0)) throw InvalidParameter("cascade run: sample_rescaled must be >= 0");
    const double L = p.ratio();
    const int lo = opt.grow ? p.n0 : p.n_lo;
    const int hi = opt.grow ? p.n0 + 3 : p.n_hi;
    if (p.n0 < lo || p.n0 > hi) throw InvalidParameter("cascade run: n0 outside the window");
    WindowBuilder build = [p](int a, int b) {
        CascadeParams q = p;
        q.n_lo = a;
        q.n_hi = b;
        return cascade_spec(q);
    };
    WindowedSystem sys(build, lo, hi);
    StateVector st0 = cascade_initial_state(sys.spec, p.n0);
    const double t_end = opt.t_end_rescaled * std::pow(L, -2.5 * p.n0);
    WindowPolicy policy;
    if (opt.grow) {
        policy.threshold = opt.window_threshold;
        policy.max_scale = opt.max_scale > 0 ? opt.max_scale : p.n0 + 12;
    } else {
        policy.threshold = 1.0;  // top scale can never hold more than everything
        policy.max_scale = hi;
    }
    std::function<double(int)> cadence;
    if (opt.sample_rescaled > 0.0) {
        const double base = opt.sample_rescaled;
        const bool grow = opt.grow;
        const int n0 = p.n0;
        cadence = [base, grow, n0, L](int n_hi) {
            return base * std::pow(L, -2.5 * (grow ? n_hi - 3 : n0));
        };
    }
    return integrate_windowed(std::move(sys), std::move(st0), t_end, cfg, policy, cadence);
}

namespace {

Trajectory remap(const Trajectory& traj, int shift, const std::function<double(double)>& time_map, double amp,
                 double energy) {
    std::vector<ModeId> modes;
    for (const auto& m : traj.modes()) {
        modes.push_back({cascade_label(m.component, m.scale + shift), m.component, m.scale + shift});
    }
    Trajectory out(std::move(modes));
    std::vector<double> buf(traj.mode_count());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto x = traj.state(i);
        for (std::size_t j = 0; j < buf.size(); ++j) buf[j] = x[j] * amp;
        out.append(time_map(traj.time(i)), buf, traj.dissipation(i) * energy);
    }
    out.stats() = traj.stats();
    return out;
}

}  // namespace

Trajectory rescale_run(const Trajectory& traj, const CascadeParams& p, int N, double e_N, double t_N) {
    if (!(e_N > 0.0) || !std::isfinite(e_N)) throw InvalidInput("rescale_run: e_N must be > 0");
    const double f = std::pow(p.ratio(), 2.5 * N) * e_N;
    return remap(
        traj, -N, [f, t_N](double t) { return (t - t_N) * f; }, 1.0 / e_N, 1.0 / (e_N * e_N));
}

Trajectory unrescale_run(const Trajectory& traj, const CascadeParams& p, int N, double e_N, double t_N) {
    if (!(e_N > 0.0) || !std::isfinite(e_N)) throw InvalidInput("unrescale_run: e_N must be > 0");
    const double f = std::pow(p.ratio(), 2.5 * N) * e_N;
    return remap(
        traj, N, [f, t_N](double tau) { return t_N + tau / f; }, e_N, e_N * e_N);
}

// ---- bundled systems -------------------------------------------------------

std::vector<BundledSystem> bundled_systems() {
    std::vector<BundledSystem> out;
    const ModeId x{"x", 1, 0}, y{"y", 2, 0}, z{"z", 3, 0};
    out.push_back({"pump", CircuitSpec({x, y}, pump_terms(x, y, GateParams(1.0))), {0.0, {1.0, 0.0}}, true});
    {
        const auto [x0, y0] = amplifier_closed_form(1.0, 1.0, 3.0, 0.0);
        out.push_back(
            {"amplifier", CircuitSpec({x, y}, amplifier_terms(x, y, GateParams(1.0))), {0.0, {x0, y0}}, true});
    }
    out.push_back(
        {"rotor", CircuitSpec({x, y, z}, rotor_terms(x, y, z, GateParams(1.0))), {0.0, {1.0, 0.0, 1.0}}, true});
    {
        KPParams kp{2.0, 0.25, 0, 4, true};
        auto spec = kp_spec(kp);
        out.push_back({"kp", spec, {0.0, std::vector<double>(spec.size(), 0.0)}, true});
        out.back().initial.x[0] = 1.0;
        auto mod = kp_modified_spec(kp, [](double s) { return std::log1p(s); });
        out.push_back({"kp-modified", mod, {0.0, std::vector<double>(mod.size(), 0.0)}, true});
        out.back().initial.x[0] = 1.0;
        kp.inviscid = false;
        kp.n_hi = 6;
        auto visc = kp_spec(kp);
        out.push_back({"kp-viscous", visc, {0.0, std::vector<double>(visc.size(), 0.0)}, false});
        out.back().initial.x[0] = 1.0;
    }
    {
        DelayParams d;
        d.K = 8.0;
        d.eps = 1e-2;
        d.Gamma = 30.0;
        out.push_back({"delay", delay_circuit_spec(d), delay_initial_state(), true});
    }
    {
        CascadeParams c;
        c.Gamma = 30.0;
        c.n_lo = 0;
        c.n_hi = 1;
        auto spec = cascade_spec(c);
        out.push_back({"table1", spec, cascade_initial_state(spec, 0), true});
    }
    return out;
}

BundledSystem bundled_system(const std::string& name) {
    for (auto& s : bundled_systems()) {
        if (s.name == name) return s;
    }
    throw InvalidInput(fmt::format("no bundled system named '{}'", name));
}

}  // namespace qlab
