#include "qlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

#include "qlab/error.hpp"

namespace qlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

// ---- energy profile --------------------------------------------------------

bool EnergyProfile::has_scale(int n) const { return std::binary_search(scales.begin(), scales.end(), n); }

const std::vector<double>& EnergyProfile::at_scale(int n) const {
    const auto it = std::lower_bound(scales.begin(), scales.end(), n);
    if (it == scales.end() || *it != n) throw ShapeError(fmt::format("energy profile has no scale {}", n));
    return by_scale[static_cast<std::size_t>(it - scales.begin())];
}

EnergyProfile energy_profile(const Trajectory& traj) {
    std::map<int, std::set<int>> components;
    for (const auto& m : traj.modes()) components[m.scale].insert(m.component);
    if (!components.empty()) {
        const auto& first = components.begin()->second;
        for (const auto& [n, comps] : components) {
            if (comps != first) {
                throw ShapeError(fmt::format("scale {} has a different component set than scale {}", n,
                                             components.begin()->first));
            }
        }
    }
    EnergyProfile out;
    for (const auto& [n, comps] : components) out.scales.push_back(n);
    std::vector<std::size_t> slot(traj.mode_count());
    for (std::size_t j = 0; j < traj.mode_count(); ++j) {
        slot[j] = static_cast<std::size_t>(
            std::lower_bound(out.scales.begin(), out.scales.end(), traj.modes()[j].scale) - out.scales.begin());
    }
    out.times = traj.times();
    out.dissipation = traj.dissipation_series();
    out.by_scale.assign(out.scales.size(), std::vector<double>(traj.size(), 0.0));
    out.total.assign(traj.size(), 0.0);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto x = traj.state(i);
        for (std::size_t j = 0; j < x.size(); ++j) out.by_scale[slot[j]][i] += 0.5 * x[j] * x[j];
        double tot = 0.0;
        for (auto& e : out.by_scale) tot += e[i];
        out.total[i] = tot;
    }
    return out;
}

// ---- transitions -----------------------------------------------------------

std::vector<TransitionEvent> detect_transitions(const Trajectory& traj, const DetectOptions& opt) {
    std::vector<TransitionEvent> events;
    if (traj.size() < 2) return events;
    const EnergyProfile prof = energy_profile(traj);
    for (std::size_t s = 0; s < prof.scales.size(); ++s) {
        const int n = prof.scales[s];
        std::size_t col = traj.mode_count();
        for (std::size_t j = 0; j < traj.mode_count(); ++j) {
            if (traj.modes()[j].key() == ModeKey{opt.component, n}) col = j;
        }
        if (col == traj.mode_count()) continue;
        const auto x = traj.column(col);
        const auto& En = prof.by_scale[s];
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            if (!(x[i] > 0.0) || !(prof.total[i] > 0.0)) continue;
            if (En[i] < opt.dominance * prof.total[i]) continue;
            if (i > 0 && x[i] < x[i - 1]) continue;
            if (x[i] < x[i + 1]) continue;
            // Confirm: X must fall by the prominence before exceeding x[i].
            int verdict = 0;  // 1 confirmed, -1 exceeded, 0 undecided
            for (std::size_t j = i + 1; j < x.size() && verdict == 0; ++j) {
                if (x[j] > x[i]) verdict = -1;
                else if (x[j] <= (1.0 - opt.prominence) * x[i]) verdict = 1;
            }
            if (verdict == 0) break;
            if (verdict < 0) continue;
            events.push_back({n, prof.times[i], x[i]});
            break;
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const TransitionEvent& a, const TransitionEvent& b) { return a.t < b.t; });
    std::vector<TransitionEvent> ordered;
    for (const auto& e : events) {
        if (ordered.empty() || e.t > ordered.back().t) ordered.push_back(e);
    }
    return ordered;
}

bool Extrapolation::finite() const { return std::isfinite(T_star); }

Extrapolation blowup_extrapolate(const std::vector<TransitionEvent>& events) {
    if (events.size() < 4) {
        throw InvalidInput(fmt::format("blowup_extrapolate needs at least 4 events, got {}", events.size()));
    }
    const std::size_t m = events.size() - 1;
    std::vector<double> lg(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double gap = events[k + 1].t - events[k].t;
        if (!(gap > 0.0)) throw InvalidInput("blowup_extrapolate: event times must be strictly increasing");
        lg[k] = std::log(gap);
    }
    double kbar = 0.0, lbar = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        kbar += static_cast<double>(k);
        lbar += lg[k];
    }
    kbar /= static_cast<double>(m);
    lbar /= static_cast<double>(m);
    double skk = 0.0, skl = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        skk += (k - kbar) * (k - kbar);
        skl += (k - kbar) * (lg[k] - lbar);
    }
    const double slope = skl / skk;
    double ss = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double r = lg[k] - (lbar + slope * (k - kbar));
        ss += r * r;
    }
    Extrapolation out;
    out.ratio = std::exp(slope);
    out.fit_residual = std::sqrt(ss / static_cast<double>(m));
    const double last_gap = events[m].t - events[m - 1].t;
    out.T_star = out.ratio < 1.0 ? events[m].t + last_gap * out.ratio / (1.0 - out.ratio) : kInf;
    return out;
}

double energy_identity_residual(const Trajectory& traj) {
    if (traj.empty()) throw InvalidInput("energy_identity_residual: empty trajectory");
    const double e0 = total_energy(traj.state(0));
    if (!(e0 > 0.0)) throw InvalidInput("energy_identity_residual: initial energy is zero");
    const std::size_t last = traj.size() - 1;
    const double eT = total_energy(traj.state(last));
    return std::fabs(eT + (traj.dissipation(last) - traj.dissipation(0)) - e0) / e0;
}

// ---- checkpoint-interval bounds ---------------------------------------------

BoundConstants BoundConstants::asymptotic(double eps0, double K) {
    return {std::pow(K, -10.0), std::pow(1.0 + eps0, 0.1), std::pow(K, -30.0), std::pow(1.0 + eps0, 10.0)};
}

namespace {

double ratio_of(double value, double bound) {
    if (bound > 0.0) return value / bound;
    return value > 0.0 ? kInf : 0.0;
}

void record(BoundReport& r, double ratio, int n, double t) {
    if (ratio > r.max_ratio) {
        r.max_ratio = ratio;
        r.worst_scale = n;
        r.worst_time = t;
    }
}

}  // namespace

std::vector<BoundReport> monitor_proposition_bounds(const Trajectory& traj, const std::vector<TransitionEvent>& events,
                                                    const BoundConstants& c) {
    std::vector<BoundReport> out = {{"before-en"}, {"during-en"}, {"after-en"}};
    if (events.size() < 2) return out;
    const EnergyProfile prof = energy_profile(traj);
    std::vector<TransitionEvent> ev = events;
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
    for (std::size_t j = 0; j + 1 < ev.size(); ++j) {
        if (ev[j + 1].n != ev[j].n + 1) continue;
        const int n = ev[j + 1].n;
        const double e2 = ev[j].e * ev[j].e;
        const double ta = ev[j].t;
        const double tb = ev[j + 1].t;
        for (std::size_t i = 0; i < prof.times.size(); ++i) {
            const double t = prof.times[i];
            if (t < ta || t > tb) continue;
            double during = 0.0;
            for (std::size_t s = 0; s < prof.scales.size(); ++s) {
                const int k = prof.scales[s];
                const double E = prof.by_scale[s][i];
                if (k == n || k == n - 1) {
                    during += E;
                } else if (k <= n - 2) {
                    const int m = n - k;
                    record(out[0], ratio_of(E, c.C1 * std::pow(c.rho1, m) * e2), n, t);
                } else {
                    const int m = k - n;
                    record(out[2], ratio_of(E, c.C2 * std::pow(c.rho2, -m) * e2), n, t);
                }
            }
            record(out[1], ratio_of(during, e2), n, t);
        }
    }
    for (auto& r : out) r.pass = r.max_ratio <= 1.0;
    return out;
}

// ---- equipartition -----------------------------------------------------------

EquipartitionResult equipartition_check(const Trajectory& traj, const ModeId& x, const ModeId& y, const ModeId& z,
                                        double alpha, double t0, double t1) {
    if (!(alpha > 0.0)) throw InvalidParameter("equipartition_check: alpha must be > 0");
    if (!(t1 > t0)) throw InvalidInput("equipartition_check: empty window");
    const std::size_t ix = traj.mode_index(x.key());
    const std::size_t iy = traj.mode_index(y.key());
    const std::size_t iz = traj.mode_index(z.key());
    std::size_t first = traj.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (traj.time(i) >= t0 && traj.time(i) <= t1) {
            first = std::min(first, i);
            last = i;
        }
    }
    if (first >= last) throw InvalidInput("equipartition_check: fewer than two samples in the window");
    EquipartitionResult out;
    const auto s0 = traj.state(first);
    out.energy = s0[ix] * s0[ix] + s0[iy] * s0[iy];
    const double z0 = s0[iz];
    double integral = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        const double a = traj.state(i)[ix];
        const double b = traj.state(i + 1)[ix];
        integral += 0.5 * (a * a + b * b) * (traj.time(i + 1) - traj.time(i));
    }
    for (std::size_t i = first; i <= last; ++i) {
        const double zi = traj.state(i)[iz];
        out.z_drift = std::max(out.z_drift, z0 != 0.0 ? std::fabs(zi - z0) / std::fabs(z0) : std::fabs(zi));
    }
    const double width = traj.time(last) - traj.time(first);
    out.deviation = std::fabs(integral / width - 0.5 * out.energy);
    out.bound = std::fabs(z0) > 0.0 ? out.energy / (alpha * std::fabs(z0) * width) : kInf;
    return out;
}

}  // namespace qlab
