#include "qlab/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "qlab/circuit.hpp"
#include "qlab/gates.hpp"
#include "qlab/models.hpp"
#include "qlab/trilinear.hpp"

#ifndef QLAB_VERSION
#define QLAB_VERSION "0.0.0"
#endif

namespace qlab {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version() { return QLAB_VERSION; }

bool RunManifest::all_accepted() const {
    return std::all_of(acceptance.begin(), acceptance.end(), [](const auto& kv) { return kv.second; });
}

int RunManifest::exit_code(bool check) const {
    if (!ok) return error_kind == "config" ? 2 : 3;
    if (check && !all_accepted()) return 4;
    return 0;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput(fmt::format("cannot read '{}'", path));
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest initialisation failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path));
    out << text;
    if (!out) throw Error(fmt::format("write to '{}' failed", path));
}

// JSON has no inf/nan; emit null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json events_json(const std::vector<TransitionEvent>& events) {
    json a = json::array();
    for (const auto& e : events) a.push_back({{"n", e.n}, {"t", num(e.t)}, {"e", num(e.e)}});
    return a;
}

json extrapolation_json(const Extrapolation& x) {
    return {{"T_star", num(x.T_star)}, {"ratio", num(x.ratio)}, {"fit_residual", num(x.fit_residual)}};
}

json bounds_json(const std::vector<BoundReport>& reports) {
    json a = json::array();
    for (const auto& r : reports) {
        a.push_back({{"id", r.id},
                     {"max_ratio", num(r.max_ratio)},
                     {"worst_scale", r.worst_scale},
                     {"worst_time", num(r.worst_time)},
                     {"pass", r.pass}});
    }
    return a;
}

double max_energy_drift(const Trajectory& traj) {
    const double e0 = total_energy(traj.state(0));
    double worst = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        worst = std::max(worst, std::fabs(total_energy(traj.state(i)) - e0) / e0);
    }
    return worst;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

struct Outcome {
    json diagnostics = json::object();
    std::map<std::string, bool> acceptance;
    std::vector<std::string> files;
};

// ---- per-experiment drivers ---------------------------------------------------

Outcome run_gates(const GateOracleModel& m, const IntegratorConfig& cfg, const fs::path& dir) {
    Outcome o;
    for (auto& g : gate_oracle_deviations(m, cfg)) {
        const std::string file = "timeseries_" + g.gate + ".csv";
        write_timeseries_csv(g.trajectory, (dir / file).string());
        o.files.push_back(file);
        o.diagnostics["max_rel_error"][g.gate] = num(g.max_rel_error);
        o.acceptance["closed_form_" + g.gate] = g.max_rel_error <= 1e-8;
    }
    return o;
}

Outcome run_kp(const KPModel& m, const IntegratorConfig& cfg, const fs::path& dir) {
    const CircuitSpec spec =
        m.modified ? kp_modified_spec(m.params, [beta = m.g_beta](double s) { return std::pow(std::log1p(s), beta); })
                   : kp_spec(m.params);
    StateVector x0{0.0, std::vector<double>(spec.size(), 0.0)};
    x0.x[spec.index_of(ModeKey{1, m.params.n_lo})] = 1.0;
    const Trajectory traj = integrate(spec, x0, m.t_end, cfg);
    const auto events = detect_transitions(traj);
    write_timeseries_csv(traj, (dir / "timeseries.csv").string());
    write_events_csv(events, (dir / "events.csv").string());

    Outcome o;
    o.files = {"timeseries.csv", "events.csv"};
    const auto report = check_cancellation_structural(spec);
    const double residual = energy_identity_residual(traj);
    const std::size_t last = traj.size() - 1;
    o.diagnostics = {{"energy_initial", num(total_energy(traj.state(0)))},
                     {"energy_final", num(total_energy(traj.state(last)))},
                     {"dissipation_integral", num(traj.dissipation(last))},
                     {"energy_identity_residual", num(residual)},
                     {"cancellation_max_residual", num(report.max_residual)},
                     {"steps", traj.stats().accepted},
                     {"events", events_json(events)}};
    o.acceptance["cancellation"] = report.pass;
    o.acceptance["energy_identity"] = residual <= 1e-6;
    return o;
}

Outcome run_truncated(const TruncatedModel& m, const IntegratorConfig& cfg, const fs::path& dir) {
    const TruncatedRun r = truncated_blowup_run(m.params, cfg);
    write_timeseries_csv(r.trajectory, (dir / "timeseries.csv").string());
    write_events_csv(r.checkpoints, (dir / "events.csv").string());
    const TruncatedChecks c = truncated_checks(r, m.params);

    Outcome o;
    o.files = {"timeseries.csv", "events.csv"};
    json gaps = json::array();
    for (std::size_t k = 0; k < c.gaps.size(); ++k) {
        gaps.push_back({{"k", k}, {"gap", num(c.gaps[k])}, {"bound", num(c.gap_bounds[k])}});
    }
    o.diagnostics = {{"checkpoints", events_json(r.checkpoints)},
                     {"T_star_estimate", num(r.T_star_estimate)},
                     {"fit", extrapolation_json(c.fit)},
                     {"target_ratio", num(c.target_ratio)},
                     {"max_amplitude_error", num(c.max_amplitude_error)},
                     {"gaps", gaps},
                     {"weighted_norms", r.weighted_norms},
                     {"norm_growth", num(c.norm_growth)},
                     {"norm_growth_target", num(c.norm_growth_target)},
                     {"stage_eps_max", num(m.params.stage_eps(0))}};
    o.acceptance["checkpoint_amplitudes"] = c.max_amplitude_error <= 1e-9;
    o.acceptance["gap_bounds"] = c.gaps_within_bounds;
    o.acceptance["gap_ratio"] = std::fabs(c.fit.ratio / c.target_ratio - 1.0) <= 0.05;
    o.acceptance["T_star_finite"] = std::isfinite(r.T_star_estimate) && c.fit.finite();
    o.acceptance["weighted_norm_growth"] = c.norm_growth >= c.norm_growth_target * (1.0 - 1e-12);
    return o;
}

Outcome run_delay(const DelayModel& m, const IntegratorConfig& cfg, const fs::path& dir) {
    const DelayRun r = run_delay_circuit(m.params, cfg, m.t_end);
    write_timeseries_csv(r.trajectory, (dir / "timeseries.csv").string());
    write_events_csv({}, (dir / "events.csv").string());

    Outcome o;
    o.files = {"timeseries.csv", "events.csv"};
    const double width = r.t_rise_hi - r.t_rise_lo;
    const double t_c_error = std::fabs(r.t_c - std::numbers::sqrt2);
    const double drift = max_energy_drift(r.trajectory);
    o.diagnostics = {{"Gamma", num(m.params.gamma())},
                     {"ignition_threshold", num(m.params.eps * m.params.eps / m.params.gamma())},
                     {"t_c", num(r.t_c)},
                     {"t_c_error", num(t_c_error)},
                     {"t_rise_lo", num(r.t_rise_lo)},
                     {"t_rise_hi", num(r.t_rise_hi)},
                     {"rise_width", num(width)},
                     {"rise_width_limit", num(5.0 / std::sqrt(m.params.K))},
                     {"at_final", num(r.at_final)},
                     {"pre_a_deviation", num(r.pre_a_dev)},
                     {"pre_other_max", num(r.pre_other)},
                     {"energy_drift", num(drift)},
                     {"steps", r.trajectory.stats().accepted}};
    o.acceptance["transfer_width"] = std::isfinite(width) && width <= 5.0 / std::sqrt(m.params.K);
    o.acceptance["t_c_error"] = t_c_error <= 0.25;
    o.acceptance["pre_transition"] = r.pre_a_dev <= 0.05 && r.pre_other <= 0.05;
    return o;
}

Outcome run_cascade_kind(const CascadeModel& m, const IntegratorConfig& cfg, const fs::path& dir) {
    const WindowedRun r = run_cascade(m.params, cfg, m.run);
    const CascadeChecks c = cascade_checks(r.trajectory, m.params);
    write_timeseries_csv(r.trajectory, (dir / "timeseries.csv").string());
    write_events_csv(c.events, (dir / "events.csv").string());

    Outcome o;
    o.files = {"timeseries.csv", "events.csv"};
    const BoundConstants bc = m.bounds ? *m.bounds : BoundConstants::asymptotic(m.params.eps0, m.params.K);
    const auto bounds = monitor_proposition_bounds(r.trajectory, c.events, bc);

    // Table-2 shaped report: peak energies per checkpoint interval in units
    // of e_{n-1}^2, split into scales below, at and above the active pair.
    json table = json::array();
    const EnergyProfile prof = energy_profile(r.trajectory);
    for (std::size_t j = 0; j + 1 < c.events.size(); ++j) {
        const auto& a = c.events[j];
        const auto& b = c.events[j + 1];
        const int n = b.n;
        const double e2 = a.e * a.e;
        double below = 0.0, active = 0.0, above = 0.0;
        for (std::size_t i = 0; i < prof.times.size(); ++i) {
            if (prof.times[i] < a.t || prof.times[i] > b.t) continue;
            double act = 0.0;
            for (std::size_t s = 0; s < prof.scales.size(); ++s) {
                const int k = prof.scales[s];
                const double E = prof.by_scale[s][i];
                if (k <= n - 2) below = std::max(below, E);
                else if (k >= n + 1) above = std::max(above, E);
                else act += E;
            }
            active = std::max(active, act);
        }
        table.push_back({{"n", n},
                         {"t_start", num(a.t)},
                         {"t_end", num(b.t)},
                         {"e_prev", num(a.e)},
                         {"max_E_below_over_e2", num(below / e2)},
                         {"max_E_active_over_e2", num(active / e2)},
                         {"max_E_above_over_e2", num(above / e2)}});
    }

    json gaps = json::array();
    for (std::size_t k = 0; k < c.gaps.size(); ++k) {
        json g = {{"k", k}, {"gap", num(c.gaps[k])}};
        if (k < c.gap_ratio.size()) {
            g["ratio"] = num(c.gap_ratio[k]);
            g["rho"] = num(c.rho[k]);
        }
        gaps.push_back(g);
    }
    o.diagnostics = {{"events", events_json(c.events)},
                     {"gaps", gaps},
                     {"tail_fraction", c.tail_fraction},
                     {"bounds", bounds_json(bounds)},
                     {"bound_constants", {{"C1", bc.C1}, {"rho1", bc.rho1}, {"C2", bc.C2}, {"rho2", bc.rho2}}},
                     {"energy_report", table},
                     {"window", {r.system.n_lo, r.system.n_hi}},
                     {"truncated", r.truncated},
                     {"note", r.note},
                     {"energy_drift", num(m.params.viscous ? 0.0 : max_energy_drift(r.trajectory))},
                     {"steps", r.trajectory.stats().accepted}};
    if (m.params.viscous) o.diagnostics["energy_identity_residual"] = num(energy_identity_residual(r.trajectory));
    if (c.events.size() >= 4) o.diagnostics["fit"] = extrapolation_json(blowup_extrapolate(c.events));
    o.acceptance["events_ge_4"] = c.events.size() >= 4;
    o.acceptance["gaps_decreasing"] = c.gaps_decreasing;
    o.acceptance["gap_ratio_band"] = c.ratios_in_band;
    o.acceptance["abruptness"] = c.max_tail_fraction <= 1e-3;
    return o;
}

Outcome run_trilinear(const TrilinearModel& m, std::uint64_t seed, const fs::path& dir) {
    const FreqTriple base = FreqTriple::base();
    const FourierCoefficients fc = fourier_coefficients(base, m.grid);
    const ScanResult scan = nondegeneracy_scan(base, m.radius, m.samples, seed, m.grid);

    std::string csv = "s1,s2,s3,re,im,abs\n";
    json coeffs = json::array();
    const auto pats = all_sign_patterns();
    for (std::size_t k = 0; k < pats.size(); ++k) {
        const auto c = fc.c[k];
        csv += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g}\n", pats[k].s1, pats[k].s2, pats[k].s3, c.real(),
                           c.imag(), std::abs(c));
        coeffs.push_back({{"sigma", {pats[k].s1, pats[k].s2, pats[k].s3}},
                          {"re", c.real()},
                          {"im", c.imag()},
                          {"abs", std::abs(c)}});
    }
    write_text((dir / "coefficients.csv").string(), csv);

    const auto mags = fc.sorted_magnitudes();
    const double s2 = std::numbers::sqrt2;
    const std::array<double, 8> expect = {(s2 - 1) / 8, (s2 - 1) / 8, 1.0 / 8, 1.0 / 8,
                                          1.0 / 8,      1.0 / 8,      (s2 + 1) / 8, (s2 + 1) / 8};
    double worst = 0.0;
    for (std::size_t k = 0; k < 8; ++k) worst = std::max(worst, std::fabs(mags[k] - expect[k]));

    json argmin = json::array();
    for (int j = 0; j < 3; ++j) argmin.push_back({scan.argmin[j].x(), scan.argmin[j].y(), scan.argmin[j].z()});
    Outcome o;
    o.files = {"coefficients.csv"};
    o.diagnostics = {{"coefficients", coeffs},
                     {"sorted_magnitudes", mags},
                     {"multiset_error", worst},
                     {"max_off_pattern", fc.max_off_pattern},
                     {"min_abs_c", fc.min_abs()},
                     {"scan", {{"radius", m.radius},
                               {"samples", scan.samples},
                               {"seed", seed},
                               {"min_abs_c", scan.min_abs_c},
                               {"argmin", argmin}}}};
    o.acceptance["magnitude_multiset"] = worst <= 1e-6;
    o.acceptance["scan_min"] = scan.min_abs_c >= 0.05;
    return o;
}

}  // namespace

// ---- files ----------------------------------------------------------------------

void write_timeseries_csv(const Trajectory& traj, const std::string& path) {
    const EnergyProfile prof = energy_profile(traj);
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "t");
    for (const auto& m : traj.modes()) fmt::format_to(std::back_inserter(buf), ",{}", csv_field(m.label));
    for (int n : prof.scales) fmt::format_to(std::back_inserter(buf), ",E_{}", n);
    fmt::format_to(std::back_inserter(buf), ",D\n");
    for (std::size_t i = 0; i < traj.size(); ++i) {
        fmt::format_to(std::back_inserter(buf), "{:.17g}", traj.time(i));
        for (double v : traj.state(i)) fmt::format_to(std::back_inserter(buf), ",{:.17g}", v);
        for (const auto& e : prof.by_scale) fmt::format_to(std::back_inserter(buf), ",{:.17g}", e[i]);
        fmt::format_to(std::back_inserter(buf), ",{:.17g}\n", traj.dissipation(i));
    }
    write_text(path, fmt::to_string(buf));
}

void write_events_csv(const std::vector<TransitionEvent>& events, const std::string& path) {
    std::string s = "n,t,e\n";
    for (const auto& e : events) s += fmt::format("{},{:.17g},{:.17g}\n", e.n, e.t, e.e);
    write_text(path, s);
}

std::vector<TransitionEvent> read_events_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput(fmt::format("cannot open events file '{}'", path));
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(fmt::format("events file '{}' is empty", path));
    std::vector<TransitionEvent> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TransitionEvent e;
        char c1 = 0, c2 = 0;
        std::istringstream ss(line);
        if (!(ss >> e.n >> c1 >> e.t >> c2 >> e.e) || c1 != ',' || c2 != ',') {
            throw InvalidInput(fmt::format("{}:{}: expected n,t,e", path, lineno));
        }
        out.push_back(e);
    }
    return out;
}

// ---- analyses ---------------------------------------------------------------------

std::vector<GateDeviation> gate_oracle_deviations(const GateOracleModel& m, const IntegratorConfig& cfg) {
    const GateParams gp(m.alpha);
    const double A = m.amplitude;
    const ModeId x{"x", 1, 0}, y{"y", 2, 0}, z{"z", 3, 0};
    std::vector<GateDeviation> out;

    auto measure = [&](const std::string& name, const CircuitSpec& spec, const std::vector<double>& x0,
                       const std::function<std::vector<double>(double)>& exact) {
        GateDeviation g;
        g.gate = name;
        g.trajectory = integrate(spec, {0.0, x0}, m.t_end, cfg);
        for (std::size_t i = 0; i < g.trajectory.size(); ++i) {
            const auto ref = exact(g.trajectory.time(i));
            const auto num_x = g.trajectory.state(i);
            double diff = 0.0, scale = 0.0;
            for (std::size_t j = 0; j < ref.size(); ++j) {
                diff = std::max(diff, std::fabs(num_x[j] - ref[j]));
                scale = std::max(scale, std::fabs(ref[j]));
            }
            g.max_rel_error = std::max(g.max_rel_error, diff / scale);
        }
        out.push_back(std::move(g));
    };

    measure("pump", CircuitSpec({x, y}, pump_terms(x, y, gp)), {A, 0.0}, [&](double t) {
        const auto [a, b] = pump_closed_form(A, m.alpha, t);
        return std::vector<double>{a, b};
    });
    const auto [ax0, ay0] = amplifier_closed_form(A, m.alpha, m.amplifier_T, 0.0);
    measure("amplifier", CircuitSpec({x, y}, amplifier_terms(x, y, gp)), {ax0, ay0}, [&](double t) {
        const auto [a, b] = amplifier_closed_form(A, m.alpha, m.amplifier_T, t);
        return std::vector<double>{a, b};
    });
    measure("rotor", CircuitSpec({x, y, z}, rotor_terms(x, y, z, gp)), {A, 0.0, m.rotor_z}, [&](double t) {
        const auto r = rotor_closed_form(A, 0.0, m.rotor_z, m.alpha, t);
        return std::vector<double>{r[0], r[1], r[2]};
    });
    return out;
}

TruncatedChecks truncated_checks(const TruncatedRun& run, const TruncatedParams& p) {
    TruncatedChecks c;
    const auto& cp = run.checkpoints;
    for (std::size_t k = 0; k < cp.size(); ++k) {
        const double target = std::pow(p.lambda, -p.delta * static_cast<double>(k));
        c.max_amplitude_error = std::max(c.max_amplitude_error, std::fabs(cp[k].e - target));
    }
    const double base = 2.0 * std::atanh(std::pow(p.lambda, -p.delta));
    for (std::size_t k = 0; k + 1 < cp.size(); ++k) {
        const double kk = static_cast<double>(k);
        const double gap = cp[k + 1].t - cp[k].t;
        const double bound = base * std::pow(p.lambda, -p.n0 - kk + p.delta * kk);
        c.gaps.push_back(gap);
        c.gap_bounds.push_back(bound);
        if (!(gap > 0.0 && gap <= bound)) c.gaps_within_bounds = false;
    }
    c.target_ratio = std::pow(p.lambda, -1.0 + p.delta);
    if (cp.size() >= 4) c.fit = blowup_extrapolate(cp);
    if (!run.weighted_norms.empty()) c.norm_growth = run.weighted_norms.back() / run.weighted_norms.front();
    c.norm_growth_target = std::pow(p.lambda, (p.delta_prime - p.delta) * p.k_max);
    return c;
}

CascadeChecks cascade_checks(const Trajectory& traj, const CascadeParams& p, const DetectOptions& opt) {
    CascadeChecks c;
    c.events = detect_transitions(traj, opt);
    const auto& ev = c.events;
    for (std::size_t k = 0; k + 1 < ev.size(); ++k) c.gaps.push_back(ev[k + 1].t - ev[k].t);
    for (std::size_t k = 0; k + 1 < c.gaps.size(); ++k) {
        const double ratio = c.gaps[k + 1] / c.gaps[k];
        const double rho = std::pow(p.ratio(), -2.5) * ev[k].e / ev[k + 1].e;
        c.gap_ratio.push_back(ratio);
        c.rho.push_back(rho);
        if (!(c.gaps[k + 1] < c.gaps[k])) c.gaps_decreasing = false;
        if (!(ratio >= 0.5 * rho && ratio <= 1.5 * rho)) c.ratios_in_band = false;
    }
    const EnergyProfile prof = energy_profile(traj);
    for (const auto& e : ev) {
        const auto it = std::lower_bound(prof.times.begin(), prof.times.end(), e.t);
        const auto i = static_cast<std::size_t>(it - prof.times.begin());
        double tail = 0.0;
        for (std::size_t s = 0; s < prof.scales.size(); ++s) {
            if (prof.scales[s] >= e.n + 2) tail += prof.by_scale[s][i];
        }
        const double frac = prof.total[i] > 0.0 ? tail / prof.total[i] : 0.0;
        c.tail_fraction.push_back(frac);
        c.max_tail_fraction = std::max(c.max_tail_fraction, frac);
    }
    return c;
}

// ---- orchestration ------------------------------------------------------------------

RunManifest run(const RunConfig& cfg) {
    RunManifest man;
    man.config = serialize_config(cfg);
    man.version = version();
    man.started_at = iso_now();
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir(cfg.out_dir);

    Outcome o;
    try {
        validate_config(cfg);
        fs::create_directories(dir);
        o = std::visit(
            [&](const auto& m) -> Outcome {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, GateOracleModel>) return run_gates(m, cfg.integrator, dir);
                else if constexpr (std::is_same_v<M, KPModel>) return run_kp(m, cfg.integrator, dir);
                else if constexpr (std::is_same_v<M, TruncatedModel>) return run_truncated(m, cfg.integrator, dir);
                else if constexpr (std::is_same_v<M, DelayModel>) return run_delay(m, cfg.integrator, dir);
                else if constexpr (std::is_same_v<M, CascadeModel>) return run_cascade_kind(m, cfg.integrator, dir);
                else return run_trilinear(m, cfg.seed, dir);
            },
            cfg.model);
        man.ok = true;
    } catch (const ConfigError& e) {
        man.error_kind = "config";
        man.error = e.what();
    } catch (const InvalidParameter& e) {
        man.error_kind = "config";
        man.error = e.what();
    } catch (const NumericalFailure& e) {
        man.error_kind = "numerical";
        man.error = fmt::format("{} (t = {:.17g})", e.what(), e.time());
    } catch (const StageFailure& e) {
        man.error_kind = "numerical";
        man.error = fmt::format("{} (stage {})", e.what(), e.stage());
    } catch (const EventNotFound& e) {
        man.error_kind = "numerical";
        man.error = e.what();
    } catch (const std::exception& e) {
        man.error_kind = "runtime";
        man.error = e.what();
    }

    man.acceptance = o.acceptance;
    json summary = {{"experiment", cfg.kind()},
                    {"seed", cfg.seed},
                    {"ok", man.ok},
                    {"diagnostics", o.diagnostics},
                    {"acceptance", o.acceptance}};
    if (!man.ok) summary["error"] = {{"kind", man.error_kind}, {"message", man.error}};

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) {
        try {
            write_text((dir / "summary.json").string(), summary.dump(2) + "\n");
            o.files.push_back("summary.json");
            for (const auto& f : o.files) {
                const fs::path p = dir / f;
                man.files.push_back({f, sha256_file(p.string()), fs::file_size(p)});
            }
        } catch (const std::exception& e) {
            if (man.ok) {
                man.ok = false;
                man.error_kind = "runtime";
                man.error = e.what();
            }
        }
    } else if (man.ok) {
        man.ok = false;
        man.error_kind = "runtime";
        man.error = fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message());
    }

    man.finished_at = iso_now();
    man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json files = json::array();
    for (const auto& f : man.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    json manifest = {{"software", {{"name", "qlab"}, {"version", man.version}}},
                     {"config", man.config},
                     {"started_at", man.started_at},
                     {"finished_at", man.finished_at},
                     {"wall_seconds", man.wall_seconds},
                     {"status", man.ok ? "ok" : "failed"},
                     {"acceptance", man.acceptance},
                     {"files", files}};
    if (!man.ok) manifest["error"] = {{"kind", man.error_kind}, {"message", man.error}};
    if (!ec) {
        try {
            write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
        } catch (const std::exception&) {
        }
    }
    return man;
}

}  // namespace qlab
