// qlab: command-line driver for the circuit experiments.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "qlab/circuit.hpp"
#include "qlab/config.hpp"
#include "qlab/diagnostics.hpp"
#include "qlab/error.hpp"
#include "qlab/models.hpp"
#include "qlab/run.hpp"
#include "qlab/spec_io.hpp"
#include "qlab/trilinear.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalFailure = 3;
constexpr int kAcceptanceFailure = 4;

void print_manifest(const qlab::RunManifest& m, const std::string& dir) {
    if (!m.ok) {
        fmt::print(stderr, "{} error: {}\n", m.error_kind, m.error);
        return;
    }
    fmt::print("wrote {} ({} files, {:.3f} s)\n", dir, m.files.size(), m.wall_seconds);
    for (const auto& [name, pass] : m.acceptance) fmt::print("  {:<24} {}\n", name, pass ? "pass" : "FAIL");
}

int cmd_simulate(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed, bool quiet,
                 bool check) {
    qlab::RunConfig cfg = qlab::load_config(config);
    if (!out.empty()) cfg.out_dir = out;
    if (seed) cfg.seed = *seed;
    const qlab::RunManifest m = qlab::run(cfg);
    if (!quiet || !m.ok) print_manifest(m, cfg.out_dir);
    return m.exit_code(check);
}

int cmd_verify(const std::string& builtin, const std::string& spec_path, int samples, std::uint64_t seed, bool quiet,
               bool check) {
    const qlab::CircuitSpec spec =
        !spec_path.empty() ? qlab::load_spec(spec_path) : qlab::bundled_system(builtin).spec;
    const auto report = qlab::check_cancellation_structural(spec);
    const double numeric = qlab::check_cancellation_numeric(spec, samples, seed);
    if (!quiet) std::cout << qlab::cancellation_report_json(report, numeric);
    return check && !(report.pass && numeric <= 1e-12) ? kAcceptanceFailure : kOk;
}

int cmd_gates(const qlab::IntegratorConfig& ic, bool quiet, bool check) {
    bool pass = true;
    for (const auto& g : qlab::gate_oracle_deviations({}, ic)) {
        const bool ok = g.max_rel_error <= 1e-8;
        pass = pass && ok;
        if (!quiet) {
            fmt::print("{:<10} max relative deviation {:.3e}  {}\n", g.gate, g.max_rel_error, ok ? "pass" : "FAIL");
        }
    }
    return check && !pass ? kAcceptanceFailure : kOk;
}

int cmd_extrapolate(const std::string& path, bool quiet) {
    const auto events = qlab::read_events_csv(path);
    const auto x = qlab::blowup_extrapolate(events);
    if (!quiet) {
        json j = {{"events", events.size()},
                  {"T_star", std::isfinite(x.T_star) ? json(x.T_star) : json(nullptr)},
                  {"ratio", x.ratio},
                  {"fit_residual", x.fit_residual}};
        std::cout << j.dump(2) << "\n";
    }
    return kOk;
}

int cmd_scan(double radius, int samples, std::uint64_t seed, int grid, unsigned threads, bool quiet, bool check) {
    const auto base = qlab::FreqTriple::base();
    const auto r = qlab::nondegeneracy_scan(base, radius, samples, seed, grid, threads);
    if (!quiet) {
        const auto fc = qlab::fourier_coefficients(base, grid);
        fmt::print("base triple min |c_sigma| = {:.8f}\n", fc.min_abs());
        fmt::print("scan: {} samples, radius {:g}, seed {}: min |c_sigma| = {:.8f}\n", r.samples, radius, seed,
                   r.min_abs_c);
        for (int j = 0; j < 3; ++j) {
            fmt::print("  argmin eta{} = ({:.12g}, {:.12g}, {:.12g})\n", j + 1, r.argmin[j].x(), r.argmin[j].y(),
                       r.argmin[j].z());
        }
    }
    return check && r.min_abs_c < 0.05 ? kAcceptanceFailure : kOk;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
    return out;
}

const json* lookup(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &(*cur)[key];
        if (dot == std::string::npos) return cur;
        start = dot + 1;
    }
}

int cmd_sweep(const std::string& config, const std::string& param, const std::string& out,
              const std::vector<std::string>& metrics, unsigned jobs, bool quiet, bool check) {
    std::ifstream in(config);
    if (!in) throw qlab::ConfigError(fmt::format("cannot open config file '{}'", config));
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto eq = param.find('=');
    if (eq == std::string::npos) throw qlab::ConfigError("--param must look like key=v1,v2,...");
    const std::string key = param.substr(0, eq);
    std::vector<std::string> values;
    std::stringstream ss(param.substr(eq + 1));
    for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
    if (values.empty()) throw qlab::ConfigError("--param has no values");

    // Parse everything up front so config errors surface before any run.
    std::vector<qlab::RunConfig> cfgs;
    const std::string root = out.empty() ? qlab::parse_config(text).out_dir : out;
    for (const auto& v : values) {
        auto c = qlab::parse_config(text, {key + "=" + v});
        c.out_dir = (fs::path(root) / sanitize(key + "=" + v)).string();
        cfgs.push_back(std::move(c));
    }

    std::vector<qlab::RunManifest> manifests(cfgs.size());
    std::atomic<std::size_t> next{0};
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(cfgs.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < cfgs.size(); i = next++) manifests[i] = qlab::run(cfgs[i]);
        });
    }
    for (auto& t : pool) t.join();

    json table = json::array();
    int code = kOk;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto& m = manifests[i];
        json row = {{"value", values[i]}, {"dir", cfgs[i].out_dir}, {"status", m.ok ? "ok" : "failed"},
                    {"acceptance", m.acceptance}};
        if (!m.ok) row["error"] = m.error;
        std::ifstream sf(fs::path(cfgs[i].out_dir) / "summary.json");
        if (sf && !metrics.empty()) {
            const json summary = json::parse(sf, nullptr, false);
            for (const auto& name : metrics) {
                const json* v = lookup(summary, name);
                row["metrics"][name] = v ? *v : json(nullptr);
            }
        }
        table.push_back(row);
        const int c = m.exit_code(check);
        if (c != kOk && (code == kOk || c < code)) code = c;
    }
    fs::create_directories(root);
    std::ofstream(fs::path(root) / "sweep.json") << json{{"param", key}, {"runs", table}}.dump(2) << "\n";
    if (!quiet) std::cout << table.dump(2) << "\n";
    return code;
}

int cmd_export(const std::string& builtin, bool list) {
    if (list) {
        for (const auto& b : qlab::bundled_systems()) fmt::print("{}\n", b.name);
        return kOk;
    }
    std::cout << qlab::spec_to_json(qlab::bundled_system(builtin).spec);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quadratic circuit laboratory: gates, dyadic cascades and blowup diagnostics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(qlab::version()));

    bool quiet = false;
    bool check = false;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* sub, bool with_check) {
        sub->add_flag("--quiet", quiet, "Suppress normal output");
        if (with_check) sub->add_flag("--check", check, "Exit with status 4 when an acceptance check fails");
    };

    std::string config, out;
    auto* sim = app.add_subcommand("simulate", "Run the experiment described by a config file");
    sim->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "Output directory (overrides output.dir)");
    auto* sim_seed = sim->add_option("--seed", seed, "Seed override");
    common(sim, true);

    std::string builtin, spec_path;
    int samples = 1000;
    auto* ver = app.add_subcommand("verify-cancellation", "Structural and numeric cancellation audit of a spec");
    auto* vb = ver->add_option("--builtin", builtin, "Bundled system name (see export-spec --list)");
    auto* vs = ver->add_option("--spec", spec_path, "Spec JSON file")->check(CLI::ExistingFile);
    vb->excludes(vs);
    ver->add_option("--samples", samples, "Random states for the numeric check")->check(CLI::PositiveNumber);
    ver->add_option("--seed", seed, "Seed for the numeric check");
    common(ver, true);

    double rtol = 1e-10;
    auto* gates = app.add_subcommand("gates-demo", "Compare integrated gates with their closed forms");
    gates->add_option("--rtol", rtol, "Integrator relative tolerance");
    common(gates, true);

    std::string events_path;
    auto* ext = app.add_subcommand("extrapolate", "Fit the blowup time to an events file");
    ext->add_option("--events", events_path, "events.csv (n,t,e)")->required()->check(CLI::ExistingFile);
    common(ext, false);

    double radius = 1e-3;
    int scan_samples = 500;
    int grid = 8;
    unsigned threads = 0;
    auto* scan = app.add_subcommand("scan-nondegeneracy", "Random scan of min |c_sigma| near the base triple");
    scan->add_option("--radius", radius, "Perturbation radius")->check(CLI::NonNegativeNumber);
    scan->add_option("--samples", scan_samples, "Number of triples")->check(CLI::PositiveNumber);
    scan->add_option("--seed", seed, "Seed");
    scan->add_option("--grid", grid, "Quadrature points per angle")->check(CLI::Range(4, 256));
    scan->add_option("--threads", threads, "Worker threads (0: hardware)");
    common(scan, true);

    std::string param;
    std::vector<std::string> metrics;
    unsigned jobs = 0;
    auto* sweep = app.add_subcommand("sweep", "Run a parameter grid concurrently, one directory per value");
    sweep->add_option("--config", config, "Base YAML configuration")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "key=v1,v2,... e.g. model.Gamma=20,30,40")->required();
    sweep->add_option("--out", out, "Root output directory");
    sweep->add_option("--metric", metrics, "Summary entries to tabulate, e.g. diagnostics.t_c_error");
    sweep->add_option("--jobs", jobs, "Concurrent runs (0: hardware)");
    common(sweep, true);

    bool list = false;
    auto* exp = app.add_subcommand("export-spec", "Print a bundled system as spec JSON");
    exp->add_option("--builtin", builtin, "Bundled system name");
    exp->add_flag("--list", list, "List bundled systems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*sim) return cmd_simulate(config, out, *sim_seed ? std::optional<std::uint64_t>(seed) : std::nullopt, quiet, check);
        if (*ver) {
            if (builtin.empty() && spec_path.empty()) throw qlab::ConfigError("give --builtin NAME or --spec FILE");
            return cmd_verify(builtin, spec_path, samples, seed, quiet, check);
        }
        if (*gates) {
            qlab::IntegratorConfig ic;
            ic.rtol = rtol;
            ic.validate();
            return cmd_gates(ic, quiet, check);
        }
        if (*ext) return cmd_extrapolate(events_path, quiet);
        if (*scan) return cmd_scan(radius, scan_samples, seed, grid, threads, quiet, check);
        if (*sweep) return cmd_sweep(config, param, out, metrics, jobs, quiet, check);
        if (*exp) {
            if (builtin.empty() && !list) throw qlab::ConfigError("give --builtin NAME or --list");
            return cmd_export(builtin, list);
        }
    } catch (const qlab::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const qlab::InvalidParameter& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const qlab::InvalidInput& e) {
        fmt::print(stderr, "input error: {}\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kNumericalFailure;
    }
    return kOk;
}
