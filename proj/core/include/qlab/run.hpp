#pragma once

// Run orchestration: executes a RunConfig, writes the time series, events,
// summary and manifest into the output directory.
//
//   timeseries.csv  t, mode amplitudes in declared order, E_n per scale, D
//   events.csv      n, t, e per detected checkpoint
//   summary.json    diagnostics and acceptance flags
//   manifest.json   config echo, version, wall times, file checksums
//
// Everything except manifest.json is a deterministic function of the config.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qlab/config.hpp"
#include "qlab/diagnostics.hpp"
#include "qlab/integrator.hpp"

namespace qlab {

const char* version();

struct ArtifactFile {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string config;  // canonical YAML echo
    std::string version;
    std::string started_at;
    std::string finished_at;
    double wall_seconds = 0.0;
    bool ok = false;
    std::string error_kind;  // config | numerical | runtime
    std::string error;
    std::map<std::string, bool> acceptance;
    std::vector<ArtifactFile> files;

    bool all_accepted() const;
    // 0 ok, 2 config error, 3 numerical or runtime failure, 4 acceptance
    // failure (only when check is set).
    int exit_code(bool check) const;
};

// Never throws for model failures; they are recorded in the manifest.
RunManifest run(const RunConfig& cfg);

std::string sha256_file(const std::string& path);

// Columns: t, modes, E_n per scale, D; 17 significant digits.
void write_timeseries_csv(const Trajectory& traj, const std::string& path);
void write_events_csv(const std::vector<TransitionEvent>& events, const std::string& path);
// Reads n,t,e records with a header line; throws InvalidInput.
std::vector<TransitionEvent> read_events_csv(const std::string& path);

// ---- shared experiment analyses ---------------------------------------------

struct GateDeviation {
    std::string gate;
    double max_rel_error = 0.0;  // max |X - X_closed| / |X_closed| (sup norms)
    Trajectory trajectory;
};

// pump from (A, 0), amplifier from its closed form at t = 0, rotor from
// (A, 0, z).
std::vector<GateDeviation> gate_oracle_deviations(const GateOracleModel& m, const IntegratorConfig& cfg);

struct TruncatedChecks {
    double max_amplitude_error = 0.0;  // |X_{n0+k}(t_k) - lambda^{-delta k}|
    std::vector<double> gaps;
    std::vector<double> gap_bounds;    // 2 artanh(lambda^-delta) lambda^{-n0-k+delta k}
    bool gaps_within_bounds = true;
    Extrapolation fit;
    double target_ratio = 0.0;         // lambda^{-1+delta}
    double norm_growth = 0.0;          // last / first weighted norm
    double norm_growth_target = 0.0;   // lambda^{(delta'-delta) k_max}
};

TruncatedChecks truncated_checks(const TruncatedRun& run, const TruncatedParams& p);

struct CascadeChecks {
    std::vector<TransitionEvent> events;
    std::vector<double> gaps;
    std::vector<double> gap_ratio;     // gaps[k+1] / gaps[k]
    std::vector<double> rho;           // (1+eps0)^{-5/2} e_k / e_{k+1}
    bool gaps_decreasing = true;
    bool ratios_in_band = true;        // gap_ratio in [0.5 rho, 1.5 rho]
    std::vector<double> tail_fraction; // E at scales >= n+2 over total, per event
    double max_tail_fraction = 0.0;
};

CascadeChecks cascade_checks(const Trajectory& traj, const CascadeParams& p, const DetectOptions& opt = {});

}  // namespace qlab
