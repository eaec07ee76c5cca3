#pragma once

// Run configuration: YAML ingestion with strict key checking, validation and
// a canonical serializer that round-trips.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "qlab/diagnostics.hpp"
#include "qlab/error.hpp"
#include "qlab/integrator.hpp"
#include "qlab/models.hpp"

namespace qlab {

// Parse or validation failure. line/column are 1-based; 0 when unknown.
class ConfigError : public Error {
  public:
    ConfigError(const std::string& what, int line = 0, int column = 0);
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

  private:
    int line_;
    int column_;
};

struct GateOracleModel {
    double alpha = 1.0;
    double amplitude = 1.0;
    double t_end = 5.0;
    double amplifier_T = 3.0;
    double rotor_z = 1.0;
    friend bool operator==(const GateOracleModel&, const GateOracleModel&) = default;
};

struct KPModel {
    KPParams params;
    double t_end = 10.0;
    bool modified = false;
    double g_beta = 1.0;  // g(s) = log(1+s)^beta for the modified variant
    friend bool operator==(const KPModel&, const KPModel&) = default;
};

struct TruncatedModel {
    TruncatedParams params;
    friend bool operator==(const TruncatedModel&, const TruncatedModel&) = default;
};

struct DelayModel {
    DelayParams params;
    double t_end = 10.0;
    friend bool operator==(const DelayModel&, const DelayModel&) = default;
};

struct CascadeModel {
    CascadeParams params;
    CascadeRunOptions run;
    std::optional<BoundConstants> bounds;  // unset: asymptotic constants
    friend bool operator==(const CascadeModel&, const CascadeModel&) = default;
};

struct TrilinearModel {
    int grid = 8;
    double radius = 1e-3;
    int samples = 500;
    friend bool operator==(const TrilinearModel&, const TrilinearModel&) = default;
};

using ModelConfig = std::variant<GateOracleModel, KPModel, TruncatedModel, DelayModel, CascadeModel, TrilinearModel>;

struct RunConfig {
    ModelConfig model;
    IntegratorConfig integrator;
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    std::string kind() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Experiment names in the order of ModelConfig's alternatives.
const std::vector<std::string>& experiment_kinds();

// Throws ConfigError. Overrides are "section.key=value" assignments applied
// to the document before validation (e.g. "model.Gamma=30").
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path);

// Validates model and integrator invariants; throws ConfigError naming the
// violated one.
void validate_config(const RunConfig& cfg);

// Canonical YAML; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace qlab
