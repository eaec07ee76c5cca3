#include "qlab/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "qlab/gates.hpp"

namespace qlab {

ConfigError::ConfigError(const std::string& what, int line, int column)
    : Error(line > 0 ? fmt::format("{}:{}: {}", line, column, what) : what), line_(line), column_(column) {}

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {"gate-oracle", "kp", "truncated", "delay", "cascade", "trilinear"};
    return kinds;
}

std::string RunConfig::kind() const { return experiment_kinds()[model.index()]; }

namespace {

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& what) {
    const YAML::Mark m = node.Mark();
    if (m.is_null()) throw ConfigError(what);
    throw ConfigError(what, m.line + 1, m.column + 1);
}

// A YAML mapping whose keys are consumed one by one; leftovers are errors.
class Section {
  public:
    Section(const YAML::Node& node, std::string path)
        : node_(node.IsDefined() ? node : YAML::Node()), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) fail_at(node_, fmt::format("'{}' must be a mapping", path_));
    }

    bool has(const std::string& key) const { return node_.IsMap() && at(key) && !at(key).IsNull(); }

    template <class T>
    void get(const std::string& key, T& out) {
        used_.insert(key);
        if (!node_.IsMap()) return;
        const YAML::Node v = at(key);
        if (!v) return;
        out = convert<T>(v, key);
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        used_.insert(key);
        if (!node_.IsMap()) return;
        const YAML::Node v = at(key);
        if (!v || v.IsNull()) {
            out.reset();
            return;
        }
        out = convert<T>(v, key);
    }

    Section sub(const std::string& key) {
        used_.insert(key);
        return Section(node_.IsMap() ? at(key) : YAML::Node(), path_.empty() ? key : path_ + "." + key);
    }

    YAML::Node raw(const std::string& key) {
        used_.insert(key);
        return node_.IsMap() ? at(key) : YAML::Node();
    }

    void finish() const {
        if (!node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key)) {
                fail_at(kv.first, fmt::format("unknown key '{}'{}", key, path_.empty() ? "" : " in '" + path_ + "'"));
            }
        }
    }

  private:
    // Const lookup; the mutable operator[] would insert the key.
    YAML::Node at(const std::string& key) const {
        const YAML::Node& n = node_;
        return n[key];
    }

    template <class T>
    T convert(const YAML::Node& v, const std::string& key) const {
        if (!v.IsScalar()) fail_at(v, fmt::format("'{}' must be a scalar", qualified(key)));
        try {
            return v.as<T>();
        } catch (const YAML::BadConversion&) {
            fail_at(v, fmt::format("'{}' has invalid value '{}'", qualified(key), v.Scalar()));
        }
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
};

void read_integrator(Section s, IntegratorConfig& c) {
    s.get("rtol", c.rtol);
    s.get("atol", c.atol);
    s.get("atol_seeded", c.atol_seeded);
    s.get("h_init", c.h_init);
    s.get("h_min", c.h_min);
    s.get("h_max", c.h_max);
    s.get("event_tol", c.event_tol);
    s.get("sample_interval", c.sample_interval);
    unsigned long long steps = c.max_steps;
    s.get("max_steps", steps);
    c.max_steps = static_cast<std::size_t>(steps);
    const YAML::Node ov = s.raw("atol_overrides");
    if (ov && !ov.IsNull()) {
        if (!ov.IsMap()) fail_at(ov, "'integrator.atol_overrides' must be a mapping of mode label to tolerance");
        c.atol_overrides.clear();
        for (const auto& kv : ov) {
            try {
                c.atol_overrides[kv.first.as<std::string>()] = kv.second.as<double>();
            } catch (const YAML::BadConversion&) {
                fail_at(kv.second, "'integrator.atol_overrides' values must be numbers");
            }
        }
    }
    s.finish();
}

ModelConfig read_model(const std::string& kind, Section s, const YAML::Node& where) {
    if (kind == "gate-oracle") {
        GateOracleModel m;
        s.get("alpha", m.alpha);
        s.get("amplitude", m.amplitude);
        s.get("t_end", m.t_end);
        s.get("amplifier_T", m.amplifier_T);
        s.get("rotor_z", m.rotor_z);
        s.finish();
        return m;
    }
    if (kind == "kp") {
        KPModel m;
        s.get("lambda", m.params.lambda);
        s.get("alpha_diss", m.params.alpha_diss);
        s.get("n_lo", m.params.n_lo);
        s.get("n_hi", m.params.n_hi);
        s.get("inviscid", m.params.inviscid);
        s.get("t_end", m.t_end);
        s.get("modified", m.modified);
        s.get("g_beta", m.g_beta);
        s.finish();
        return m;
    }
    if (kind == "truncated") {
        TruncatedModel m;
        s.get("lambda", m.params.lambda);
        s.get("alpha_diss", m.params.alpha_diss);
        s.get("delta", m.params.delta);
        s.get("delta_prime", m.params.delta_prime);
        s.get("n0", m.params.n0);
        s.get("k_max", m.params.k_max);
        s.finish();
        return m;
    }
    if (kind == "delay") {
        DelayModel m;
        s.get("K", m.params.K);
        s.get("eps", m.params.eps);
        s.get("Gamma", m.params.Gamma);
        s.get("t_end", m.t_end);
        s.finish();
        return m;
    }
    if (kind == "cascade") {
        CascadeModel m;
        auto& p = m.params;
        s.get("eps0", p.eps0);
        s.get("eps", p.eps);
        s.get("K", p.K);
        s.get("Gamma", p.Gamma);
        s.get("n_lo", p.n_lo);
        s.get("n_hi", p.n_hi);
        s.get("viscous", p.viscous);
        s.get("alpha_diss_exponent", p.alpha_diss_exponent);
        s.get("n0", p.n0);
        s.get("t_end_rescaled", m.run.t_end_rescaled);
        s.get("sample_rescaled", m.run.sample_rescaled);
        s.get("max_scale", m.run.max_scale);
        s.get("window_threshold", m.run.window_threshold);
        s.get("grow", m.run.grow);
        if (s.has("bounds")) {
            Section b = s.sub("bounds");
            BoundConstants c;
            b.get("C1", c.C1);
            b.get("rho1", c.rho1);
            b.get("C2", c.C2);
            b.get("rho2", c.rho2);
            b.finish();
            m.bounds = c;
        } else {
            s.sub("bounds");
        }
        s.finish();
        return m;
    }
    if (kind == "trilinear") {
        TrilinearModel m;
        s.get("grid", m.grid);
        s.get("radius", m.radius);
        s.get("samples", m.samples);
        s.finish();
        return m;
    }
    fail_at(where, fmt::format("unknown experiment '{}'", kind));
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

// Shortest representation that reads back to the same double.
std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
    return fmt::format("{}", v);
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

namespace {

void apply_override(YAML::Node& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
    }
    const std::string path = assignment.substr(0, eq);
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::ParserException& e) {
        throw ConfigError(fmt::format("override '{}': {}", assignment, e.msg));
    }
    std::vector<std::string> keys;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        keys.push_back(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    std::vector<YAML::Node> chain = {root};
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        YAML::Node next = chain.back()[keys[i]];
        if (!next.IsDefined() || next.IsNull()) {
            chain.back()[keys[i]] = YAML::Node(YAML::NodeType::Map);
            next = chain.back()[keys[i]];
        } else if (!next.IsMap()) {
            throw ConfigError(fmt::format("override '{}': '{}' is not a section", assignment, keys[i]));
        }
        chain.push_back(next);
    }
    chain.back()[keys.back()] = value;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (!root || root.IsNull()) throw ConfigError("empty configuration");
    if (!root.IsMap()) fail_at(root, "configuration must be a mapping");
    for (const auto& o : overrides) apply_override(root, o);

    Section top(root, "");
    RunConfig cfg;
    const YAML::Node exp = top.raw("experiment");
    if (!exp) throw ConfigError("missing required key 'experiment'");
    if (!exp.IsScalar()) fail_at(exp, "'experiment' must be a string");
    const std::string kind = exp.Scalar();
    top.get("seed", cfg.seed);
    Section out = top.sub("output");
    out.get("dir", cfg.out_dir);
    out.finish();
    read_integrator(top.sub("integrator"), cfg.integrator);
    cfg.model = read_model(kind, top.sub("model"), exp);
    top.finish();
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate_config(const RunConfig& cfg) {
    try {
        cfg.integrator.validate();
    } catch (const InvalidParameter& e) {
        throw ConfigError(fmt::format("IntegratorConfig: {}", e.what()));
    }
    require(!cfg.out_dir.empty(), "output.dir must not be empty");
    try {
        std::visit(
            [](const auto& m) {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, GateOracleModel>) {
                    GateParams gp(m.alpha);
                    (void)gp;
                    require(positive(m.amplitude), "gate-oracle: amplitude must be > 0");
                    require(positive(m.t_end), "gate-oracle: t_end must be > 0");
                    require(std::isfinite(m.amplifier_T), "gate-oracle: amplifier_T must be finite");
                    require(std::isfinite(m.rotor_z) && m.rotor_z != 0.0, "gate-oracle: rotor_z must be finite and nonzero");
                } else if constexpr (std::is_same_v<M, KPModel>) {
                    m.params.validate();
                    require(positive(m.t_end), "kp: t_end must be > 0");
                    require(std::isfinite(m.g_beta), "kp: g_beta must be finite");
                } else if constexpr (std::is_same_v<M, TruncatedModel>) {
                    m.params.validate();
                    require(m.params.stage_eps(0) <= 0.1,
                            fmt::format("TruncatedParams: stage eps {:.3g} exceeds 0.1, increase n0", m.params.stage_eps(0)));
                } else if constexpr (std::is_same_v<M, DelayModel>) {
                    m.params.validate();
                    require(positive(m.t_end), "delay: t_end must be > 0");
                } else if constexpr (std::is_same_v<M, CascadeModel>) {
                    m.params.validate();
                    require(positive(m.run.t_end_rescaled), "cascade: t_end_rescaled must be > 0");
                    require(m.run.sample_rescaled >= 0.0, "cascade: sample_rescaled must be >= 0");
                    require(positive(m.run.window_threshold), "cascade: window_threshold must be > 0");
                    require(m.run.max_scale == 0 || m.run.max_scale >= m.params.n0 + 3,
                            "cascade: max_scale must be 0 or >= n0 + 3");
                    if (m.bounds) {
                        require(m.bounds->C1 >= 0.0 && m.bounds->C2 >= 0.0, "cascade.bounds: C1, C2 must be >= 0");
                        require(positive(m.bounds->rho1) && positive(m.bounds->rho2),
                                "cascade.bounds: rho1, rho2 must be > 0");
                    }
                } else {
                    require(m.grid >= 4, "trilinear: grid must be >= 4");
                    require(std::isfinite(m.radius) && m.radius >= 0.0, "trilinear: radius must be >= 0");
                    require(m.samples >= 1, "trilinear: samples must be >= 1");
                }
            },
            cfg.model);
    } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
    }
}

std::string serialize_config(const RunConfig& cfg) {
    std::string s;
    auto line = [&s](const std::string& l) {
        s += l;
        s += '\n';
    };
    line(fmt::format("experiment: {}", cfg.kind()));
    line(fmt::format("seed: {}", cfg.seed));
    line("output:");
    line(fmt::format("  dir: {}", quoted(cfg.out_dir)));
    const auto& ic = cfg.integrator;
    line("integrator:");
    line(fmt::format("  rtol: {}", num(ic.rtol)));
    line(fmt::format("  atol: {}", num(ic.atol)));
    line(fmt::format("  atol_seeded: {}", num(ic.atol_seeded)));
    if (!ic.atol_overrides.empty()) {
        line("  atol_overrides:");
        for (const auto& [label, v] : ic.atol_overrides) line(fmt::format("    {}: {}", quoted(label), num(v)));
    }
    line(fmt::format("  h_init: {}", num(ic.h_init)));
    line(fmt::format("  h_min: {}", num(ic.h_min)));
    line(fmt::format("  h_max: {}", num(ic.h_max)));
    line(fmt::format("  event_tol: {}", num(ic.event_tol)));
    line(fmt::format("  sample_interval: {}", num(ic.sample_interval)));
    line(fmt::format("  max_steps: {}", ic.max_steps));
    line("model:");
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, GateOracleModel>) {
                line(fmt::format("  alpha: {}", num(m.alpha)));
                line(fmt::format("  amplitude: {}", num(m.amplitude)));
                line(fmt::format("  t_end: {}", num(m.t_end)));
                line(fmt::format("  amplifier_T: {}", num(m.amplifier_T)));
                line(fmt::format("  rotor_z: {}", num(m.rotor_z)));
            } else if constexpr (std::is_same_v<M, KPModel>) {
                line(fmt::format("  lambda: {}", num(m.params.lambda)));
                line(fmt::format("  alpha_diss: {}", num(m.params.alpha_diss)));
                line(fmt::format("  n_lo: {}", m.params.n_lo));
                line(fmt::format("  n_hi: {}", m.params.n_hi));
                line(fmt::format("  inviscid: {}", flag(m.params.inviscid)));
                line(fmt::format("  t_end: {}", num(m.t_end)));
                line(fmt::format("  modified: {}", flag(m.modified)));
                line(fmt::format("  g_beta: {}", num(m.g_beta)));
            } else if constexpr (std::is_same_v<M, TruncatedModel>) {
                line(fmt::format("  lambda: {}", num(m.params.lambda)));
                line(fmt::format("  alpha_diss: {}", num(m.params.alpha_diss)));
                line(fmt::format("  delta: {}", num(m.params.delta)));
                line(fmt::format("  delta_prime: {}", num(m.params.delta_prime)));
                line(fmt::format("  n0: {}", m.params.n0));
                line(fmt::format("  k_max: {}", m.params.k_max));
            } else if constexpr (std::is_same_v<M, DelayModel>) {
                line(fmt::format("  K: {}", num(m.params.K)));
                line(fmt::format("  eps: {}", num(m.params.eps)));
                line(fmt::format("  Gamma: {}", m.params.Gamma ? num(*m.params.Gamma) : "~"));
                line(fmt::format("  t_end: {}", num(m.t_end)));
            } else if constexpr (std::is_same_v<M, CascadeModel>) {
                const auto& p = m.params;
                line(fmt::format("  eps0: {}", num(p.eps0)));
                line(fmt::format("  eps: {}", num(p.eps)));
                line(fmt::format("  K: {}", num(p.K)));
                line(fmt::format("  Gamma: {}", p.Gamma ? num(*p.Gamma) : "~"));
                line(fmt::format("  n_lo: {}", p.n_lo));
                line(fmt::format("  n_hi: {}", p.n_hi));
                line(fmt::format("  viscous: {}", flag(p.viscous)));
                line(fmt::format("  alpha_diss_exponent: {}", num(p.alpha_diss_exponent)));
                line(fmt::format("  n0: {}", p.n0));
                line(fmt::format("  t_end_rescaled: {}", num(m.run.t_end_rescaled)));
                line(fmt::format("  sample_rescaled: {}", num(m.run.sample_rescaled)));
                line(fmt::format("  max_scale: {}", m.run.max_scale));
                line(fmt::format("  window_threshold: {}", num(m.run.window_threshold)));
                line(fmt::format("  grow: {}", flag(m.run.grow)));
                if (m.bounds) {
                    line("  bounds:");
                    line(fmt::format("    C1: {}", num(m.bounds->C1)));
                    line(fmt::format("    rho1: {}", num(m.bounds->rho1)));
                    line(fmt::format("    C2: {}", num(m.bounds->C2)));
                    line(fmt::format("    rho2: {}", num(m.bounds->rho2)));
                }
            } else {
                line(fmt::format("  grid: {}", m.grid));
                line(fmt::format("  radius: {}", num(m.radius)));
                line(fmt::format("  samples: {}", m.samples));
            }
        },
        cfg.model);
    return s;
}

}  // namespace qlab
