#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qlab/config.hpp"
#include "qlab/models.hpp"
#include "qlab/run.hpp"
#include "qlab/spec_io.hpp"

using namespace qlab;
using ::testing::HasSubstr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qlab_test_" + name);
    fs::remove_all(p);
    return p;
}

const fs::path kSource = QLAB_SOURCE_DIR;

ConfigError config_error(const std::string& text, const std::vector<std::string>& overrides = {}) {
    try {
        parse_config(text, overrides);
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "no ConfigError for:\n" << text;
    return ConfigError("none");
}

}  // namespace

TEST(ParseConfig, MinimalDelay) {
    const auto cfg = parse_config("experiment: delay\nmodel:\n  K: 8\n  eps: 1e-2\n  Gamma: 30\n");
    EXPECT_EQ(cfg.kind(), "delay");
    const auto& m = std::get<DelayModel>(cfg.model);
    EXPECT_EQ(m.params.K, 8.0);
    EXPECT_EQ(m.params.eps, 1e-2);
    EXPECT_EQ(m.params.Gamma, 30.0);
    EXPECT_EQ(m.t_end, 10.0);
    EXPECT_EQ(cfg.integrator, IntegratorConfig{});
    EXPECT_EQ(cfg.seed, 0u);
}

TEST(ParseConfig, DefaultsPerKind) {
    for (const auto& kind : experiment_kinds()) {
        // Unset Gamma falls back to K^10, beyond the exp guard for the default K.
        if (kind == "delay" || kind == "cascade") {
            EXPECT_THAT(config_error("experiment: " + kind + "\n").what(), HasSubstr("Gamma"));
            continue;
        }
        const auto cfg = parse_config("experiment: " + kind + "\n");
        EXPECT_EQ(cfg.kind(), kind);
    }
}

TEST(ParseConfig, ZeroGateRateNamesGateParams) {
    const auto e = config_error("experiment: gate-oracle\nmodel:\n  alpha: 0\n");
    EXPECT_THAT(e.what(), HasSubstr("GateParams"));
}

TEST(ParseConfig, UnknownKeyHasPosition) {
    const auto e = config_error("experiment: delay\nmodel:\n  K: 8\n  epsilonn: 1e-2\n");
    EXPECT_THAT(e.what(), HasSubstr("epsilonn"));
    EXPECT_EQ(e.line(), 4);
    EXPECT_EQ(e.column(), 3);
    EXPECT_THAT(e.what(), HasSubstr("4:3"));
}

TEST(ParseConfig, SyntaxErrorHasPosition) {
    const auto e = config_error("experiment: delay\nmodel: [1, 2\n");
    EXPECT_GT(e.line(), 0);
    EXPECT_GT(e.column(), 0);
}

TEST(ParseConfig, BadValueHasPosition) {
    const auto e = config_error("experiment: delay\nmodel:\n  K: eight\n");
    EXPECT_EQ(e.line(), 3);
    EXPECT_THAT(e.what(), HasSubstr("K"));
}

TEST(ParseConfig, StructuralErrors) {
    EXPECT_THAT(config_error("model: {}\n").what(), HasSubstr("experiment"));
    EXPECT_THAT(config_error("experiment: warp\n").what(), HasSubstr("warp"));
    EXPECT_THAT(config_error("experiment: kp\nbogus: 1\n").what(), HasSubstr("bogus"));
    EXPECT_THAT(config_error("experiment: kp\nintegrator:\n  rtol: 0.5\n").what(), HasSubstr("rtol"));
}

TEST(ParseConfig, ValidationErrors) {
    EXPECT_THAT(config_error("experiment: delay\nmodel:\n  Gamma: 800\n").what(), HasSubstr("Gamma"));
    EXPECT_THAT(config_error("experiment: truncated\nmodel:\n  n0: 3\n").what(), HasSubstr("0.1"));
    EXPECT_THAT(config_error("experiment: cascade\nmodel:\n  Gamma: 30\n  n0: 5\n  max_scale: 6\n").what(),
                HasSubstr("max_scale"));
    EXPECT_THAT(config_error("experiment: kp\nmodel:\n  lambda: 1\n").what(), HasSubstr("lambda"));
}

TEST(ParseConfig, Overrides) {
    const auto cfg = parse_config("experiment: delay\nmodel:\n  Gamma: 30\n",
                                  {"model.Gamma=40", "integrator.rtol=1e-9", "seed=3", "output.dir=elsewhere"});
    EXPECT_EQ(std::get<DelayModel>(cfg.model).params.Gamma, 40.0);
    EXPECT_EQ(cfg.integrator.rtol, 1e-9);
    EXPECT_EQ(cfg.seed, 3u);
    EXPECT_EQ(cfg.out_dir, "elsewhere");
    EXPECT_THROW(parse_config("experiment: delay\n", {"model.Gama=40"}), ConfigError);
    EXPECT_THROW(parse_config("experiment: delay\n", {"noequals"}), ConfigError);
}

TEST(SerializeConfig, RoundTripsEveryKind) {
    std::vector<RunConfig> cfgs;
    RunConfig base;
    base.integrator.rtol = 3e-11;
    base.integrator.atol_overrides["c"] = 1e-30;
    base.integrator.h_max = 0.125;
    base.integrator.sample_interval = 0.1;
    base.out_dir = "some dir/with: colon";
    base.seed = 123456789012345ull;

    RunConfig c = base;
    c.model = GateOracleModel{2.0, 0.5, 4.0, 2.5, -1.0};
    cfgs.push_back(c);
    KPModel kp;
    kp.params = {3.0, 0.2, 1, 7, true};
    kp.modified = true;
    kp.g_beta = 0.7;
    kp.t_end = 2.0;
    c.model = kp;
    cfgs.push_back(c);
    TruncatedModel tm;
    tm.params.n0 = 16;
    tm.params.delta = 0.2;
    tm.params.k_max = 9;
    c.model = tm;
    cfgs.push_back(c);
    DelayModel dm;
    dm.params = {1.5, 0.1, std::nullopt};
    dm.t_end = 0.1 + 0.2;
    c.model = dm;
    cfgs.push_back(c);
    CascadeModel cm;
    cm.params.Gamma = 20.0;
    cm.params.n0 = 12;
    cm.params.viscous = true;
    cm.run.grow = false;
    cm.run.max_scale = 0;
    cm.bounds = BoundConstants{0.1, 1.1, 0.01, 2.0};
    cm.params.n_lo = 12;
    cm.params.n_hi = 15;
    c.model = cm;
    cfgs.push_back(c);
    c.model = TrilinearModel{16, 0.0, 3};
    cfgs.push_back(c);

    for (const auto& cfg : cfgs) {
        const std::string text = serialize_config(cfg);
        const RunConfig back = parse_config(text);
        EXPECT_EQ(back, cfg) << text;
        EXPECT_EQ(serialize_config(back), text);
    }
}

TEST(LoadConfig, ShippedConfigsAreValid) {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(kSource / "configs")) {
        if (entry.path().extension() != ".yaml") continue;
        EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 6);
    EXPECT_THROW(load_config((kSource / "configs" / "missing.yaml").string()), ConfigError);
}

// ---- runs -------------------------------------------------------------------

TEST(Run, DeterministicArtifacts) {
    RunConfig cfg = load_config((kSource / "configs" / "delay_small.yaml").string());
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    cfg.out_dir = a.string();
    const auto ma = run(cfg);
    cfg.out_dir = b.string();
    const auto mb = run(cfg);
    ASSERT_TRUE(ma.ok) << ma.error;
    ASSERT_TRUE(mb.ok) << mb.error;
    for (const char* f : {"timeseries.csv", "events.csv", "summary.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Run, ManifestChecksumsMatchFiles) {
    RunConfig cfg = load_config((kSource / "configs" / "gates.yaml").string());
    const fs::path dir = scratch("manifest");
    cfg.out_dir = dir.string();
    const auto m = run(cfg);
    ASSERT_TRUE(m.ok) << m.error;
    EXPECT_TRUE(m.all_accepted());
    EXPECT_EQ(m.exit_code(true), 0);
    ASSERT_FALSE(m.files.empty());
    for (const auto& f : m.files) {
        EXPECT_EQ(sha256_file((dir / f.path).string()), f.sha256) << f.path;
        EXPECT_EQ(fs::file_size(dir / f.path), f.bytes) << f.path;
    }
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(j["software"]["version"], version());
    EXPECT_EQ(j["config"], serialize_config(cfg));
    EXPECT_EQ(j["files"].size(), m.files.size());
    EXPECT_EQ(parse_config(j["config"].get<std::string>()), cfg);
    fs::remove_all(dir);
}

TEST(Run, AcceptanceFailureOnlyMattersWithCheck) {
    RunConfig cfg = load_config((kSource / "configs" / "gates.yaml").string());
    cfg.integrator.rtol = 1e-4;
    cfg.integrator.atol = 1e-6;
    const fs::path dir = scratch("loose");
    cfg.out_dir = dir.string();
    const auto m = run(cfg);
    EXPECT_TRUE(m.ok);
    EXPECT_FALSE(m.all_accepted());
    EXPECT_EQ(m.exit_code(false), 0);
    EXPECT_EQ(m.exit_code(true), 4);
    fs::remove_all(dir);
}

TEST(Run, InvalidModelIsConfigError) {
    RunConfig cfg;
    cfg.model = GateOracleModel{-1.0};
    const fs::path dir = scratch("bad_model");
    cfg.out_dir = dir.string();
    const auto m = run(cfg);
    EXPECT_FALSE(m.ok);
    EXPECT_EQ(m.error_kind, "config");
    EXPECT_EQ(m.exit_code(false), 2);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
    fs::remove_all(dir);
}

TEST(Run, StepBudgetIsNumericalError) {
    RunConfig cfg;
    cfg.model = TruncatedModel{};
    cfg.integrator.max_steps = 10;
    const fs::path dir = scratch("budget");
    cfg.out_dir = dir.string();
    const auto m = run(cfg);
    EXPECT_FALSE(m.ok);
    EXPECT_EQ(m.error_kind, "numerical");
    EXPECT_EQ(m.exit_code(true), 3);
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary["ok"], false);
    fs::remove_all(dir);
}

TEST(Sha256, KnownDigest) {
    const fs::path p = scratch("abc.txt");
    std::ofstream(p) << "abc";
    EXPECT_EQ(sha256_file(p.string()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    fs::remove(p);
    EXPECT_THROW(sha256_file(p.string()), std::exception);
}

TEST(EventsCsv, RoundTrip) {
    const fs::path p = scratch("events.csv");
    const std::vector<TransitionEvent> ev = {{3, 0.125, 1.0 / 3.0}, {4, 0.2, 0.9}};
    write_events_csv(ev, p.string());
    EXPECT_EQ(read_events_csv(p.string()), ev);
    std::ofstream(p) << "n,t,e\n1,abc,2\n";
    EXPECT_THROW(read_events_csv(p.string()), InvalidInput);
    fs::remove(p);
}

// ---- spec documents ---------------------------------------------------------

TEST(SpecJson, RoundTripsBundledSystems) {
    for (const auto& b : bundled_systems()) {
        const auto back = spec_from_json(spec_to_json(b.spec));
        ASSERT_EQ(back.size(), b.spec.size()) << b.name;
        EXPECT_EQ(back.modes(), b.spec.modes());
        EXPECT_EQ(back.dissipation(), b.spec.dissipation());
        EXPECT_EQ(back.amplifier_seeded_keys(), b.spec.amplifier_seeded_keys());
        ASSERT_EQ(back.terms().size(), b.spec.terms().size());
        for (std::size_t i = 0; i < back.terms().size(); ++i) EXPECT_EQ(back.terms()[i].coeff, b.spec.terms()[i].coeff);
    }
}

TEST(SpecJson, ShippedDocumentsMatchBuiltins) {
    for (const auto& b : bundled_systems()) {
        const auto spec = load_spec((kSource / "data" / "specs" / (b.name + ".json")).string());
        EXPECT_EQ(spec_to_json(spec), spec_to_json(b.spec)) << b.name;
    }
}

TEST(SpecJson, Errors) {
    EXPECT_THROW(spec_from_json("{"), InvalidInput);
    EXPECT_THROW(spec_from_json(R"({"modes": [{"label": "x", "component": 1, "scale": 0}],
                                    "terms": [{"out": "x", "in1": "x", "in2": "q", "coeff": 1}]})"),
                 InvalidInput);
    EXPECT_THROW(spec_from_json(R"({"modes": [{"label": "x", "component": 1, "scale": 0},
                                              {"label": "x", "component": 2, "scale": 0}], "terms": []})"),
                 InvalidInput);
}

TEST(SpecJson, ReportShape) {
    const CircuitSpec bad({{"x", 1, 0}, {"y", 2, 0}, {"z", 3, 0}}, {{{"x", 1, 0}, {"y", 2, 0}, {"z", 3, 0}, 1.0}});
    const auto j = nlohmann::json::parse(cancellation_report_json(check_cancellation_structural(bad), 0.5));
    EXPECT_EQ(j["pass"], false);
    EXPECT_EQ(j["numeric_residual"], 0.5);
    ASSERT_EQ(j["violating_triples"].size(), 1u);
}
