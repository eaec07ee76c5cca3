#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kSource = QLAB_SOURCE_DIR;

struct Result {
    int code = -1;
    std::string out;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qlab_cli_" + name);
    fs::remove_all(p);
    return p;
}

Result qlab(const std::string& args) {
    const fs::path log = scratch("stdout.txt");
    const std::string cmd = std::string("\"") + QLAB_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string config(const std::string& name) { return "\"" + (kSource / "configs" / name).string() + "\""; }

fs::path write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(Cli, HelpAndVersion) {
    EXPECT_EQ(qlab("--help").code, 0);
    const auto v = qlab("--version");
    EXPECT_EQ(v.code, 0);
    EXPECT_FALSE(v.out.empty());
}

TEST(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(qlab("").code, 2); }

TEST(Cli, SimulateWritesArtifacts) {
    const fs::path out = scratch("sim");
    const auto r = qlab("simulate --config " + config("delay_small.yaml") + " --out \"" + out.string() + "\" --check");
    EXPECT_EQ(r.code, 0) << r.out;
    for (const char* f : {"timeseries.csv", "events.csv", "summary.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    fs::remove_all(out);
}

TEST(Cli, InvalidConfigExitsTwo) {
    const auto bad = write_file("bad.yaml", "experiment: delay\nmodel:\n  epsilonn: 1e-2\n");
    const auto r = qlab("simulate --config \"" + bad.string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("epsilonn"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("3:3"), std::string::npos) << r.out;
    fs::remove(bad);
}

TEST(Cli, NumericalFailureExitsThree) {
    const auto cfg = write_file("budget.yaml", "experiment: truncated\nintegrator:\n  max_steps: 10\n");
    const fs::path out = scratch("budget_out");
    const auto r = qlab("simulate --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    fs::remove(cfg);
    fs::remove_all(out);
}

TEST(Cli, AcceptanceFailureExitsFourOnlyWithCheck) {
    const auto cfg = write_file("loose.yaml", "experiment: gate-oracle\nintegrator:\n  rtol: 1e-4\n  atol: 1e-6\n");
    const fs::path out = scratch("loose_out");
    const std::string base = "simulate --config \"" + cfg.string() + "\" --out \"" + out.string() + "\" --quiet";
    EXPECT_EQ(qlab(base).code, 0);
    EXPECT_EQ(qlab(base + " --check").code, 4);
    fs::remove(cfg);
    fs::remove_all(out);
}

TEST(Cli, VerifyCancellation) {
    const auto r = qlab("verify-cancellation --builtin table1 --check");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["pass"], true);
    EXPECT_LE(j["numeric_residual"].get<double>(), 1e-12);

    const auto bad = write_file("bad_spec.json", R"({"modes": [{"label": "x", "component": 1, "scale": 0},
        {"label": "y", "component": 2, "scale": 0}, {"label": "z", "component": 3, "scale": 0}],
        "terms": [{"out": "x", "in1": "y", "in2": "z", "coeff": 1.0}]})");
    EXPECT_EQ(qlab("verify-cancellation --spec \"" + bad.string() + "\" --check").code, 4);
    EXPECT_EQ(qlab("verify-cancellation --spec \"" + bad.string() + "\"").code, 0);
    EXPECT_EQ(qlab("verify-cancellation --builtin nope").code, 2);
    EXPECT_EQ(qlab("verify-cancellation").code, 2);
    fs::remove(bad);
}

TEST(Cli, ExportSpecRoundTrip) {
    const auto list = qlab("export-spec --list");
    EXPECT_EQ(list.code, 0);
    EXPECT_NE(list.out.find("table1"), std::string::npos);
    const auto spec = qlab("export-spec --builtin delay");
    ASSERT_EQ(spec.code, 0);
    const auto path = write_file("delay.json", spec.out);
    EXPECT_EQ(qlab("verify-cancellation --spec \"" + path.string() + "\" --check --quiet").code, 0);
    fs::remove(path);
}

TEST(Cli, ExtrapolateEvents) {
    const auto ev = write_file("events.csv", "n,t,e\n0,0,1\n1,1,1\n2,1.5,1\n3,1.75,1\n");
    const auto r = qlab("extrapolate --events \"" + ev.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["T_star"].get<double>(), 2.0, 1e-12);
    const auto few = write_file("few.csv", "n,t,e\n0,0,1\n1,1,1\n");
    EXPECT_EQ(qlab("extrapolate --events \"" + few.string() + "\"").code, 2);
    fs::remove(ev);
    fs::remove(few);
}

TEST(Cli, GatesAndScan) {
    EXPECT_EQ(qlab("gates-demo --check --quiet").code, 0);
    EXPECT_EQ(qlab("gates-demo --rtol 1").code, 2);
    const auto a = qlab("scan-nondegeneracy --samples 20 --seed 4 --threads 1");
    const auto b = qlab("scan-nondegeneracy --samples 20 --seed 4 --threads 2");
    EXPECT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(qlab("scan-nondegeneracy --grid 2").code, 2);
}

TEST(Cli, SweepWritesOneDirectoryPerValue) {
    const fs::path out = scratch("sweep");
    const auto r = qlab("sweep --config " + config("delay_small.yaml") + " --param model.Gamma=20,30 --out \"" +
                        out.string() + "\" --metric diagnostics.t_c --jobs 2 --quiet");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "model.Gamma_20" / "summary.json"));
    EXPECT_TRUE(fs::exists(out / "model.Gamma_30" / "summary.json"));
    std::ifstream in(out / "sweep.json");
    const auto j = nlohmann::json::parse(in);
    ASSERT_EQ(j["runs"].size(), 2u);
    EXPECT_TRUE(j["runs"][0]["metrics"]["diagnostics.t_c"].is_number());
    EXPECT_EQ(qlab("sweep --config " + config("delay_small.yaml") + " --param model.Gamma").code, 2);
    fs::remove_all(out);
}
