#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <limits>
#include <tuple>

#include "qlab/circuit.hpp"
#include "qlab/error.hpp"
#include "qlab/integrator.hpp"
#include "qlab/models.hpp"
#include "support.hpp"

using namespace qlab;
using qlab::test::rhs;

// ---- dyadic model -------------------------------------------------------

TEST(Dyadic, TermsAndRates) {
    const auto spec = kp_spec({2.0, 0.25, 0, 2, false});
    ASSERT_EQ(spec.size(), 3u);
    EXPECT_EQ(spec.terms().size(), 4u);
    EXPECT_DOUBLE_EQ(spec.dissipation()[2], 2.0);
    EXPECT_TRUE(check_cancellation_structural(spec).pass);
}

TEST(Dyadic, RhsByHand) {
    const auto spec = kp_spec({2.0, 0.25, 0, 2, false});
    const std::vector<double> x = {0.3, -0.7, 1.1};
    const auto d = rhs(spec, x);
    const double l = 2.0;
    EXPECT_NEAR(d[0], -x[0] - x[0] * x[1], 1e-15);
    EXPECT_NEAR(d[1], -std::sqrt(l) * x[1] + x[0] * x[0] - l * x[1] * x[2], 1e-15);
    EXPECT_NEAR(d[2], -l * x[2] + l * x[1] * x[1], 1e-15);
}

TEST(Dyadic, InvalidParams) {
    EXPECT_THROW(kp_spec({1.0, 0.25, 0, 2, false}), InvalidParameter);
    EXPECT_THROW(kp_spec({2.0, -0.1, 0, 2, false}), InvalidParameter);
    EXPECT_THROW(kp_spec({2.0, 0.25, 3, 2, false}), InvalidParameter);
}

TEST(Dyadic, SingleScaleDecaysExponentially) {
    const auto spec = kp_spec({2.0, 0.25, 3, 3, false});
    IntegratorConfig cfg;
    cfg.rtol = 1e-12;
    const auto tr = integrate(spec, {0.0, {1.0}}, 1.0, cfg);
    EXPECT_NEAR(tr.state(tr.size() - 1)[0], std::exp(-std::pow(2.0, 1.5)), 1e-11);
}

TEST(DyadicModified, UnitGReducesToLinearRate) {
    const KPParams p{2.0, 0.25, 0, 3, false};
    const auto spec = kp_modified_spec(p, [](double) { return 1.0; });
    for (int n = 0; n <= 3; ++n) EXPECT_DOUBLE_EQ(spec.dissipation()[static_cast<std::size_t>(n)], std::pow(2.0, n));
    EXPECT_EQ(spec.terms().size(), 12u);
    EXPECT_TRUE(check_cancellation_structural(spec).pass);
}

TEST(DyadicModified, RhsByHand) {
    const auto spec = kp_modified_spec({2.0, 0.25, 0, 1, true}, [](double s) { return s; });
    const std::vector<double> x = {0.4, 0.9};
    const auto d = rhs(spec, x);
    EXPECT_NEAR(d[0], -x[0] * x[1] - x[1] * x[1], 1e-15);
    EXPECT_NEAR(d[1], x[0] * x[0] + x[0] * x[1], 1e-15);
}

TEST(DyadicModified, NonPositiveGRejected) {
    const KPParams p{2.0, 0.25, 0, 3, false};
    EXPECT_THROW(kp_modified_spec(p, [](double) { return 0.0; }), InvalidParameter);
    EXPECT_THROW(kp_modified_spec(p, [](double s) { return 2.0 - s; }), InvalidParameter);
    EXPECT_THROW(kp_modified_spec(p, {}), InvalidParameter);
}

// ---- truncated construction ----------------------------------------------

TEST(Truncated, StageWithoutDissipationHitsThreshold) {
    const auto spec = truncated_stage_spec(0.0, 2.0, 0.25);
    IntegratorConfig cfg;
    cfg.rtol = 1e-12;
    cfg.atol = 1e-15;
    const double level = std::pow(2.0, -0.25);
    const auto r = integrate_until(
        spec, {0.0, {1.0, 0.0}}, [level](double, std::span<const double> x) { return x[1] - level; }, 10.0, cfg);
    EXPECT_NEAR(r.t_event, std::atanh(level), 1e-9);
    EXPECT_NEAR(r.t_event, 1.2243, 1e-4);
}

TEST(Truncated, StageSpecRates) {
    const auto spec = truncated_stage_spec(0.01, 2.0, 0.25);
    EXPECT_DOUBLE_EQ(spec.dissipation()[0], 0.01);
    EXPECT_DOUBLE_EQ(spec.dissipation()[1], std::sqrt(2.0) * 0.01);
}

TEST(Truncated, StageEpsAndTimeScale) {
    TruncatedParams p;
    p.n0 = 14;
    EXPECT_DOUBLE_EQ(p.stage_eps(0), std::pow(2.0, -7.0));
    EXPECT_DOUBLE_EQ(p.stage_eps(2), std::pow(2.0, -7.0 - 0.5));
    EXPECT_DOUBLE_EQ(p.stage_time_scale(4), std::pow(2.0, -14.0 - 4.0 + 1.0));
}

TEST(Truncated, LargeStageEpsRejected) {
    TruncatedParams p;
    p.n0 = 4;  // stage eps 2^-2
    EXPECT_THROW(truncated_blowup_run(p, IntegratorConfig{}), InvalidParameter);
    p.n0 = 14;
    p.delta = 0.6;
    EXPECT_THROW(truncated_blowup_run(p, IntegratorConfig{}), InvalidParameter);
}

TEST(Truncated, CheckpointsFollowGeometricLaw) {
    TruncatedParams p;
    p.k_max = 6;
    IntegratorConfig cfg;
    cfg.rtol = 1e-11;
    cfg.event_tol = 1e-10;
    const auto run = truncated_blowup_run(p, cfg);
    ASSERT_EQ(run.checkpoints.size(), 7u);
    for (int k = 0; k <= 6; ++k) {
        const auto& c = run.checkpoints[static_cast<std::size_t>(k)];
        EXPECT_EQ(c.n, p.n0 + k);
        EXPECT_NEAR(c.e, std::pow(2.0, -0.25 * k), 1e-9);
    }
    for (std::size_t k = 1; k + 1 < run.checkpoints.size(); ++k) {
        const double g0 = run.checkpoints[k].t - run.checkpoints[k - 1].t;
        const double g1 = run.checkpoints[k + 1].t - run.checkpoints[k].t;
        EXPECT_NEAR(g1 / g0, std::pow(2.0, -0.75), 0.02);
    }
    EXPECT_TRUE(std::isfinite(run.T_star_estimate));
    EXPECT_GT(run.T_star_estimate, run.checkpoints.back().t);
}

// ---- delay circuit -------------------------------------------------------

namespace {

struct DelayRates {
    double r, e, s, A, K;
};

DelayRates rates(const DelayParams& p) {
    return {1.0 / (p.eps * p.eps), p.eps, p.eps * p.eps * std::exp(-p.gamma()), p.gamma() / p.eps, p.K};
}

std::array<double, 5> delay_rhs(const DelayRates& k, const std::array<double, 5>& x) {
    const auto [a, b, c, d, at] = x;
    return {-k.r * d * c - k.e * a * b - k.s * a * c, k.e * a * a - k.A * c * c, k.s * a * a + k.A * b * c,
            k.r * a * c - k.K * d * at, k.K * d * d};
}

// Fixed-step RK4 on the five hand-written equations; returns the first time
// c reaches the threshold, linearly interpolated.
double rk4_t_c(const DelayParams& p, double dt, double t_max) {
    const auto k = rates(p);
    const double level = p.eps * p.eps / p.gamma();
    std::array<double, 5> x = {1.0, 0.0, 0.0, 0.0, 0.0};
    auto axpy = [](const std::array<double, 5>& u, double h, const std::array<double, 5>& v) {
        std::array<double, 5> w{};
        for (int i = 0; i < 5; ++i) w[i] = u[i] + h * v[i];
        return w;
    };
    for (double t = 0.0; t < t_max; t += dt) {
        const auto k1 = delay_rhs(k, x);
        const auto k2 = delay_rhs(k, axpy(x, dt / 2, k1));
        const auto k3 = delay_rhs(k, axpy(x, dt / 2, k2));
        const auto k4 = delay_rhs(k, axpy(x, dt, k3));
        std::array<double, 5> nx{};
        for (int i = 0; i < 5; ++i) nx[i] = x[i] + dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        if (nx[2] >= level) return t + dt * (level - x[2]) / (nx[2] - x[2]);
        x = nx;
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace

TEST(Delay, RhsMatchesHandWrittenEquations) {
    const DelayParams p{8.0, 1e-2, 30.0};
    const auto spec = delay_circuit_spec(p);
    std::mt19937_64 rng(3);
    for (int s = 0; s < 20; ++s) {
        const auto x = qlab::test::random_state(5, rng);
        const auto got = rhs(spec, x);
        const auto want = delay_rhs(rates(p), {x[0], x[1], x[2], x[3], x[4]});
        for (int i = 0; i < 5; ++i) EXPECT_NEAR(got[i], want[i], 1e-12 * (1.0 + std::fabs(want[i])));
    }
}

TEST(Delay, ModesAndSeeding) {
    const auto spec = delay_circuit_spec({8.0, 1e-2, 30.0});
    ASSERT_EQ(spec.size(), 5u);
    EXPECT_EQ(spec.modes()[4].label, "at");
    EXPECT_TRUE(spec.amplifier_seeded(2));
    EXPECT_FALSE(spec.amplifier_seeded(0));
    EXPECT_EQ(spec.terms().size(), 10u);
    EXPECT_TRUE(check_cancellation_structural(spec).pass);
}

TEST(Delay, ParamValidation) {
    EXPECT_THROW((DelayParams{0.5, 1e-2, 30.0}.validate()), InvalidParameter);
    EXPECT_THROW((DelayParams{8.0, 0.0, 30.0}.validate()), InvalidParameter);
    EXPECT_THROW((DelayParams{8.0, 1e-2, -1.0}.validate()), InvalidParameter);
    EXPECT_THROW((DelayParams{8.0, 1e-2, 701.0}.validate()), InvalidParameter);
    // K^10 with K = 10 overflows the exponent range.
    EXPECT_THROW((DelayParams{10.0, 1e-2, std::nullopt}.validate()), InvalidParameter);
    EXPECT_DOUBLE_EQ((DelayParams{1.5, 1e-2, std::nullopt}.gamma()), std::pow(1.5, 10.0));
}

TEST(Delay, TransitionTimeMatchesFixedStepOracle) {
    const DelayParams p{8.0, 1e-2, 30.0};
    IntegratorConfig cfg;
    cfg.rtol = 1e-10;
    const auto run = run_delay_circuit(p, cfg, 12.0);
    const double oracle = rk4_t_c(p, 1e-5, 12.0);
    ASSERT_TRUE(std::isfinite(oracle));
    EXPECT_NEAR(run.t_c, oracle, 1e-5);
    EXPECT_LT(run.t_c, run.t_rise_lo);
    EXPECT_LT(run.t_rise_lo, run.t_rise_hi);
    EXPECT_LT(run.pre_a_dev, 0.05);
    EXPECT_LT(run.pre_other, 0.05);
}

// ---- cascade -------------------------------------------------------------

namespace {

using Key = std::tuple<int, int, int, int, int, int>;

std::map<Key, double> coefficient_table(const CascadeParams& p) {
    std::map<Key, double> out;
    for (const auto& r : cascade_coefficients(p)) out[{r.i1, r.i2, r.i3, r.mu1, r.mu2, r.mu3}] += r.alpha;
    return out;
}

double lookup(const std::map<Key, double>& t, const Key& k) {
    const auto it = t.find(k);
    return it == t.end() ? 0.0 : it->second;
}

CascadeParams table_params() {
    CascadeParams p;
    p.Gamma = 30.0;
    return p;
}

}  // namespace

TEST(CascadeCoefficients, SixteenDistinctRows) {
    const auto p = table_params();
    const auto rows = cascade_coefficients(p);
    ASSERT_EQ(rows.size(), 16u);
    EXPECT_EQ(coefficient_table(p).size(), 16u);
    for (const auto& r : rows) EXPECT_NE(r.alpha, 0.0);
}

TEST(CascadeCoefficients, RowValues) {
    const auto p = table_params();
    const auto t = coefficient_table(p);
    const double e = p.eps;
    EXPECT_DOUBLE_EQ(lookup(t, {3, 4, 1, 0, 0, 0}), -0.5 / (e * e));
    EXPECT_DOUBLE_EQ(lookup(t, {1, 1, 2, 0, 0, 0}), e);
    EXPECT_DOUBLE_EQ(lookup(t, {1, 1, 3, 0, 0, 0}), e * e * std::exp(-30.0));
    EXPECT_DOUBLE_EQ(lookup(t, {3, 3, 2, 0, 0, 0}), -30.0 / e);
    EXPECT_DOUBLE_EQ(lookup(t, {2, 3, 3, 0, 0, 0}), 15.0 / e);
    EXPECT_DOUBLE_EQ(lookup(t, {4, 4, 1, 0, 0, 1}), std::pow(1.5, 2.5) * 8.0);
    EXPECT_DOUBLE_EQ(lookup(t, {1, 4, 4, 1, 0, 0}), -0.5 * std::pow(1.5, 2.5) * 8.0);
}

TEST(CascadeCoefficients, SymmetricInFirstTwoSlots) {
    const auto t = coefficient_table(table_params());
    for (const auto& [k, v] : t) {
        const auto [i1, i2, i3, m1, m2, m3] = k;
        EXPECT_DOUBLE_EQ(lookup(t, {i2, i1, i3, m2, m1, m3}), v);
    }
}

TEST(CascadeCoefficients, CyclicSumsVanish) {
    const auto t = coefficient_table(table_params());
    const std::array<std::array<int, 3>, 4> shifts = {{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    int checked = 0;
    for (int a = 1; a <= 4; ++a) {
        for (int b = 1; b <= 4; ++b) {
            for (int c = 1; c <= 4; ++c) {
                const std::array<int, 3> i = {a, b, c};
                for (const auto& mu : shifts) {
                    double sum = 0.0, scale = 0.0;
                    for (const auto& s : perms) {
                        const double v = lookup(t, {i[s[0]], i[s[1]], i[s[2]], mu[s[0]], mu[s[1]], mu[s[2]]});
                        sum += v;
                        scale = std::max(scale, std::fabs(v));
                    }
                    EXPECT_LE(std::fabs(sum), 1e-15 * std::max(1.0, scale)) << a << b << c;
                    ++checked;
                }
            }
        }
    }
    EXPECT_EQ(checked, 256);
}

TEST(CascadeSpec, CrossScaleTermPresent) {
    auto p = table_params();
    p.n_lo = 0;
    p.n_hi = 2;
    const auto spec = cascade_spec(p);
    const double L = p.ratio();
    bool found = false;
    for (const auto& term : spec.terms()) {
        if (term.out.key() == ModeKey{1, 2} && term.in1.key() == ModeKey{4, 1} && term.in2.key() == ModeKey{4, 1}) {
            EXPECT_NEAR(term.coeff, p.K * std::pow(L, 2.5 * 2), 1e-12 * term.coeff);
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(CascadeSpec, BoundaryDropsComeInCancellingSets) {
    auto p = table_params();
    p.n_lo = 2;
    p.n_hi = 4;
    const auto build = cascade_build(p);
    EXPECT_EQ(build.dropped.size(), 3u);
    EXPECT_TRUE(check_cancellation_structural(build.spec).pass);
    EXPECT_EQ(build.spec.size(), 12u);
    EXPECT_TRUE(build.spec.amplifier_seeded(build.spec.index_of(ModeKey{3, 3})));
}

TEST(CascadeSpec, ViscousRates) {
    auto p = table_params();
    p.viscous = true;
    p.n_hi = 2;
    const auto spec = cascade_spec(p);
    EXPECT_DOUBLE_EQ(spec.dissipation()[spec.index_of(ModeKey{2, 2})], std::pow(1.5, 4.0));
    EXPECT_EQ(spec.dissipation()[spec.index_of(ModeKey{2, 0})], 1.0);
}

TEST(CascadeSpec, InitialState) {
    auto p = table_params();
    p.n_hi = 2;
    const auto spec = cascade_spec(p);
    const auto s = cascade_initial_state(spec, 1);
    EXPECT_EQ(s.x[spec.index_of(ModeKey{1, 1})], 1.0);
    EXPECT_EQ(total_energy(s), 0.5);
    EXPECT_THROW(cascade_initial_state(spec, 7), InvalidInput);
}

TEST(CascadeRescale, ShiftedRunMapsOntoBaseRun) {
    IntegratorConfig cfg;
    cfg.rtol = 1e-11;
    CascadeRunOptions opt;
    opt.grow = false;
    opt.t_end_rescaled = 1.01;
    opt.sample_rescaled = 0.05;
    auto p0 = table_params();
    p0.n_lo = 0;
    p0.n_hi = 3;
    p0.n0 = 0;
    auto p2 = p0;
    p2.n_lo = 2;
    p2.n_hi = 5;
    p2.n0 = 2;
    const auto base = run_cascade(p0, cfg, opt).trajectory;
    const auto shifted = rescale_run(run_cascade(p2, cfg, opt).trajectory, p2, 2, 1.0, 0.0);
    ASSERT_EQ(base.size(), shifted.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_NEAR(shifted.time(i), base.time(i), 1e-12);
        for (std::size_t j = 0; j < base.mode_count(); ++j) EXPECT_NEAR(shifted.state(i)[j], base.state(i)[j], 1e-8);
    }
    EXPECT_EQ(shifted.modes()[0].key(), (ModeKey{1, 0}));
}

TEST(CascadeRescale, RoundTrip) {
    auto p = table_params();
    p.n_hi = 2;
    const auto spec = cascade_spec(p);
    IntegratorConfig cfg;
    cfg.sample_interval = 0.1;
    const auto tr = integrate(spec, cascade_initial_state(spec, 0), 1.0, cfg);
    const auto back = unrescale_run(rescale_run(tr, p, 3, 0.7, 0.2), p, 3, 0.7, 0.2);
    ASSERT_EQ(back.size(), tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        EXPECT_NEAR(back.time(i), tr.time(i), 1e-13);
        for (std::size_t j = 0; j < tr.mode_count(); ++j) EXPECT_NEAR(back.state(i)[j], tr.state(i)[j], 1e-15);
    }
    EXPECT_EQ(back.modes(), tr.modes());
    EXPECT_THROW(rescale_run(tr, p, 1, 0.0, 0.0), InvalidInput);
}

TEST(CascadeParams, Validation) {
    auto p = table_params();
    p.eps0 = 1.0;
    EXPECT_THROW(p.validate(), InvalidParameter);
    p = table_params();
    p.Gamma.reset();
    p.K = 1.5;
    EXPECT_NO_THROW(p.validate());
    p.K = 8.0;  // 8^10 is far past the exponent range
    EXPECT_THROW(p.validate(), InvalidParameter);
}

// ---- bundled systems -----------------------------------------------------

TEST(Bundled, NamesAndLookup) {
    std::vector<std::string> names;
    for (const auto& b : bundled_systems()) names.push_back(b.name);
    EXPECT_EQ(names, (std::vector<std::string>{"pump", "amplifier", "rotor", "kp", "kp-modified", "kp-viscous", "delay",
                                               "table1"}));
    EXPECT_THROW(bundled_system("nope"), InvalidInput);
    for (const auto& b : bundled_systems()) {
        EXPECT_EQ(b.initial.x.size(), b.spec.size()) << b.name;
        EXPECT_EQ(b.inviscid, !b.spec.has_dissipation()) << b.name;
    }
}
