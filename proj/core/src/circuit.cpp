#include "qlab/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "qlab/error.hpp"

namespace qlab {

namespace {

std::string describe(const ModeId& m) {
    return m.label.empty() ? fmt::format("({},{})", m.component, m.scale) : m.label;
}

// Neumaier summation in extended precision.
class CompensatedSum {
  public:
    void add(long double v) {
        const long double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v)) {
            c_ += (sum_ - t) + v;
        } else {
            c_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    long double value() const { return sum_ + c_; }

  private:
    long double sum_ = 0.0L;
    long double c_ = 0.0L;
};

}  // namespace

CircuitSpec::CircuitSpec(std::vector<ModeId> modes, std::vector<InteractionTerm> terms,
                         const std::map<ModeKey, double>& dissipation,
                         const std::set<ModeKey>& amplifier_seeded)
    : modes_(std::move(modes)), terms_(std::move(terms)) {
    for (std::size_t i = 0; i < modes_.size(); ++i) {
        const auto [it, inserted] = index_.emplace(modes_[i].key(), i);
        if (!inserted) {
            throw InvalidInput(fmt::format("duplicate mode (component {}, scale {})",
                                           modes_[i].component, modes_[i].scale));
        }
        if (modes_[i].component < 1) {
            throw InvalidInput(fmt::format("mode {} has component index < 1", describe(modes_[i])));
        }
    }
    auto lookup = [&](const ModeId& m) -> std::uint32_t {
        const auto it = index_.find(m.key());
        if (it == index_.end()) {
            throw InvalidInput(fmt::format("interaction references undeclared mode {}", describe(m)));
        }
        return static_cast<std::uint32_t>(it->second);
    };
    compiled_.reserve(terms_.size());
    for (const auto& term : terms_) {
        if (!std::isfinite(term.coeff) || term.coeff == 0.0) {
            throw InvalidInput(fmt::format("interaction into {} has non-finite or zero coefficient",
                                           describe(term.out)));
        }
        compiled_.push_back({lookup(term.out), lookup(term.in1), lookup(term.in2), term.coeff});
    }
    nu_.assign(modes_.size(), 0.0);
    for (const auto& [key, rate] : dissipation) {
        const auto it = index_.find(key);
        if (it == index_.end()) {
            throw InvalidInput(fmt::format("dissipation given for undeclared mode ({},{})", key.first,
                                           key.second));
        }
        if (!(rate >= 0.0) || !std::isfinite(rate)) {
            throw InvalidInput(fmt::format("dissipation rate for ({},{}) must be finite and >= 0",
                                           key.first, key.second));
        }
        nu_[it->second] = rate;
    }
    seeded_.assign(modes_.size(), 0);
    for (const auto& key : amplifier_seeded) {
        seeded_[index_of(key)] = 1;
    }
}

std::size_t CircuitSpec::index_of(const ModeKey& k) const {
    const auto it = index_.find(k);
    if (it == index_.end()) {
        throw InvalidInput(fmt::format("no mode (component {}, scale {})", k.first, k.second));
    }
    return it->second;
}

std::set<ModeKey> CircuitSpec::amplifier_seeded_keys() const {
    std::set<ModeKey> out;
    for (std::size_t i = 0; i < modes_.size(); ++i) {
        if (seeded_[i]) out.insert(modes_[i].key());
    }
    return out;
}

bool CircuitSpec::has_dissipation() const noexcept {
    return std::any_of(nu_.begin(), nu_.end(), [](double v) { return v != 0.0; });
}

double CircuitSpec::max_abs_coeff() const noexcept {
    double m = 0.0;
    for (const auto& t : compiled_) m = std::max(m, std::fabs(t.coeff));
    return m;
}

CircuitSpec CircuitSpec::inviscid() const {
    CircuitSpec out = *this;
    std::fill(out.nu_.begin(), out.nu_.end(), 0.0);
    return out;
}

CircuitSpec CircuitSpec::verified() const {
    const auto report = check_cancellation_structural(*this);
    if (!report.pass) {
        throw InvalidInput(fmt::format("cancellation check failed: {} violating triples, max residual {:.3e}",
                                       report.violating_triples.size(), report.max_residual));
    }
    CircuitSpec out = *this;
    out.verified_ = true;
    return out;
}

void CircuitSpec::evaluate_quadratic(std::span<const double> x, std::span<double> dx) const {
    std::fill(dx.begin(), dx.end(), 0.0);
    for (const auto& t : compiled_) {
        dx[t.out] += t.coeff * x[t.in1] * x[t.in2];
    }
}

void CircuitSpec::evaluate(std::span<const double> x, std::span<double> dx) const {
    for (std::size_t i = 0; i < nu_.size(); ++i) dx[i] = -nu_[i] * x[i];
    for (const auto& t : compiled_) {
        dx[t.out] += t.coeff * x[t.in1] * x[t.in2];
    }
}

StateVector assemble_rhs(const CircuitSpec& spec, const StateVector& state) {
    if (state.x.size() != spec.size()) {
        throw InvalidInput(fmt::format("state has {} amplitudes, circuit has {} modes", state.x.size(),
                                       spec.size()));
    }
    for (std::size_t i = 0; i < state.x.size(); ++i) {
        if (!std::isfinite(state.x[i])) {
            throw InvalidInput(fmt::format("non-finite amplitude for mode {}", describe(spec.modes()[i])));
        }
    }
    StateVector out{state.t, std::vector<double>(spec.size())};
    spec.evaluate(state.x, out.x);
    return out;
}

double total_energy(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return 0.5 * s;
}

CancellationReport check_cancellation_structural(const CircuitSpec& spec, double tol) {
    struct Bucket {
        CompensatedSum sum;
        double max_abs = 0.0;
    };
    std::map<std::array<std::uint32_t, 3>, Bucket> buckets;
    for (const auto& t : spec.compiled()) {
        std::array<std::uint32_t, 3> key{t.out, t.in1, t.in2};
        std::sort(key.begin(), key.end());
        auto& b = buckets[key];
        b.sum.add(t.coeff);
        b.max_abs = std::max(b.max_abs, std::fabs(t.coeff));
    }
    CancellationReport report;
    for (const auto& [key, b] : buckets) {
        const double sum = static_cast<double>(b.sum.value());
        const double rel = std::fabs(sum) / b.max_abs;
        report.max_residual = std::max(report.max_residual, rel);
        if (rel > tol) {
            report.pass = false;
            const auto& m = spec.modes();
            report.violating_triples.push_back({{m[key[0]], m[key[1]], m[key[2]]}, sum, rel});
        }
    }
    return report;
}

double cancellation_residual(const CircuitSpec& spec, std::span<const double> x) {
    CompensatedSum acc;
    for (const auto& t : spec.compiled()) {
        acc.add(static_cast<long double>(t.coeff) * x[t.out] * x[t.in1] * x[t.in2]);
    }
    return static_cast<double>(std::fabs(acc.value()));
}

double check_cancellation_numeric(const CircuitSpec& spec, int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidInput("n_samples must be >= 1");
    if (spec.size() == 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(spec.size());
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& v : x) {
                v = normal(rng);
                norm2 += v * v;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& v : x) v *= inv;
        worst = std::max(worst, cancellation_residual(spec, x));
    }
    return worst;
}

}  // namespace qlab
