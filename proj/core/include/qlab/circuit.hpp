#pragma once

// Finite quadratic ODE systems  dX/dt = -D X + G(X, X)  and their energy
// cancellation structure.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qlab {

// (component, scale) pair identifying a mode; unique within a circuit.
using ModeKey = std::pair<int, int>;

struct ModeId {
    std::string label;
    int component = 1;
    int scale = 0;

    ModeKey key() const { return {component, scale}; }
    friend bool operator==(const ModeId& a, const ModeId& b) { return a.key() == b.key(); }
};

// Contributes coeff * X[in1] * X[in2] to dX[out]/dt.
struct InteractionTerm {
    ModeId out;
    ModeId in1;
    ModeId in2;
    double coeff = 0.0;
};

struct StateVector {
    double t = 0.0;
    std::vector<double> x;
};

// Interaction term resolved to positions in the mode list.
struct CompiledTerm {
    std::uint32_t out;
    std::uint32_t in1;
    std::uint32_t in2;
    double coeff;
};

// Immutable description of a quadratic circuit. Terms are stored exactly as
// given; symmetric splittings are never merged.
class CircuitSpec {
  public:
    CircuitSpec() = default;
    CircuitSpec(std::vector<ModeId> modes, std::vector<InteractionTerm> terms,
                const std::map<ModeKey, double>& dissipation = {},
                const std::set<ModeKey>& amplifier_seeded = {});

    const std::vector<ModeId>& modes() const noexcept { return modes_; }
    const std::vector<InteractionTerm>& terms() const noexcept { return terms_; }
    const std::vector<CompiledTerm>& compiled() const noexcept { return compiled_; }
    const std::vector<double>& dissipation() const noexcept { return nu_; }
    std::size_t size() const noexcept { return modes_.size(); }

    bool has_mode(const ModeKey& k) const { return index_.count(k) != 0; }
    std::size_t index_of(const ModeKey& k) const;
    std::size_t index_of(const ModeId& m) const { return index_of(m.key()); }

    // Modes whose amplitude starts near the floor of double range and is
    // then exponentially amplified; the integrator gives them a tiny atol.
    bool amplifier_seeded(std::size_t i) const { return seeded_[i] != 0; }
    std::set<ModeKey> amplifier_seeded_keys() const;

    bool has_dissipation() const noexcept;
    double max_abs_coeff() const noexcept;

    // Same modes and terms with every dissipation rate set to zero.
    CircuitSpec inviscid() const;

    // Set only by check_cancellation_structural passing (see verified()).
    bool cancellation_verified() const noexcept { return verified_; }

    // Copy carrying the verified flag; throws InvalidInput if the structural
    // check fails.
    CircuitSpec verified() const;

    // dx = -nu .* x + G(x, x). No validation; the hot path for integrators.
    void evaluate(std::span<const double> x, std::span<double> dx) const;

    // G(x, x) only.
    void evaluate_quadratic(std::span<const double> x, std::span<double> dx) const;

  private:
    std::vector<ModeId> modes_;
    std::vector<InteractionTerm> terms_;
    std::vector<CompiledTerm> compiled_;
    std::vector<double> nu_;
    std::vector<char> seeded_;
    std::map<ModeKey, std::size_t> index_;
    bool verified_ = false;
};

// Validating RHS evaluation. Throws InvalidInput for misaligned or
// non-finite state.
StateVector assemble_rhs(const CircuitSpec& spec, const StateVector& state);

double total_energy(std::span<const double> x);
inline double total_energy(const StateVector& s) { return total_energy(s.x); }

struct CancellationViolation {
    std::array<ModeId, 3> modes;
    double coeff_sum = 0.0;
    double relative = 0.0;
};

struct CancellationReport {
    bool pass = true;
    double max_residual = 0.0;  // largest |sum| / max|coeff| over triples
    std::vector<CancellationViolation> violating_triples;
};

inline constexpr double kCancellationTolerance = 1e-12;

// Sums coefficients of all stored terms over each multiset {out, in1, in2}.
CancellationReport check_cancellation_structural(const CircuitSpec& spec,
                                                 double tol = kCancellationTolerance);

// max over pseudo-random unit states of |X . G(X, X)|.
double check_cancellation_numeric(const CircuitSpec& spec, int n_samples, std::uint64_t seed);

// |X . G(X, X)| for one state, accumulated term by term with compensation.
double cancellation_residual(const CircuitSpec& spec, std::span<const double> x);

}  // namespace qlab
