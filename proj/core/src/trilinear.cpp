#include "qlab/trilinear.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <random>
#include <thread>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "qlab/error.hpp"

namespace qlab {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

double lambda_form(const Vec3& xi1, const Vec3& xi2, const Vec3& xi3, const Vec3& X1, const Vec3& X2,
                   const Vec3& X3) {
    const std::array<const Vec3*, 3> xi = {&xi1, &xi2, &xi3};
    const std::array<const Vec3*, 3> X = {&X1, &X2, &X3};
    for (int j = 0; j < 3; ++j) {
        if (!finite(*xi[j]) || !finite(*X[j])) throw InvalidInput(fmt::format("lambda_form: non-finite input {}", j + 1));
        const double scale = std::max(1.0, xi[j]->norm() * X[j]->norm());
        if (std::fabs(X[j]->dot(*xi[j])) > 1e-10 * scale) {
            throw InvalidInput(fmt::format("lambda_form: X{0} is not orthogonal to xi{0}", j + 1));
        }
    }
    return X1.dot(xi2) * X2.dot(X3) + X2.dot(xi1) * X1.dot(X3);
}

Vec3 axis_rotation(const Vec3& xi, double theta, const Vec3& X) {
    const double len = xi.norm();
    if (!(len > 0.0) || !std::isfinite(len)) throw InvalidInput("axis_rotation: axis must be nonzero and finite");
    const Vec3 u = xi / len;
    const Vec3 par = X.dot(u) * u;
    return par + std::cos(theta) * (X - par) + std::sin(theta) * u.cross(X);
}

FreqTriple::FreqTriple(const Vec3& eta1, const Vec3& eta2, const Vec3& eta3) : eta_{eta1, eta2, eta3} {
    for (const auto& e : eta_) {
        if (!finite(e)) throw InvalidInput("FreqTriple: non-finite frequency");
    }
    const double scale = std::max({1.0, eta1.norm(), eta2.norm(), eta3.norm()});
    if ((eta1 + eta2 + eta3).norm() > 1e-12 * scale) {
        throw InvalidInput("FreqTriple: eta1 + eta2 + eta3 must vanish");
    }
}

FreqTriple FreqTriple::base() { return {Vec3(0, 1, 0), Vec3(-1, -1, 0), Vec3(1, 0, 0)}; }

Vec3 FreqTriple::normal() const {
    const Vec3 c = eta_[0].cross(eta_[1]);
    const double len = c.norm();
    if (!(len > 1e-12 * eta_[0].norm() * eta_[1].norm()) || len == 0.0) {
        throw InvalidInput("FreqTriple: eta1 and eta2 are collinear");
    }
    Vec3 n = c / len;
    if (n.z() < 0.0) n = -n;
    if (n.z() < 0.5) throw InvalidInput(fmt::format("FreqTriple: normal z-component {:.3f} below 0.5", n.z()));
    return n;
}

std::array<SignPattern, 8> all_sign_patterns() {
    std::array<SignPattern, 8> out;
    std::size_t k = 0;
    for (int a : {1, -1}) {
        for (int b : {1, -1}) {
            for (int c : {1, -1}) out[k++] = {a, b, c};
        }
    }
    return out;
}

double theta_function(const FreqTriple& eta, double g1, double g2, double g3) {
    const Vec3 n = eta.normal();
    return lambda_form(eta[0], eta[1], eta[2], axis_rotation(eta[0], g1, n), axis_rotation(eta[1], g2, n),
                       axis_rotation(eta[2], g3, n));
}

std::complex<double> FourierCoefficients::at(const SignPattern& s) const {
    const auto pats = all_sign_patterns();
    for (std::size_t k = 0; k < pats.size(); ++k) {
        if (pats[k] == s) return c[k];
    }
    throw InvalidInput("invalid sign pattern");
}

double FourierCoefficients::min_abs() const {
    double m = std::abs(c[0]);
    for (const auto& v : c) m = std::min(m, std::abs(v));
    return m;
}

std::array<double, 8> FourierCoefficients::sorted_magnitudes() const {
    std::array<double, 8> out;
    for (std::size_t k = 0; k < 8; ++k) out[k] = std::abs(c[k]);
    std::sort(out.begin(), out.end());
    return out;
}

FourierCoefficients fourier_coefficients(const FreqTriple& eta, int grid) {
    if (grid < 4) throw InvalidInput(fmt::format("fourier_coefficients: grid must be >= 4, got {}", grid));
    using cd = std::complex<double>;
    const auto N = static_cast<std::size_t>(grid);
    const Vec3 n = eta.normal();
    // Theta is evaluated directly from its definition; the orthogonality
    // checks of lambda_form hold by construction of n.
    std::array<std::vector<Vec3>, 3> V;
    for (int j = 0; j < 3; ++j) {
        V[j].resize(N);
        for (std::size_t k = 0; k < N; ++k) {
            const double g = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N);
            V[j][k] = axis_rotation(eta[j], g, n);
        }
    }
    const Vec3& xi1 = eta[0];
    const Vec3& xi2 = eta[1];
    std::vector<cd> F(N * N * N);
    auto idx = [N](std::size_t a, std::size_t b, std::size_t c) { return (a * N + b) * N + c; };
    for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t b = 0; b < N; ++b) {
            for (std::size_t c = 0; c < N; ++c) {
                const Vec3& X1 = V[0][a];
                const Vec3& X2 = V[1][b];
                const Vec3& X3 = V[2][c];
                F[idx(a, b, c)] = X1.dot(xi2) * X2.dot(X3) + X2.dot(xi1) * X1.dot(X3);
            }
        }
    }
    // Separable DFT, one axis at a time: F_hat(k) = N^-3 sum F(g) e^{-i k g}.
    std::vector<cd> w(N);
    for (std::size_t k = 0; k < N; ++k) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N);
        w[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<cd> line(N), res(N);
    for (int axis = 0; axis < 3; ++axis) {
        for (std::size_t p = 0; p < N; ++p) {
            for (std::size_t q = 0; q < N; ++q) {
                auto at = [&](std::size_t r) -> cd& {
                    if (axis == 0) return F[idx(r, p, q)];
                    if (axis == 1) return F[idx(p, r, q)];
                    return F[idx(p, q, r)];
                };
                for (std::size_t r = 0; r < N; ++r) line[r] = at(r);
                for (std::size_t k = 0; k < N; ++k) {
                    cd s = 0.0;
                    for (std::size_t r = 0; r < N; ++r) s += line[r] * w[(k * r) % N];
                    res[k] = s / static_cast<double>(N);
                }
                for (std::size_t r = 0; r < N; ++r) at(r) = res[r];
            }
        }
    }
    FourierCoefficients out;
    out.grid = grid;
    const auto pats = all_sign_patterns();
    auto wrap = [N](int s) { return static_cast<std::size_t>((s + static_cast<int>(N)) % static_cast<int>(N)); };
    std::vector<char> is_pattern(N * N * N, 0);
    for (std::size_t k = 0; k < pats.size(); ++k) {
        const std::size_t i = idx(wrap(pats[k].s1), wrap(pats[k].s2), wrap(pats[k].s3));
        out.c[k] = F[i];
        is_pattern[i] = 1;
    }
    for (std::size_t i = 0; i < F.size(); ++i) {
        if (!is_pattern[i]) out.max_off_pattern = std::max(out.max_off_pattern, std::abs(F[i]));
    }
    return out;
}

ScanResult nondegeneracy_scan(const FreqTriple& center, double radius, int samples, std::uint64_t seed, int grid,
                              unsigned threads) {
    if (samples < 1) throw InvalidInput("nondegeneracy_scan: samples must be >= 1");
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw InvalidInput("nondegeneracy_scan: radius must be >= 0");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto ball = [&]() {
        Vec3 v;
        do {
            const double a = normal(rng);
            const double b = normal(rng);
            const double c = normal(rng);
            v = Vec3(a, b, c);
        } while (v.norm() == 0.0);
        return Vec3(v.normalized() * radius * std::cbrt(unit(rng)));
    };
    std::vector<FreqTriple> triples;
    triples.reserve(static_cast<std::size_t>(samples));
    triples.push_back(center);
    for (int s = 1; s < samples; ++s) {
        const Vec3 e1 = center[0] + ball();
        const Vec3 e2 = center[1] + ball();
        triples.emplace_back(e1, e2, Vec3(-e1 - e2));
    }

    std::vector<double> mins(triples.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(triples.size()));
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < triples.size(); i += threads) {
                    mins[i] = fourier_coefficients(triples[i], grid).min_abs();
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    const auto it = std::min_element(mins.begin(), mins.end());
    ScanResult out;
    out.min_abs_c = *it;
    out.argmin = triples[static_cast<std::size_t>(it - mins.begin())];
    out.samples = samples;
    return out;
}

}  // namespace qlab
