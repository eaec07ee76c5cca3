#pragma once

// Euler trilinear symbol, axis rotations, the angular function Theta and its
// eight Fourier coefficients near the base frequency triple.

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace qlab {

using Vec3 = Eigen::Vector3d;

// (X1 . xi2)(X2 . X3) + (X2 . xi1)(X1 . X3). Throws InvalidInput when some
// |Xj . xij| exceeds 1e-10 (scaled by |Xj||xij| when those exceed 1).
double lambda_form(const Vec3& xi1, const Vec3& xi2, const Vec3& xi3, const Vec3& X1, const Vec3& X2,
                   const Vec3& X3);

// Right-hand rotation of X by theta about xi. Throws InvalidInput for xi = 0.
Vec3 axis_rotation(const Vec3& xi, double theta, const Vec3& X);

class FreqTriple {
  public:
    // Throws InvalidInput unless eta1 + eta2 + eta3 = 0 within 1e-12
    // (relative to the largest |eta_j| when above 1) and all entries finite.
    FreqTriple(const Vec3& eta1, const Vec3& eta2, const Vec3& eta3);

    // (0,1,0), (-1,-1,0), (1,0,0)
    static FreqTriple base();

    const Vec3& operator[](int j) const { return eta_[static_cast<std::size_t>(j)]; }
    const std::array<Vec3, 3>& etas() const noexcept { return eta_; }

    // Unit normal of the plane of the triple, oriented to +z. Throws
    // InvalidInput when eta1 and eta2 are collinear or |n_z| < 0.5.
    Vec3 normal() const;

  private:
    std::array<Vec3, 3> eta_;
};

struct SignPattern {
    int s1 = 1, s2 = 1, s3 = 1;

    friend bool operator==(const SignPattern&, const SignPattern&) = default;
    friend auto operator<=>(const SignPattern&, const SignPattern&) = default;
};

// All eight patterns, (+,+,+) first, lexicographic with + before -.
std::array<SignPattern, 8> all_sign_patterns();

// Lambda_{eta}(R_{eta1}^{g1} n, R_{eta2}^{g2} n, R_{eta3}^{g3} n).
double theta_function(const FreqTriple& eta, double gamma1, double gamma2, double gamma3);

struct FourierCoefficients {
    std::array<std::complex<double>, 8> c;  // ordered as all_sign_patterns()
    double max_off_pattern = 0.0;           // largest |coefficient| of any other mode
    int grid = 0;

    std::complex<double> at(const SignPattern& s) const;
    double min_abs() const;
    std::array<double, 8> sorted_magnitudes() const;
};

// Tensor trapezoid rule on a grid^3 torus grid; throws InvalidInput for
// grid < 4.
FourierCoefficients fourier_coefficients(const FreqTriple& eta, int grid = 8);

struct ScanResult {
    double min_abs_c = 0.0;
    FreqTriple argmin = FreqTriple::base();
    int samples = 0;
};

// Perturbs eta1 and eta2 uniformly in balls of the given radius (eta3 closes
// the triangle). Sample 0 is the center itself. Deterministic for a seed
// regardless of the thread count (0 picks hardware concurrency).
ScanResult nondegeneracy_scan(const FreqTriple& center, double radius, int samples, std::uint64_t seed,
                              int grid = 8, unsigned threads = 0);

}  // namespace qlab
