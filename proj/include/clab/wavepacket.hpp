#pragma once

#include <complex>
#include <limits>

namespace clab {

// Free Gaussian packet psi_0(x) = N exp(-x^2 / 4a^2), released at t = 0.
struct PacketParams {
    double a = 1.0;  // |psi_0|^2 has standard deviation a
    double m = 1.0;
    double hbar = 1.0;
    double t = 0.0;

    void validate() const;
};

// Detection in [x_f - epsilon, x_f + epsilon]. An infinite epsilon selects the whole line.
struct PostSelection {
    double x_f = 0.0;
    double epsilon = 0.0;

    static PostSelection whole_line() { return {0.0, std::numeric_limits<double>::infinity()}; }
};

namespace si {
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double electron_mass = 9.1093837015e-31;  // kg
}  // namespace si

// N_t exp(-x^2 / (4 (a^2 + i t hbar / 2m))), unit continuum norm.
std::complex<double> evolved_packet(const PacketParams& p, double x);

// [a^2 + t^2 hbar^2 / (4 m^2 a^2)]^(1/2)
double packet_width(const PacketParams& p);

// m x_f / (t - 2 i m a^2 / hbar): the epsilon -> 0 limit of the truncated-segment momentum.
std::complex<double> postselected_momentum_closed(const PacketParams& p, const PostSelection& sel);

// The closed form is an epsilon << width approximation; this checks epsilon <= width / 10.
bool closed_form_regime(const PacketParams& p, const PostSelection& sel);

// Ratio of integrals over the detection segment:
//   int psi* (-i hbar d psi/dx) dx / int |psi|^2 dx,
// by adaptive Gauss-Kronrod with the derivative taken by a five-point stencil.
std::complex<double> postselected_momentum_quadrature(const PacketParams& p, const PostSelection& sel, double rel_tol = 1e-10);

// Stationary point of the completed-square momentum integrand: solves p'(x_f) = 0.
std::complex<double> dominant_momentum(const PacketParams& p, double x_f);

struct Polar {
    double r = 0.0;
    double theta = 0.0;
};

Polar polar_decomposition(std::complex<double> value);

// m x_f / (t sqrt(1 + 4 m^2 a^4 / (t^2 hbar^2))), the modulus of the closed form for t > 0.
double polar_radius(const PacketParams& p, double x_f);

}  // namespace clab
