#include "clab/wavepacket.hpp"

#include <cmath>
#include <numbers>

#include "clab/errors.hpp"
#include "clab/quadrature.hpp"

namespace clab {

namespace {

using cplx = std::complex<double>;

// a^2 + i t hbar / 2m
cplx spread(const PacketParams& p) { return {p.a * p.a, p.t * p.hbar / (2.0 * p.m)}; }

}  // namespace

void PacketParams::validate() const {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("packet parameter a must be positive");
    if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("packet mass must be positive");
    if (!(hbar > 0.0) || !std::isfinite(hbar)) throw ValidationError("hbar must be positive");
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("packet time must be nonnegative");
}

cplx evolved_packet(const PacketParams& p, double x) {
    p.validate();
    const cplx s = spread(p);
    const cplx norm = std::pow(2.0 * std::numbers::pi, -0.25) * std::sqrt(p.a) / std::sqrt(s);
    return norm * std::exp(-x * x / (4.0 * s));
}

double packet_width(const PacketParams& p) {
    p.validate();
    const double spread_term = p.t * p.hbar / (2.0 * p.m * p.a);
    return std::sqrt(p.a * p.a + spread_term * spread_term);
}

cplx postselected_momentum_closed(const PacketParams& p, const PostSelection& sel) {
    p.validate();
    return p.m * sel.x_f / cplx(p.t, -2.0 * p.m * p.a * p.a / p.hbar);
}

bool closed_form_regime(const PacketParams& p, const PostSelection& sel) { return sel.epsilon <= packet_width(p) / 10.0; }

cplx postselected_momentum_quadrature(const PacketParams& p, const PostSelection& sel, double rel_tol) {
    p.validate();
    if (!(sel.epsilon > 0.0)) throw ValidationError("detection half-width epsilon must be positive");
    const double width = packet_width(p);
    double lo = sel.x_f - sel.epsilon;
    double hi = sel.x_f + sel.epsilon;
    if (!std::isfinite(sel.epsilon)) {
        lo = -40.0 * width;
        hi = 40.0 * width;
    }
    const double h = 1e-3 * width;
    auto psi = [&](double x) { return evolved_packet(p, x); };
    auto momentum_density = [&](double x) {
        const cplx d = (-psi(x + 2 * h) + 8.0 * psi(x + h) - 8.0 * psi(x - h) + psi(x - 2 * h)) / (12.0 * h);
        return std::conj(psi(x)) * cplx(0.0, -p.hbar) * d;
    };
    auto density = [&](double x) { return cplx(std::norm(psi(x)), 0.0); };

    const cplx den = integrate_gk15(density, lo, hi, rel_tol).value;
    if (!(den.real() > 0.0)) throw NumericalError("detection segment carries no probability");
    // Momentum scale hbar/width sets the absolute floor, so a vanishing numerator still converges.
    const double floor = rel_tol * den.real() * p.hbar / width;
    const cplx num = integrate_gk15(momentum_density, lo, hi, rel_tol, floor).value;
    return num / den.real();
}

cplx dominant_momentum(const PacketParams& p, double x_f) {
    p.validate();
    // p' = A p - (i x / 2 hbar) B with A = sqrt((2 m a^2 + i t hbar) / (2 m hbar^2)),
    // B = sqrt(2 m hbar^2 / (2 m a^2 + i t hbar)). Setting p'(x_f) = 0 gives p = i x_f B / (2 hbar A).
    const cplx q(2.0 * p.m * p.a * p.a, p.t * p.hbar);
    const double k = 2.0 * p.m * p.hbar * p.hbar;
    const cplx A = std::sqrt(q / k);
    const cplx B = std::sqrt(k / q);
    return cplx(0.0, x_f / (2.0 * p.hbar)) * B / A;
}

Polar polar_decomposition(cplx value) { return {std::abs(value), std::arg(value)}; }

double polar_radius(const PacketParams& p, double x_f) {
    p.validate();
    if (!(p.t > 0.0)) throw ValidationError("polar radius formula needs t > 0");
    const double ratio = 2.0 * p.m * p.a * p.a / (p.t * p.hbar);
    return p.m * x_f / (p.t * std::sqrt(1.0 + ratio * ratio));
}

}  // namespace clab
