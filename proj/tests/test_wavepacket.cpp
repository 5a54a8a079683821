#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "support.hpp"

#include "clab/errors.hpp"
#include "clab/operators.hpp"
#include "clab/quadrature.hpp"
#include "clab/wavepacket.hpp"

using namespace clab;
using namespace clab::testing;

namespace {

double probability(const PacketParams& p) {
    const double w = packet_width(p);
    return integrate_gk15([&](double x) { return cplx(std::norm(evolved_packet(p, x)), 0.0); }, -30 * w, 30 * w, 1e-12).value.real();
}

double second_moment(const PacketParams& p) {
    const double w = packet_width(p);
    return integrate_gk15([&](double x) { return cplx(x * x * std::norm(evolved_packet(p, x)), 0.0); }, -30 * w, 30 * w, 1e-12)
        .value.real();
}

double relative(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("initial packet peak") {
    const PacketParams p{1.3, 1.0, 1.0, 0.0};
    const cplx v = evolved_packet(p, 0.0);
    CHECK(v.imag() == 0.0);
    CHECK(v.real() == doctest::Approx(std::pow(2 * std::numbers::pi * 1.3 * 1.3, -0.25)).epsilon(1e-14));
    for (double x : {0.1, 0.7, 2.0}) CHECK(std::abs(evolved_packet(p, x)) < v.real());
}

TEST_CASE("evolved packet stays normalized and even") {
    CHECK(std::abs(probability({1.0, 1.0, 1.0, 2.0}) - 1.0) < 1e-8);
    for_all(20, 10, [](Gen& g) {
        const PacketParams p{g.uniform(0.2, 3), g.uniform(0.1, 10), g.uniform(0.5, 2), g.uniform(0, 5)};
        CHECK(std::abs(probability(p) - 1.0) < 1e-8);
        const double x = g.uniform(-4, 4);
        CHECK(std::abs(evolved_packet(p, x) - evolved_packet(p, -x)) < 1e-15);
    });
}

TEST_CASE("packet width") {
    CHECK(packet_width({1.7, 1.0, 1.0, 0.0}) == 1.7);
    CHECK(packet_width({1.0, 1.0, 1.0, 2.0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    for_all(10, 20, [](Gen& g) {
        const PacketParams p{g.uniform(0.3, 2), g.uniform(0.5, 5), 1.0, g.uniform(0, 4)};
        CHECK(std::sqrt(second_moment(p)) == doctest::Approx(packet_width(p)).epsilon(1e-9));
    });
}

TEST_CASE("electron spreads to about a meter in a microsecond") {
    const double w = packet_width({1e-10, si::electron_mass, si::hbar, 1e-6});
    CHECK(w >= 0.3);
    CHECK(w <= 1.2);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(packet_width({0.0, 1, 1, 0}), ValidationError);
    CHECK_THROWS_AS(packet_width({1, -1, 1, 0}), ValidationError);
    CHECK_THROWS_AS(packet_width({1, 1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(packet_width({1, 1, 1, -1}), ValidationError);
    CHECK_THROWS_AS(postselected_momentum_quadrature({1, 1, 1, 1}, {1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(polar_radius({1, 1, 1, 0}, 1.0), ValidationError);
}

TEST_CASE("closed-form post-selected momentum") {
    const PacketParams p{1.0, 1.0, 1.0, 1.0};
    CHECK(postselected_momentum_closed(p, {0.0, 0.01}) == cplx(0.0));
    CHECK(std::abs(postselected_momentum_closed(p, {1.0, 0.01}) - cplx(0.2, 0.4)) < 1e-15);
    // long times approach the classical m x_f / t
    const PacketParams late{1.0, 2.0, 1.0, 1e9};
    const cplx v = postselected_momentum_closed(late, {3.0, 0.01});
    CHECK(relative(v, cplx(2.0 * 3.0 / 1e9, 0.0)) < 1e-8);
    CHECK(closed_form_regime(p, {1.0, 0.01}));
    CHECK_FALSE(closed_form_regime(p, {1.0, 1.0}));
}

TEST_CASE("whole-line momentum vanishes") {
    for (double t : {0.0, 0.5, 2.0, 10.0}) {
        const cplx v = postselected_momentum_quadrature({1.0, 1.0, 1.0, t}, PostSelection::whole_line());
        CHECK(std::abs(v) < 1e-10);
    }
}

TEST_CASE("quadrature oracle against the closed form") {
    const PacketParams p{1.0, 1.0, 1.0, 1.0};
    CHECK(relative(postselected_momentum_quadrature(p, {1.0, 0.01}), cplx(0.2, 0.4)) < 1e-3);
    // direct ratio of integrals with an analytic derivative, as a second oracle
    const double eps = 0.01;
    const cplx s(1.0, 0.5);
    auto psi = [&](double x) { return evolved_packet(p, x); };
    const cplx num = integrate_gk15([&](double x) { return std::conj(psi(x)) * cplx(0, -1) * (-x / (2.0 * s)) * psi(x); }, 1 - eps, 1 + eps, 1e-13).value;
    const cplx den = integrate_gk15([&](double x) { return cplx(std::norm(psi(x)), 0); }, 1 - eps, 1 + eps, 1e-13).value;
    CHECK(relative(postselected_momentum_quadrature(p, {1.0, eps}), num / den) < 1e-8);
}

TEST_CASE("deviation from the closed form is quadratic in epsilon") {
    for_all(6, 30, [](Gen& g) {
        const PacketParams p{g.uniform(0.5, 2), g.uniform(0.5, 3), 1.0, g.uniform(0.3, 3)};
        const double xf = g.uniform(0.3, 2) * packet_width(p);
        const double w = packet_width(p);
        const cplx closed = postselected_momentum_closed(p, {xf, 0});
        double prev = -1;
        for (double eps = w / 10; eps > w / 100; eps /= 2) {
            const double dev = std::abs(postselected_momentum_quadrature(p, {xf, eps}) - closed);
            if (prev > 0) {
                INFO("eps " << eps << " ratio " << prev / dev);
                CHECK(prev / dev == doctest::Approx(4.0).epsilon(0.05));
            }
            prev = dev;
        }
        CHECK(relative(postselected_momentum_quadrature(p, {xf, w / 100}), closed) < 1e-3);
    });
}

TEST_CASE("polar decomposition") {
    const auto pd = polar_decomposition(cplx(0.2, 0.4));
    CHECK(pd.r == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-15));
    CHECK(pd.theta == doctest::Approx(std::atan(2.0)).epsilon(1e-15));
    CHECK(polar_decomposition(cplx(3.0, 0.0)).theta == 0.0);
    CHECK(polar_radius({1, 1, 1, 1}, 1.0) == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-15));
    for_all(50, 40, [](Gen& g) {
        const PacketParams p{g.uniform(0.1, 3), g.uniform(0.1, 10), g.uniform(0.5, 2), g.uniform(0.05, 10)};
        const double xf = g.uniform(0.01, 5);
        const cplx closed = postselected_momentum_closed(p, {xf, 0});
        CHECK(std::abs(polar_decomposition(closed).r - polar_radius(p, xf)) < 1e-10 * std::max(1.0, std::abs(closed)));
        // the angle of the complex expression: arctan(2 m a^2 / (hbar t))
        CHECK(polar_decomposition(closed).theta == doctest::Approx(std::atan(2 * p.m * p.a * p.a / (p.hbar * p.t))).epsilon(1e-12));
    });
}

TEST_CASE("completed-square stationary point equals the closed form") {
    CHECK(dominant_momentum({1, 1, 1, 1}, 0.0) == cplx(0.0));
    CHECK(std::abs(dominant_momentum({1, 1, 1, 1}, 1.0) - cplx(0.2, 0.4)) < 1e-15);
    for_all(100, 50, [](Gen& g) {
        const PacketParams p{g.uniform(0.1, 3), g.uniform(0.1, 10), g.uniform(0.5, 2), g.uniform(0.0, 10)};
        const double xf = g.uniform(-5, 5);
        const cplx a = dominant_momentum(p, xf), b = postselected_momentum_closed(p, {xf, 0});
        CHECK(std::abs(a - b) <= 1e-14 * std::max(1.0, std::abs(b)));
    });
}

TEST_CASE("lattice propagation reproduces the width") {
    // 256 sites of 0.125 resolve a = 1 by 8 points
    auto space = make_space({lattice("x", 256, 0.125, false)});
    const auto& s = space->subsystem(0);
    const CMatrix h = kinetic_matrix(s, 1.0);
    const CVector psi0 = gaussian_packet(*space, "x", {0.0, 1.0, 0.0});
    const CVector psi = (cplx(0, -2.0) * h).exp() * psi0;
    double m2 = 0;
    for (Index j = 0; j < 256; ++j) m2 += std::norm(psi[j]) * s.position(j) * s.position(j);
    CHECK(std::sqrt(m2) == doctest::Approx(packet_width({1.0, 1.0, 1.0, 2.0})).epsilon(0.01));
}
