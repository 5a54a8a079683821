#include <cmath>
#include <numbers>

#include "support.hpp"

#include "clab/entanglement.hpp"
#include "clab/errors.hpp"
#include "clab/hilbert.hpp"

using namespace clab;
using namespace clab::testing;

namespace {

CVector basis(Index n, Index k) {
    CVector v = CVector::Zero(n);
    v[k] = 1.0;
    return v;
}

// <p> from the discrete Fourier transform of the samples; direct O(N^2) sum.
double dft_mean_momentum(const CVector& psi, double dx) {
    const Index n = psi.size();
    double num = 0.0, den = 0.0;
    for (Index k = 0; k < n; ++k) {
        cplx c = 0.0;
        for (Index j = 0; j < n; ++j)
            c += psi[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n));
        const Index wrapped = k < n / 2 ? k : k - n;
        const double p = 2.0 * std::numbers::pi * static_cast<double>(wrapped) / (static_cast<double>(n) * dx);
        num += p * std::norm(c);
        den += std::norm(c);
    }
    return num / den;
}

double mean_position(const CVector& psi, const SubsystemSpec& s) {
    double acc = 0.0;
    for (Index j = 0; j < psi.size(); ++j) acc += std::norm(psi[j]) * s.position(j);
    return acc / psi.squaredNorm();
}

}  // namespace

TEST_CASE("space bookkeeping") {
    auto space = make_space({qubit("a"), discrete("b", 3), lattice("c", 4, 0.5, true)});
    CHECK(space->total_dim() == 24);
    CHECK(space->stride(0) == 12);
    CHECK(space->stride(1) == 4);
    CHECK(space->stride(2) == 1);
    CHECK(space->index_of("b") == 1);
    CHECK(space->level(23, 0) == 1);
    CHECK(space->level(23, 1) == 2);
    CHECK(space->level(23, 2) == 3);
    CHECK_THROWS_AS(space->index_of("zz"), ValidationError);
}

TEST_CASE("space validation") {
    CHECK_THROWS_AS(make_space({qubit("a"), qubit("a")}), ValidationError);
    CHECK_THROWS_AS(make_space({lattice("x", 1, 0.5, false)}), ValidationError);
    CHECK_THROWS_AS(make_space({lattice("x", 8, 0.0, false)}), ValidationError);
    CHECK_THROWS_AS(make_space({qubit("a", 0.0)}), ValidationError);
    CHECK_THROWS_AS(make_space({qubit("a", -1.0)}), ValidationError);
    CHECK_THROWS_AS(make_space({}), ValidationError);
}

TEST_CASE("lattice positions put a site at the origin") {
    const auto s = lattice("x", 256, 16.0 / 256, false);
    CHECK(s.x_min() == doctest::Approx(-8.0));
    CHECK(s.position(128) == doctest::Approx(0.0));
    CHECK(s.box_length() == doctest::Approx(16.0));
}

TEST_CASE("basis product state") {
    auto space = make_space({qubit("a"), qubit("b")});
    CVector zero(2), one(2);
    zero << 1, 0;
    one << 0, 1;
    const auto psi = make_product_state(space, std::vector<CVector>{zero, one});
    CHECK(max_abs_diff(psi.amplitudes(), basis(4, 1)) == 0.0);
}

TEST_CASE("single factor is normalized") {
    auto space = make_space({qubit("a")});
    CVector f(2);
    f << 3, 4;
    const auto psi = make_product_state(space, std::vector<CVector>{f});
    CHECK(std::abs(psi[0] - 0.6) < 1e-15);
    CHECK(std::abs(psi[1] - 0.8) < 1e-15);
}

TEST_CASE("product state by label") {
    auto space = make_space({qubit("a"), discrete("b", 3)});
    const auto psi = make_product_state(space, std::map<std::string, CVector>{{"b", basis(3, 2)}, {"a", basis(2, 1)}});
    CHECK(std::abs(psi[5] - 1.0) < 1e-15);
    CHECK_THROWS_AS(make_product_state(space, std::map<std::string, CVector>{{"a", basis(2, 0)}}), ValidationError);
    CHECK_THROWS_AS(make_product_state(space, std::map<std::string, CVector>{
                                                  {"a", basis(2, 0)}, {"b", basis(3, 0)}, {"c", basis(2, 0)}}),
                    ValidationError);
}

TEST_CASE("product state errors") {
    auto space = make_space({qubit("a"), qubit("b")});
    CHECK_THROWS_AS(make_product_state(space, std::vector<CVector>{basis(2, 0), basis(3, 0)}), ValidationError);
    CHECK_THROWS_AS(make_product_state(space, std::vector<CVector>{basis(2, 0), CVector::Zero(2)}), ValidationError);
    CHECK_THROWS_AS(make_product_state(space, std::vector<CVector>{basis(2, 0)}), ValidationError);
}

TEST_CASE("gaussian packet times a qubit is unentangled") {
    auto space = make_space({lattice("x", 64, 0.25, false), qubit("s")});
    CVector s(2);
    s << 1, 1;
    const auto psi = make_product_state(space, std::vector<CVector>{gaussian_packet(*space, "x", {0.0, 1.0, 0.5}), s});
    const auto part = Bipartition::from_side_a(*space, {"x"});
    CHECK(vn_entropy(reduced_density(psi, part)) < 1e-12);
}

TEST_CASE("product states have Schmidt rank one across every cut") {
    for_all(20, 1000, [](Gen& g) {
        auto space = make_space({discrete("a", g.integer(1, 4)), discrete("b", g.integer(1, 4)), discrete("c", g.integer(1, 4))});
        std::vector<CVector> f;
        for (const auto& s : space->subsystems()) f.push_back(g.vector(s.dim));
        const auto psi = make_product_state(space, f);
        CHECK(std::abs(norm(psi) - 1.0) < 1e-12);
        for (const auto& side : std::vector<std::vector<std::string>>{{"a"}, {"b"}, {"c"}, {"a", "c"}}) {
            const auto r = schmidt(psi, Bipartition::from_side_a(*space, side));
            CHECK(r.coefficients[0] == doctest::Approx(1.0).epsilon(1e-12));
            for (Index i = 1; i < r.coefficients.size(); ++i) CHECK(r.coefficients[i] < 1e-7);
        }
    });
}

TEST_CASE("tensor product is associative") {
    for_all(20, 2000, [](Gen& g) {
        const CVector a = g.vector(g.integer(1, 5)), b = g.vector(g.integer(1, 5)), c = g.vector(g.integer(1, 5));
        const CVector left = kron(kron(a, b), c);
        const CVector right = kron(a, kron(b, c));
        CHECK(left.size() == right.size());
        // scalar products associate only up to rounding
        CHECK((left - right).cwiseAbs().maxCoeff() <= 4e-16 * left.cwiseAbs().maxCoeff());
    });
}

TEST_CASE("norm and renormalize") {
    auto space2 = make_space({qubit("a")});
    auto space4 = make_space({discrete("a", 4)});
    CHECK(norm(basis(4, 0)) == 1.0);
    CVector v(2);
    v << cplx(0, 2), 0;
    const auto r = renormalize(space2, v);
    CHECK(std::abs(r[0] - cplx(0, 1)) < 1e-15);
    CHECK_THROWS_AS(renormalize(space2, CVector::Zero(2)), NumericalError);
    CVector bad(2);
    bad << std::nan(""), 1;
    CHECK_THROWS_AS(renormalize(space2, bad), NumericalError);
    CHECK_THROWS_AS(renormalize(space4, v), ValidationError);
}

TEST_CASE("renormalized random vectors have unit norm") {
    auto space = make_space({discrete("a", 128)});
    for_all(50, 3000, [&](Gen& g) {
        const CVector v = g.vector(128) * g.uniform(1e-6, 1e6);
        CHECK(std::abs(norm(renormalize(space, v)) - 1.0) < 1e-14);
    });
}

TEST_CASE("centred packet is real and even") {
    const auto s = lattice("x", 256, 16.0 / 256, false);
    auto space = make_space({s});
    const CVector psi = gaussian_packet(*space, "x", {0.0, 1.0, 0.0});
    CHECK(psi.imag().cwiseAbs().maxCoeff() == 0.0);
    // site 128 is x = 0; sites 128 +- k mirror each other
    for (Index k = 1; k < 128; ++k) CHECK(std::abs(psi[128 + k] - psi[128 - k]) < 1e-15);
    CHECK(std::abs(mean_position(psi, s)) < 1e-12);
    CHECK(std::abs(psi.norm() - 1.0) < 1e-12);
}

TEST_CASE("boosted packet carries its momentum") {
    const auto s = lattice("x", 256, 16.0 / 256, false);
    auto space = make_space({s});
    const CVector psi = gaussian_packet(*space, "x", {0.0, 1.0, 2.0});
    CHECK(std::abs(dft_mean_momentum(psi, s.grid_spacing) - 2.0 * kHbar) < 1e-6);
}

TEST_CASE("displaced packet mean position") {
    const auto s = lattice("x", 384, 16.0 / 256, false);
    auto space = make_space({s});
    CHECK(std::abs(mean_position(gaussian_packet(*space, "x", {3.0, 1.0, 0.0}), s) - 3.0) < 1e-9);
}

TEST_CASE("packet refusal") {
    auto space = make_space({lattice("x", 64, 0.5, false), qubit("s"), lattice("p", 64, 0.5, true)});
    CHECK_THROWS_AS(gaussian_packet(*space, "x", {0.0, 0.9, 0.0}), ValidationError);
    CHECK_THROWS_AS(gaussian_packet(*space, "x", {12.0, 1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(gaussian_packet(*space, "s", {0.0, 1.0, 0.0}), ValidationError);
    // periodic grids wrap, so the wall check does not apply
    CHECK_NOTHROW(gaussian_packet(*space, "p", {12.0, 1.0, 0.0}));
}

TEST_CASE("leakage matches the normal tail") {
    const auto s = lattice("x", 100, 0.1, false);  // [-5, 4.9]
    const double expect = 0.5 * std::erfc(2.0 / std::sqrt(2.0)) + 0.5 * std::erfc(7.9 / std::sqrt(2.0));
    CHECK(gaussian_leakage(s, {-3.0, 1.0, 0.0}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("discrete norm converges under grid refinement") {
    // Errors below the floor are pure rounding and are not compared.
    const double floor = 1e-13;
    const double a = 0.5;
    double prev = -1.0;
    for (double dx : {1.0, 0.5, 0.25, 0.125}) {
        const auto n = static_cast<Index>(std::lround(24.0 / dx));
        const auto s = lattice("x", n, dx, false);
        const double err = std::abs(1.0 - sample_gaussian(s, {0.0, a, 0.0}).squaredNorm() * dx);
        INFO("dx " << dx << " error " << err);
        if (prev > floor) CHECK(prev / std::max(err, 1e-300) >= 4.0);
        prev = err;
    }
}

TEST_CASE("public constructors produce unit norm") {
    for_all(30, 4000, [](Gen& g) {
        const Index n = g.integer(32, 128);
        const double dx = g.uniform(0.05, 0.2);
        auto space = make_space({lattice("x", n, dx, g.integer(0, 1) == 1)});
        const double l = static_cast<double>(n) * dx;
        const GaussianParams p{g.uniform(-0.05 * l, 0.05 * l), g.uniform(2.0 * dx, l / 16.0), g.uniform(-2.0, 2.0)};
        CHECK(std::abs(gaussian_packet(*space, "x", p).norm() - 1.0) < 1e-12);
    });
}
