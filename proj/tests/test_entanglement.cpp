#include <cmath>

#include <Eigen/Eigenvalues>

#include "support.hpp"

#include "clab/entanglement.hpp"
#include "clab/errors.hpp"

using namespace clab;
using namespace clab::testing;

namespace {

// Partial trace over B by explicit index sums, for a two-subsystem space.
CMatrix trace_out_second(const CVector& psi, Index da, Index db) {
    CMatrix rho = CMatrix::Zero(da, da);
    for (Index i = 0; i < da; ++i)
        for (Index j = 0; j < da; ++j)
            for (Index k = 0; k < db; ++k) rho(i, j) += psi[i * db + k] * std::conj(psi[j * db + k]);
    return rho;
}

Eigen::VectorXd sorted_desc(Eigen::VectorXd v) {
    std::sort(v.data(), v.data() + v.size(), std::greater<>());
    return v;
}

StateVector bell(SpacePtr space) {
    CVector a = CVector::Zero(4);
    a[0] = a[3] = 1;
    return StateVector(std::move(space), a);
}

}  // namespace

TEST_CASE("bipartition construction and validation") {
    auto space = make_space({qubit("a"), qubit("b"), discrete("c", 3)});
    const auto p = Bipartition::from_side_a(*space, {"c", "a"});
    CHECK(p.side_b == std::vector<std::string>{"b"});
    CHECK_THROWS_AS(Bipartition::from_side_a(*space, {}), ValidationError);
    CHECK_THROWS_AS(Bipartition::from_side_a(*space, {"a", "b", "c"}), ValidationError);
    CHECK_THROWS_AS(Bipartition::from_side_a(*space, {"zz"}), ValidationError);
    CHECK_THROWS_AS((Bipartition{{"a"}, {"a", "b", "c"}}.validate(*space)), ValidationError);
    CHECK_THROWS_AS((Bipartition{{"a"}, {"b"}}.validate(*space)), ValidationError);
}

TEST_CASE("product state reduces to a projector") {
    Gen g(1);
    auto space = make_space({discrete("a", 3), discrete("b", 4)});
    const CVector fa = g.state(3);
    const auto psi = make_product_state(space, std::vector<CVector>{fa, g.state(4)});
    const CMatrix rho = reduced_density(psi, Bipartition::from_side_a(*space, {"a"}));
    CHECK(max_abs_diff(rho, fa * fa.adjoint()) < 1e-14);
    CHECK(purity(rho) == doctest::Approx(1.0));
    CHECK(std::abs(vn_entropy(rho)) < 1e-12);
}

TEST_CASE("Bell state is maximally mixed") {
    auto space = make_space({qubit("a"), qubit("b")});
    const auto psi = bell(space);
    const auto part = Bipartition::from_side_a(*space, {"a"});
    CHECK(max_abs_diff(reduced_density(psi, part), 0.5 * CMatrix::Identity(2, 2)) < 1e-15);
    const auto s = schmidt(psi, part);
    CHECK(s.coefficients[0] == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(s.coefficients[1] == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(vn_entropy(s) == doctest::Approx(std::log(2.0)));
    CHECK(purity(reduced_density(psi, part)) == doctest::Approx(0.5));
}

TEST_CASE("two-branch state with overlap 0.99") {
    const auto tb = build_two_branch_state(0.01, MirrorModel::two_mode);
    const auto rho = reduced_density(tb.state, Bipartition::from_side_a(tb.state.space(), {"photon"}));
    const auto ev = sorted_desc(density_spectrum(rho));
    CHECK(std::abs(ev[0] - 0.995) < 1e-9);
    CHECK(std::abs(ev[1] - 0.005) < 1e-9);
}

TEST_CASE("reduced density matches explicit partial trace") {
    for_all(25, 100, [](Gen& g) {
        const Index da = g.integer(1, 5), db = g.integer(1, 5);
        auto space = make_space({discrete("a", da), discrete("b", db)});
        const StateVector psi(space, g.vector(da * db));
        const CMatrix rho = reduced_density(psi, Bipartition::from_side_a(*space, {"a"}));
        CHECK(max_abs_diff(rho, trace_out_second(psi.amplitudes(), da, db)) < 1e-14);
        CHECK(std::abs(rho.trace() - 1.0) < 1e-10);
        CHECK(max_abs_diff(rho, rho.adjoint()) < 1e-14);
    });
}

TEST_CASE("Schmidt coefficients square to the reduced spectrum") {
    for_all(25, 200, [](Gen& g) {
        auto space = make_space({discrete("a", g.integer(1, 3)), discrete("b", g.integer(1, 3)), discrete("c", g.integer(1, 3))});
        const StateVector psi(space, g.vector(space->total_dim()));
        const auto part = Bipartition::from_side_a(*space, g.integer(0, 1) ? std::vector<std::string>{"b"}
                                                                             : std::vector<std::string>{"a", "c"});
        const auto s = schmidt(psi, part);
        CHECK(s.coefficients.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
        for (Index i = 1; i < s.coefficients.size(); ++i) CHECK(s.coefficients[i] <= s.coefficients[i - 1]);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(reduced_density(psi, part));
        Eigen::VectorXd ev = sorted_desc(es.eigenvalues());
        for (Index i = 0; i < s.coefficients.size(); ++i) CHECK(std::abs(s.coefficients[i] * s.coefficients[i] - ev[i]) < 1e-10);
        const Index r = s.coefficients.size();
        CHECK(max_abs_diff(s.left.adjoint() * s.left, CMatrix::Identity(r, r)) < 1e-10);
        CHECK(max_abs_diff(s.right.adjoint() * s.right, CMatrix::Identity(r, r)) < 1e-10);
        CHECK((reconstruct(s, *space, part) - psi.amplitudes()).norm() < 1e-9);
    });
}

TEST_CASE("random 4x4 reconstruction") {
    Gen g(44);
    auto space = make_space({discrete("a", 4), discrete("b", 4)});
    const StateVector psi(space, g.vector(16));
    const auto part = Bipartition::from_side_a(*space, {"a"});
    const auto s = schmidt(psi, part);
    // independent rebuild: sum_i c_i a_i (x) b_i
    CVector sum = CVector::Zero(16);
    for (Index i = 0; i < s.coefficients.size(); ++i) sum += s.coefficients[i] * kron(s.left.col(i), s.right.col(i));
    CHECK((sum - psi.amplitudes()).norm() < 1e-9);
}

TEST_CASE("entropy is symmetric across the cut") {
    for_all(30, 300, [](Gen& g) {
        auto space = make_space({discrete("a", g.integer(1, 4)), discrete("b", g.integer(1, 4)), discrete("c", g.integer(1, 3))});
        const StateVector psi(space, g.vector(space->total_dim()));
        const auto pa = Bipartition::from_side_a(*space, {"a", "c"});
        const auto pb = Bipartition::from_side_a(*space, {"b"});
        const double sa = vn_entropy(reduced_density(psi, pa));
        const double sb = vn_entropy(reduced_density(psi, pb));
        CHECK(std::abs(sa - sb) < 1e-9);
        CHECK(std::abs(vn_entropy(schmidt(psi, pa)) - sa) < 1e-9);
        const double cap = std::log(static_cast<double>(std::min(space->subsystem(1).dim, space->total_dim() / space->subsystem(1).dim)));
        CHECK(sa <= cap + 1e-12);
        CHECK(sa >= 0.0);
    });
}

TEST_CASE("entropy and purity values") {
    Eigen::VectorXd p(2);
    p << 0.995, 0.005;
    CMatrix rho = CMatrix::Zero(2, 2);
    rho.diagonal() = p.cast<cplx>();
    CHECK(std::abs(vn_entropy(rho) - 0.0315) < 1e-3);
    CHECK(vn_entropy(rho) == doctest::Approx(-(0.995 * std::log(0.995) + 0.005 * std::log(0.005))).epsilon(1e-12));
    CHECK(purity(rho) == doctest::Approx(0.99005).epsilon(1e-12));
    CHECK(vn_entropy(0.5 * CMatrix::Identity(2, 2)) == doctest::Approx(std::log(2.0)));
    CHECK(nats_to_bits(std::log(2.0)) == doctest::Approx(1.0));
    Eigen::VectorXd q(3);
    q << 1.0, 0.0, 0.0;
    CHECK(shannon_entropy(q) == 0.0);
}

TEST_CASE("purity bounds") {
    for_all(20, 400, [](Gen& g) {
        const Index n = g.integer(1, 6);
        const CMatrix m = g.matrix(n);
        CMatrix rho = m * m.adjoint();
        rho /= rho.trace();
        const double p = purity(rho);
        CHECK(p <= 1.0 + 1e-12);
        CHECK(p >= 1.0 / static_cast<double>(n) - 1e-12);
    });
}

TEST_CASE("spectrum clipping and refusal") {
    CMatrix tiny = CMatrix::Zero(2, 2);
    tiny(0, 0) = 1.0 + 5e-11;
    tiny(1, 1) = -5e-11;
    const auto ev = density_spectrum(tiny);
    CHECK(ev.minCoeff() == 0.0);
    CMatrix neg = CMatrix::Zero(2, 2);
    neg(0, 0) = 1.1;
    neg(1, 1) = -0.1;
    CHECK_THROWS_AS(density_spectrum(neg), ValidationError);
    CMatrix skew = 0.5 * CMatrix::Identity(2, 2);
    skew(0, 1) = 0.3;
    CHECK_THROWS_AS(density_spectrum(skew), ValidationError);
    CHECK_THROWS_AS(density_spectrum(0.4 * CMatrix::Identity(2, 2)), ValidationError);
}

TEST_CASE("two-branch closed forms") {
    CHECK(two_branch_entropy_exact(1.0) == 0.0);
    CHECK(two_branch_entropy_exact(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(std::abs(two_branch_entropy_exact(0.99) - 0.03148) < 1e-4);
    CHECK(std::abs(two_branch_entropy_approx(0.01) - 0.03149) < 1e-5);
    CHECK(std::abs(two_branch_entropy_approx(0.01) / two_branch_entropy_exact(0.99) - 1.0) < 0.01);
    CHECK(two_branch_entropy_approx(1e-300) < 1e-290);
    CHECK_THROWS_AS(two_branch_entropy_exact(1.5), ValidationError);
    CHECK_THROWS_AS(two_branch_entropy_approx(0.0), ValidationError);
    CHECK_THROWS_AS(two_branch_entropy_approx(1.0), ValidationError);
}

TEST_CASE("approximation error falls monotonically as delta shrinks") {
    double prev = 1.0;
    for (double d = 0.5; d > 1e-7; d /= 3.0) {
        const double rel = std::abs(two_branch_entropy_approx(d) / two_branch_entropy_exact(1.0 - d) - 1.0);
        INFO("delta " << d << " relative " << rel);
        CHECK(rel < prev);
        if (d <= 0.01) CHECK(rel < 0.01);
        prev = rel;
    }
}

TEST_CASE("two-branch construction") {
    for (auto model : {MirrorModel::two_mode, MirrorModel::displaced_gaussian}) {
        INFO(to_string(model));
        CHECK(mirror_model_from_string(to_string(model)) == model);
        for (double d : {0.0, 1e-3, 0.01, 0.2}) {
            const auto tb = build_two_branch_state(d, model);
            CHECK(std::abs(tb.measured_overlap - (1.0 - d)) < 1e-6);
            const auto part = Bipartition::from_side_a(tb.state.space(), {"photon"});
            CHECK(std::abs(vn_entropy(reduced_density(tb.state, part)) - two_branch_entropy_exact(1.0 - d)) < 1e-6);
        }
    }
    const auto orth = build_two_branch_state(1.0, MirrorModel::two_mode);
    CHECK(vn_entropy(reduced_density(orth.state, Bipartition::from_side_a(orth.state.space(), {"photon"}))) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const auto two = build_two_branch_state(0.01, MirrorModel::two_mode);
    const auto s = schmidt(two.state, Bipartition::from_side_a(two.state.space(), {"photon"}));
    CHECK(s.coefficients[0] == doctest::Approx(std::sqrt(1.99 / 2)).epsilon(1e-12));
    CHECK_THROWS_AS(mirror_model_from_string("lens"), ValidationError);
}

TEST_CASE("unrealizable overlaps are refused") {
    // packets cannot separate past the lattice
    CHECK_THROWS_AS(build_two_branch_state(1.0, MirrorModel::displaced_gaussian, MirrorGeometry{64, 0.1, 1.0}), ValidationError);
    CHECK_THROWS_AS(build_two_branch_state(-0.1, MirrorModel::two_mode), ValidationError);
    CHECK_THROWS_AS(build_two_branch_state(1.1, MirrorModel::two_mode), ValidationError);
}
