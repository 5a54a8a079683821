#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"

#include "clab/hilbert.hpp"

namespace clab::testing {

// Hand-rolled generators for property tests; every case is reproducible from its seed.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    cplx complex() { return {normal(), normal()}; }

    CVector vector(Index n) {
        CVector v(n);
        for (Index i = 0; i < n; ++i) v[i] = complex();
        return v;
    }
    CVector state(Index n) { return vector(n).normalized(); }

    CMatrix matrix(Index n) {
        CMatrix m(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) m(i, j) = complex();
        return m;
    }
    CMatrix hermitian(Index n) {
        const CMatrix m = matrix(n);
        return 0.5 * (m + m.adjoint());
    }
    Eigen::VectorXd real_vector(Index n, double lo, double hi) {
        Eigen::VectorXd v(n);
        for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
        return v;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

template <class F>
void for_all(int cases, std::uint64_t seed, F&& body) {
    for (int c = 0; c < cases; ++c) {
        INFO("property case " << c << " (seed " << seed + static_cast<std::uint64_t>(c) << ")");
        Gen g(seed + static_cast<std::uint64_t>(c));
        body(g);
    }
}

inline SubsystemSpec lattice(std::string label, Index n, double dx, bool periodic, double mass = 1.0) {
    return SubsystemSpec{std::move(label), SubsystemKind::lattice1d, n, mass, dx, periodic, {}};
}
inline SubsystemSpec qubit(std::string label, double mass = 1.0) {
    return SubsystemSpec{std::move(label), SubsystemKind::spin, 2, mass, 0.0, false, {}};
}
inline SubsystemSpec discrete(std::string label, Index n, double mass = 1.0) {
    return SubsystemSpec{std::move(label), SubsystemKind::discrete, n, mass, 0.0, false, {}};
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace clab::testing
