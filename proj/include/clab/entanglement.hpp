#pragma once

#include <string>
#include <vector>

#include "clab/hilbert.hpp"

namespace clab {

// side_a and side_b are disjoint, nonempty, and together cover the space.
struct Bipartition {
    std::vector<std::string> side_a;
    std::vector<std::string> side_b;

    // Complement taken in space order.
    static Bipartition from_side_a(const CompositeSpace& space, const std::vector<std::string>& side_a);
    void validate(const CompositeSpace& space) const;
};

// Amplitudes reshaped to a dim(A) x dim(B) matrix; each side row-major in space order.
CMatrix bipartite_matrix(const StateVector& psi, const Bipartition& partition);

CMatrix reduced_density(const StateVector& psi, const Bipartition& partition);

struct SchmidtResult {
    Eigen::VectorXd coefficients;  // descending, nonnegative
    CMatrix left;                  // columns: orthonormal vectors on side A
    CMatrix right;                 // columns: orthonormal vectors on side B
};

// psi = sum_i coefficients[i] * left.col(i) (x) right.col(i), via SVD of the reshaped amplitudes.
SchmidtResult schmidt(const StateVector& psi, const Bipartition& partition);
// Inverse of the reshape: the full amplitude vector a Schmidt result describes.
CVector reconstruct(const SchmidtResult& result, const CompositeSpace& space, const Bipartition& partition);

// Eigenvalues of a density matrix, clipped at zero when within -1e-10. Throws on
// non-Hermitian input, larger negativity, or trace away from 1.
Eigen::VectorXd density_spectrum(const CMatrix& rho);

// -sum p log p in nats, with 0 log 0 = 0.
double shannon_entropy(const Eigen::VectorXd& probabilities);
double vn_entropy(const CMatrix& rho);
double vn_entropy(const SchmidtResult& result);
inline double nats_to_bits(double nats) { return nats / std::log(2.0); }

double purity(const CMatrix& rho);

// Entropy of Schmidt weights ((1 + mu)/2, (1 - mu)/2), for branch overlap mu in [0, 1].
double two_branch_entropy_exact(double mu);
// (delta/2)(1 - ln(delta/2)); accurate for delta << 1.
double two_branch_entropy_approx(double delta);

enum class MirrorModel { displaced_gaussian, two_mode };
std::string to_string(MirrorModel model);
MirrorModel mirror_model_from_string(const std::string& name);

// Mirror lattice used by the displaced-Gaussian model.
struct MirrorGeometry {
    Index sites = 256;
    double grid_spacing = 0.1;
    double packet_width = 1.0;
};

struct TwoBranchState {
    StateVector state;       // subsystems: "photon" (2 levels) then "mirror"
    double measured_overlap;  // <B_r|B_t> on the constructed mirror states
};

// (|0>|B_r> + |1>|B_t>)/sqrt(2) with <B_r|B_t> = 1 - delta to within 1e-6.
TwoBranchState build_two_branch_state(double delta, MirrorModel model, const MirrorGeometry& geometry = {});

// Photon and mirror vectors for the two branches, before combining.
struct MirrorBranches {
    SubsystemSpec mirror;
    CVector reflected;
    CVector transmitted;
};
MirrorBranches mirror_branches(double delta, MirrorModel model, const MirrorGeometry& geometry = {});
// Mirror states on a given subsystem; displaced packets are centred on the middle of the lattice.
MirrorBranches mirror_branches(double delta, MirrorModel model, const SubsystemSpec& mirror, double packet_width);

}  // namespace clab
