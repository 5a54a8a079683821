#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Sparse>

#include "clab/hilbert.hpp"

namespace clab {

using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

// Concrete operator on a CompositeSpace. Immutable after construction.
class AssembledOperator {
public:
    AssembledOperator() = default;
    // When `hermitian` is set the matrix is checked: max |M - M^dagger| < 1e-12 (relative to max |M| when that exceeds 1).
    AssembledOperator(SpacePtr space, SparseMatrix matrix, bool hermitian);

    static AssembledOperator zero(SpacePtr space);
    static AssembledOperator identity(SpacePtr space);
    static AssembledOperator from_dense(SpacePtr space, const CMatrix& matrix, bool hermitian);

    const SpacePtr& space_ptr() const { return space_; }
    const SparseMatrix& matrix() const { return matrix_; }
    CMatrix dense() const { return CMatrix(matrix_); }
    Index dim() const { return matrix_.rows(); }
    bool hermitian() const { return hermitian_; }
    bool empty() const { return matrix_.nonZeros() == 0; }
    // Induced infinity norm; an upper bound on the spectral norm of a Hermitian matrix.
    double norm_bound() const { return norm_bound_; }

    CVector apply(const CVector& psi) const { return matrix_ * psi; }
    AssembledOperator scaled(double factor) const;
    AssembledOperator operator+(const AssembledOperator& other) const;

private:
    SpacePtr space_;
    SparseMatrix matrix_;
    bool hermitian_ = false;
    double norm_bound_ = 0.0;
};

double max_abs(const SparseMatrix& m);
double hermiticity_defect(const SparseMatrix& m);

// Operator on one subsystem, given by name or explicit matrix.
// Names: identity, sigma_x, sigma_y, sigma_z (dim 2), spin_z, number, projector:<k>,
// and for lattices: position, momentum (central difference), shift (unitary, T|j> = |j-1>).
struct LocalOp {
    std::string name;
    std::optional<CMatrix> matrix;
};

CMatrix local_operator(const SubsystemSpec& sub, const LocalOp& op);
inline CMatrix local_operator(const SubsystemSpec& sub, const std::string& name) { return local_operator(sub, LocalOp{name, {}}); }
bool is_hermitian_local(const CMatrix& m, double tol = 1e-12);

// Three-point stencil -hbar^2/(2m) (psi_{j+1} - 2 psi_j + psi_{j-1}) / dx^2.
CMatrix kinetic_matrix(const SubsystemSpec& lattice, double mass);

// I (x) ... (x) op (x) ... (x) I
SparseMatrix embed_local(const CompositeSpace& space, std::size_t k, const CMatrix& op);
// Product of local operators on distinct subsystems, identity elsewhere.
SparseMatrix embed_product(const CompositeSpace& space, const std::vector<std::pair<std::size_t, CMatrix>>& factors);

// Pair potential as a function of separation r = x_i - x_j (energy units).
struct PairPotential {
    enum class Family { gaussian, soft_coulomb, square_barrier, tabulated };
    Family family = Family::gaussian;
    double strength = 1.0;  // gaussian: V(0); soft_coulomb: q1 q2; square_barrier: height
    double range = 1.0;     // gaussian: sigma; soft_coulomb: softening; square_barrier: half width
    // tabulated: values at r = table_start + k * table_step, linearly interpolated.
    double table_start = 0.0;
    double table_step = 1.0;
    std::vector<double> table;

    double operator()(double r) const;
};

std::string to_string(PairPotential::Family family);
PairPotential::Family pair_family_from_string(const std::string& name);

struct KineticTerm {
    std::string subsystem;
    std::optional<double> mass;  // defaults to the subsystem's mass
};

// Diagonal samples or a full Hermitian matrix on one subsystem. Test-only: never part
// of the collapse operator, and audits refuse configurations that contain one.
struct ExternalTerm {
    std::string subsystem;
    std::vector<double> diagonal;
    std::optional<CMatrix> matrix;
};

struct InteractionTerm {
    std::string subsystem_i;
    std::string subsystem_j;
    PairPotential potential;
    bool in_hamiltonian = true;
};

// strength * A_i (x) B_j. The Stern-Gerlach spin-pointer coupling is
// {spin, sigma_z, pointer, position, g}.
struct CouplingTerm {
    std::string subsystem_i;
    LocalOp op_i;
    std::string subsystem_j;
    LocalOp op_j;
    double strength = 1.0;
    bool in_hamiltonian = true;
};

CouplingTerm spin_coupling(const std::string& spin, const std::string& pointer, double strength);

using OperatorTerm = std::variant<KineticTerm, ExternalTerm, InteractionTerm, CouplingTerm>;

struct OperatorSpec {
    std::vector<OperatorTerm> terms;

    bool has_external_terms() const;
    bool has_interactions() const;
};

// Throws ValidationError on unknown labels, self-interactions, incompatible lattices.
void validate(const OperatorSpec& spec, const CompositeSpace& space);

SparseMatrix interaction_matrix(const InteractionTerm& term, const CompositeSpace& space);
SparseMatrix coupling_matrix(const CouplingTerm& term, const CompositeSpace& space);

AssembledOperator assemble_hamiltonian(const OperatorSpec& spec, SpacePtr space);

// Sum of V_ij / (m_i + m_j) over interaction and coupling terms. Zero operator when there are none.
AssembledOperator scaled_interaction_sum(const OperatorSpec& spec, SpacePtr space);

struct CollapseParams {
    double c_scale = 1.0;  // velocity units
    double tau0 = 1.0;     // time units
    void validate() const;
};

// V / (c^2 sqrt(tau0)); units of 1/sqrt(time).
AssembledOperator collapse_operator(const AssembledOperator& scaled_interactions, const CollapseParams& params);

struct BetaResult {
    CVector vector;  // (V - <V>) psi
    double v_mean = 0.0;
};

BetaResult beta_apply(const AssembledOperator& collapse, const StateVector& psi);
// Same on a raw normalized vector; writes into `out`.
double beta_apply(const SparseMatrix& collapse, const CVector& psi, CVector& out);

}  // namespace clab
