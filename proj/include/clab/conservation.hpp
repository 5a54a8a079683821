#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clab/integrator.hpp"
#include "clab/operators.hpp"

namespace clab {

enum class QuantityKind { energy, total_quasimomentum, spin_z, custom };
std::string to_string(QuantityKind kind);
QuantityKind quantity_kind_from_string(const std::string& name);

// A conserved quantity is the total-system expectation <psi|Q|psi>.
struct ConservedQuantity {
    std::string name;
    QuantityKind kind = QuantityKind::custom;
    AssembledOperator op;
    bool unitary = false;  // symmetry generator rather than Hermitian observable
};

// Hermitian operators give a real value (imaginary part checked against 1e-10).
cplx expectation(const AssembledOperator& q, const StateVector& psi);
cplx expectation(const ConservedQuantity& q, const StateVector& psi);

// <psi| I (x) q (x) I |psi> with q acting on one subsystem.
double subsystem_marginal(const CMatrix& q_single, std::string_view subsystem, const StateVector& psi);

// Simultaneous one-site shift of every lattice subsystem, (T psi)(.., j, ..) = psi(.., j+1, ..).
AssembledOperator total_shift_generator(SpacePtr space);

// arg<T> / dx
double quasi_momentum(cplx shift_expectation, double grid_spacing);

// Projects psi onto the T-eigenspace with eigenvalue exp(2 pi i q / L), L the lcm of lattice sizes.
StateVector project_shift_sector(const StateVector& psi, long q);

struct CommutatorCertificate {
    double max_norm = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// max |AB - BA| against `tolerance`.
CommutatorCertificate commutator_certificate(const AssembledOperator& a, const AssembledOperator& b, double tolerance = 1e-12);

enum class ConservationClass { exact, martingale, lindblad_governed };
std::string to_string(ConservationClass c);

inline constexpr double kExactDriftTolerance = 1e-9;
inline constexpr double kStatisticalSigmas = 3.0;
inline constexpr Index kOracleDimLimit = 256;

struct CheckpointComparison {
    double time = 0.0;
    double ensemble_mean = 0.0;
    double std_error = 0.0;
    double reference = 0.0;  // 0 for drift checks, oracle value otherwise
    bool pass = false;
};

struct QuantityAudit {
    std::string name;
    QuantityKind kind = QuantityKind::custom;
    ConservationClass classification = ConservationClass::lindblad_governed;
    CommutatorCertificate with_hamiltonian;
    CommutatorCertificate with_collapse;
    cplx initial_value;
    std::vector<double> per_trajectory_drift;  // max_t |q(t) - q(0)|
    std::vector<CheckpointComparison> checkpoints;
    bool asserted = false;
    bool pass = true;
    double tolerance = 0.0;
    std::string criterion;
};

// Trajectories flagged as collapsed into `branch`, compared with the initial total.
struct BranchTotal {
    std::string quantity;
    std::string branch;
    long count = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double initial = 0.0;
    double oracle_prediction = 0.0;     // ensemble Tr(Q rho(T)) from the Lindblad oracle
    double selection_allowance = 0.0;   // oracle sd(Q) * sqrt((1 - p) / p), p a lower bound on the branch frequency
    double bound = 0.0;                 // |oracle drift| + selection allowance + 3 SE
    bool pass = false;
};

struct MarginalSummary {
    std::string name;
    double initial_mean = 0.0;
    double final_mean = 0.0;
    double final_std_error = 0.0;
};

struct AuditReport {
    static constexpr int kSchemaVersion = 1;
    std::string scenario;
    long n_traj = 0;
    std::vector<QuantityAudit> quantities;
    std::vector<BranchTotal> branch_totals;
    std::vector<MarginalSummary> marginals;
    bool pass = true;
};

struct AuditContext {
    std::string scenario;
    AssembledOperator hamiltonian;
    AssembledOperator collapse;
    StateVector initial;
    bool has_external_terms = false;
    BranchSet branches;
    double commutator_tolerance = 1e-10;
};

// Throws AuditError when the configuration contains external potentials, and
// ValidationError when a quantity has no recorded series.
AuditReport audit_trajectories(const std::vector<TrajectoryRecord>& records, const std::vector<ConservedQuantity>& quantities,
                               const AuditContext& context);

std::string summarize(const AuditReport& report);

}  // namespace clab
