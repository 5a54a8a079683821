#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "clab/entanglement.hpp"
#include "clab/operators.hpp"

namespace clab {

enum class NoiseKind { complex, real };
std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

// dt * |V|^2 must not exceed this (|V| is the induced infinity norm).
inline constexpr double kStabilityLimit = 0.1;

struct IntegrationPlan {
    double dt = 1e-3;
    long n_steps = 1000;
    std::uint64_t seed = 0;
    NoiseKind noise = NoiseKind::complex;
    long record_every = 1;
    double collapse_threshold = 1.0 - 1e-6;

    void validate() const;
    long n_records() const { return 1 + n_steps / record_every; }
};

// Welford accumulator; merge() combines partial results in a fixed order.
struct RunningStats {
    long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x);
    void merge(const RunningStats& other);
    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double std_error() const { return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

// In-place explicit Euler-Maruyama step for
//   d psi = -i H psi dt - 1/2 beta^2 psi dt + beta psi dxi,  beta = V - <V>,
// with beta frozen at the pre-step state, followed by renormalization.
class ItoStepper {
public:
    ItoStepper(const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt);
    // Returns the pre-renormalization norm.
    double step(CVector& psi, cplx dxi);
    double dt() const { return dt_; }

private:
    const SparseMatrix* h_;
    const SparseMatrix* v_;
    double dt_;
    CVector beta_psi_, scratch_, update_;
};

struct StepResult {
    StateVector state;
    double norm_pre;
};

StepResult ito_step(const StateVector& psi, const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt,
                    cplx dxi);

// Integrates a prescribed noise path; increments.size() is the number of steps.
StateVector propagate(const StateVector& psi, const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt,
                      const std::vector<cplx>& increments);

// Noise increments drawn with mt19937_64(seed) and std::normal_distribution(0, sqrt(dt)).
// complex: (dW1 + i dW2)/sqrt(2); real: dW1.
class NoiseSource {
public:
    NoiseSource(std::uint64_t seed, double dt, NoiseKind kind);
    cplx next();

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
    NoiseKind kind_;
};

struct ObservableDef {
    std::string name;
    bool is_complex = false;
    std::optional<AssembledOperator> op;            // <psi|op|psi>
    std::function<cplx(const CVector&)> evaluator;  // used when op is empty

    cplx evaluate(const CVector& psi) const;
};

// Labeled partition of the basis; weight of a branch is the probability on its basis states.
struct BranchSet {
    std::vector<std::string> labels;
    std::vector<int> branch_of_index;

    bool empty() const { return labels.empty(); }
    std::vector<double> weights(const CVector& psi) const;
};

struct NamedBipartition {
    std::string name;
    Bipartition partition;
};

struct SimulationModel {
    SpacePtr space;
    AssembledOperator hamiltonian;
    AssembledOperator collapse;  // zero operator when collapse is disabled
    StateVector initial;
    std::vector<ObservableDef> observables;
    BranchSet branches;
    std::vector<NamedBipartition> bipartitions;
};

struct ComplexSeries {
    std::string name;
    bool is_complex = false;
    std::vector<cplx> values;
};

struct RealSeries {
    std::string name;
    std::vector<double> values;
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<double> norms_pre_renorm;
    std::vector<ComplexSeries> observables;
    std::vector<RealSeries> branch_weights;
    std::vector<RealSeries> entropy_series;
    std::optional<StateVector> final_state;
    std::vector<CVector> states;  // only when requested
    std::uint64_t seed = 0;
    IntegrationPlan plan;
    std::optional<std::string> collapsed_branch;
    double collapse_time = 0.0;
    // Squared-norm increment |psi_pre|^2 - 1 over every step.
    RunningStats norm_sq_drift;

    const ComplexSeries& observable(const std::string& name) const;
    const RealSeries& branch(const std::string& label) const;
    const RealSeries& entropy(const std::string& name) const;
};

struct TrajectoryOptions {
    bool keep_states = false;
};

TrajectoryRecord run_trajectory(const SimulationModel& model, const IntegrationPlan& plan, const TrajectoryOptions& options = {});

struct SeriesStats {
    std::string name;
    std::vector<double> mean, variance, std_error, ci_low, ci_high;  // 95% normal intervals
};

struct OutcomeStats {
    std::string label;  // branch label, or "none"
    long count = 0;
    double frequency = 0.0;
    double std_error = 0.0;
};

struct EnsembleStats {
    long n_traj = 0;
    std::uint64_t base_seed = 0;
    IntegrationPlan plan;
    std::vector<double> times;
    std::vector<SeriesStats> series;  // norm_pre, observables (complex split into .re/.im), w:<branch>, S:<bipartition>
    std::vector<OutcomeStats> outcomes;
    RunningStats norm_sq_drift_per_traj;  // one sample per trajectory: its mean step drift
    std::vector<CMatrix> mean_density;    // only when requested
    std::vector<TrajectoryRecord> records;  // only when requested

    const SeriesStats& get(const std::string& name) const;
};

struct EnsembleOptions {
    bool keep_density = false;
    bool keep_records = false;
    unsigned threads = 0;  // 0: COLLAPSE_LAB_THREADS or hardware concurrency
};

// Trajectory i uses seed base_seed + i. Reduction order is fixed, so results do not depend on threads.
EnsembleStats run_ensemble(const SimulationModel& model, const IntegrationPlan& plan, long n_traj, std::uint64_t base_seed,
                           const EnsembleOptions& options = {});

unsigned worker_threads(unsigned requested = 0);

// RK4 integration of d rho/dt = -i[H, rho] + V rho V - 1/2 {V^2, rho}; Hermitian part kept each step.
// H and V must be Hermitian.
// Returns 1 + n_steps/record_every matrices.
std::vector<CMatrix> lindblad_oracle(const CMatrix& hamiltonian, const CMatrix& collapse, const CMatrix& rho0, double dt,
                                     long n_steps, long record_every = 1);
std::vector<CMatrix> lindblad_oracle(const SparseMatrix& hamiltonian, const SparseMatrix& collapse, const CMatrix& rho0, double dt,
                                     long n_steps, long record_every = 1);

CMatrix projector(const CVector& psi);
double trace_distance(const CMatrix& a, const CMatrix& b);

}  // namespace clab
