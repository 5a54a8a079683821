#include "clab/integrator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include <Eigen/Eigenvalues>

#include "clab/errors.hpp"

namespace clab {

std::string to_string(NoiseKind kind) { return kind == NoiseKind::real ? "real" : "complex"; }

NoiseKind noise_kind_from_string(const std::string& name) {
    if (name == "complex") return NoiseKind::complex;
    if (name == "real") return NoiseKind::real;
    throw ValidationError("unknown noise kind '" + name + "'");
}

void IntegrationPlan::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
    if (n_steps < 1) throw ValidationError("n_steps must be positive");
    if (record_every < 1) throw ValidationError("record_every must be positive");
    if (record_every > n_steps) throw ValidationError("record_every must not exceed n_steps");
    if (!(collapse_threshold > 0.0 && collapse_threshold < 1.0)) throw ValidationError("collapse_threshold must lie in (0, 1)");
}

void RunningStats::add(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
}

void RunningStats::merge(const RunningStats& o) {
    if (o.count == 0) return;
    if (count == 0) {
        *this = o;
        return;
    }
    const double n = static_cast<double>(count + o.count);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.count) / n;
    m2 += o.m2 + d * d * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
}

ItoStepper::ItoStepper(const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt)
    : h_(&hamiltonian.matrix()), v_(collapse.empty() ? nullptr : &collapse.matrix()), dt_(dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
    if (hamiltonian.dim() != collapse.dim()) throw ValidationError("Hamiltonian and collapse operator sizes differ");
    if (!collapse.hermitian()) throw ValidationError("collapse operator must be Hermitian");
    const double v = collapse.norm_bound();
    if (dt * v * v > kStabilityLimit)
        throw NumericalError("stability guard violated: dt * |V|^2 = " + format_number(dt * v * v) + " > " +
                             format_number(kStabilityLimit));
}

double ItoStepper::step(CVector& psi, cplx dxi) {
    update_.noalias() = (*h_) * psi;
    update_ *= cplx(0.0, -dt_);
    if (v_) {
        const double mean = beta_apply(*v_, psi, beta_psi_);
        scratch_.noalias() = (*v_) * beta_psi_;
        scratch_ -= mean * beta_psi_;
        update_ -= (0.5 * dt_) * scratch_;
        update_ += dxi * beta_psi_;
    }
    psi += update_;
    const double n = psi.norm();
    if (!std::isfinite(n) || n == 0.0) throw NumericalError("Ito step produced a non-finite or zero state");
    psi /= n;
    return n;
}

StepResult ito_step(const StateVector& psi, const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt,
                    cplx dxi) {
    if (hamiltonian.dim() != psi.dim()) throw ValidationError("state and Hamiltonian sizes differ");
    ItoStepper stepper(hamiltonian, collapse, dt);
    CVector next = psi.amplitudes();
    const double n = stepper.step(next, dxi);
    return StepResult{StateVector(psi.space_ptr(), std::move(next)), n};
}

StateVector propagate(const StateVector& psi, const AssembledOperator& hamiltonian, const AssembledOperator& collapse, double dt,
                      const std::vector<cplx>& increments) {
    ItoStepper stepper(hamiltonian, collapse, dt);
    CVector state = psi.amplitudes();
    for (const cplx& dxi : increments) stepper.step(state, dxi);
    return StateVector(psi.space_ptr(), std::move(state));
}

NoiseSource::NoiseSource(std::uint64_t seed, double dt, NoiseKind kind)
    : engine_(seed), normal_(0.0, std::sqrt(dt)), kind_(kind) {}

cplx NoiseSource::next() {
    const double w1 = normal_(engine_);
    if (kind_ == NoiseKind::real) return {w1, 0.0};
    const double w2 = normal_(engine_);
    return cplx(w1, w2) / std::sqrt(2.0);
}

cplx ObservableDef::evaluate(const CVector& psi) const {
    if (op) return psi.dot(op->apply(psi));
    if (evaluator) return evaluator(psi);
    throw ValidationError("observable '" + name + "' has no definition");
}

std::vector<double> BranchSet::weights(const CVector& psi) const {
    std::vector<double> w(labels.size(), 0.0);
    for (Index i = 0; i < psi.size(); ++i) w[static_cast<std::size_t>(branch_of_index[i])] += std::norm(psi[i]);
    return w;
}

namespace {

template <class Series>
const Series& find_series(const std::vector<Series>& all, const std::string& name, const char* what) {
    for (const auto& s : all)
        if (s.name == name) return s;
    throw ValidationError(std::string("no ") + what + " series named '" + name + "'");
}

}  // namespace

const ComplexSeries& TrajectoryRecord::observable(const std::string& name) const { return find_series(observables, name, "observable"); }
const RealSeries& TrajectoryRecord::branch(const std::string& label) const { return find_series(branch_weights, label, "branch"); }
const RealSeries& TrajectoryRecord::entropy(const std::string& name) const { return find_series(entropy_series, name, "entropy"); }

TrajectoryRecord run_trajectory(const SimulationModel& model, const IntegrationPlan& plan, const TrajectoryOptions& options) {
    plan.validate();
    const Index dim = model.initial.dim();
    if (model.hamiltonian.dim() != dim || model.collapse.dim() != dim) throw ValidationError("model operators do not match the state");
    if (!model.branches.empty() && static_cast<Index>(model.branches.branch_of_index.size()) != dim)
        throw ValidationError("branch map does not match the state");

    TrajectoryRecord rec;
    rec.seed = plan.seed;
    rec.plan = plan;
    const auto n_rec = static_cast<std::size_t>(plan.n_records());
    rec.times.reserve(n_rec);
    rec.norms_pre_renorm.reserve(n_rec);
    for (const auto& o : model.observables) rec.observables.push_back({o.name, o.is_complex, {}});
    for (const auto& b : model.branches.labels) rec.branch_weights.push_back({b, {}});
    for (const auto& b : model.bipartitions) rec.entropy_series.push_back({b.name, {}});

    CVector psi = model.initial.amplitudes();
    ItoStepper stepper(model.hamiltonian, model.collapse, plan.dt);
    NoiseSource noise(plan.seed, plan.dt, plan.noise);

    auto record = [&](long step, double norm_pre) {
        const double t = static_cast<double>(step) * plan.dt;
        rec.times.push_back(t);
        rec.norms_pre_renorm.push_back(norm_pre);
        for (std::size_t i = 0; i < model.observables.size(); ++i) {
            const cplx v = model.observables[i].evaluate(psi);
            rec.observables[i].values.push_back(model.observables[i].is_complex ? v : cplx(v.real(), 0.0));
        }
        if (!model.branches.empty()) {
            const auto w = model.branches.weights(psi);
            for (std::size_t i = 0; i < w.size(); ++i) {
                rec.branch_weights[i].values.push_back(w[i]);
                if (!rec.collapsed_branch && w[i] > plan.collapse_threshold) {
                    rec.collapsed_branch = model.branches.labels[i];
                    rec.collapse_time = t;
                }
            }
        }
        if (!model.bipartitions.empty()) {
            const StateVector state(model.space, psi);
            for (std::size_t i = 0; i < model.bipartitions.size(); ++i)
                rec.entropy_series[i].values.push_back(vn_entropy(schmidt(state, model.bipartitions[i].partition)));
        }
        if (options.keep_states) rec.states.push_back(psi);
    };

    record(0, 1.0);
    for (long step = 1; step <= plan.n_steps; ++step) {
        const double n = stepper.step(psi, noise.next());
        rec.norm_sq_drift.add(n * n - 1.0);
        if (step % plan.record_every == 0) record(step, n);
    }
    rec.final_state.emplace(model.space, psi);
    return rec;
}

unsigned worker_threads(unsigned requested) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("COLLAPSE_LAB_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    if (requested > 0) return requested;
    return n;
}

namespace {

constexpr long kBlockSize = 16;

struct BlockResult {
    std::vector<std::vector<RunningStats>> series;  // series -> time
    std::map<std::string, long> outcomes;
    RunningStats drift;
    std::vector<CMatrix> density;
    std::vector<TrajectoryRecord> records;
};

std::vector<std::string> series_names(const SimulationModel& model) {
    std::vector<std::string> names{"norm_pre"};
    for (const auto& o : model.observables) {
        if (o.is_complex) {
            names.push_back(o.name + ".re");
            names.push_back(o.name + ".im");
        } else {
            names.push_back(o.name);
        }
    }
    for (const auto& b : model.branches.labels) names.push_back("w:" + b);
    for (const auto& b : model.bipartitions) names.push_back("S:" + b.name);
    return names;
}

void accumulate(BlockResult& block, const TrajectoryRecord& rec, bool keep_density) {
    std::size_t s = 0;
    auto add_real = [&](const std::vector<double>& values) {
        for (std::size_t t = 0; t < values.size(); ++t) block.series[s][t].add(values[t]);
        ++s;
    };
    add_real(rec.norms_pre_renorm);
    for (const auto& o : rec.observables) {
        for (std::size_t t = 0; t < o.values.size(); ++t) block.series[s][t].add(o.values[t].real());
        ++s;
        if (o.is_complex) {
            for (std::size_t t = 0; t < o.values.size(); ++t) block.series[s][t].add(o.values[t].imag());
            ++s;
        }
    }
    for (const auto& b : rec.branch_weights) add_real(b.values);
    for (const auto& e : rec.entropy_series) add_real(e.values);
    ++block.outcomes[rec.collapsed_branch.value_or("none")];
    block.drift.add(rec.norm_sq_drift.mean);
    if (keep_density) {
        if (block.density.empty())
            for (const auto& psi : rec.states) block.density.push_back(CMatrix::Zero(psi.size(), psi.size()));
        for (std::size_t t = 0; t < rec.states.size(); ++t) block.density[t] += projector(rec.states[t]);
    }
}

}  // namespace

const SeriesStats& EnsembleStats::get(const std::string& name) const { return find_series(series, name, "ensemble"); }

EnsembleStats run_ensemble(const SimulationModel& model, const IntegrationPlan& plan, long n_traj, std::uint64_t base_seed,
                           const EnsembleOptions& options) {
    if (n_traj < 2) throw ValidationError("an ensemble needs at least two trajectories");
    plan.validate();
    const auto names = series_names(model);
    const auto n_rec = static_cast<std::size_t>(plan.n_records());
    const long n_blocks = (n_traj + kBlockSize - 1) / kBlockSize;
    std::vector<BlockResult> blocks(static_cast<std::size_t>(n_blocks));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_blocks));
    std::atomic<long> next{0};

    auto worker = [&] {
        for (long b = next++; b < n_blocks; b = next++) {
            auto& block = blocks[static_cast<std::size_t>(b)];
            try {
                block.series.assign(names.size(), std::vector<RunningStats>(n_rec));
                const long first = b * kBlockSize;
                const long last = std::min(n_traj, first + kBlockSize);
                for (long i = first; i < last; ++i) {
                    IntegrationPlan p = plan;
                    p.seed = base_seed + static_cast<std::uint64_t>(i);
                    TrajectoryRecord rec = run_trajectory(model, p, TrajectoryOptions{options.keep_density});
                    accumulate(block, rec, options.keep_density);
                    if (options.keep_records) {
                        rec.states.clear();
                        block.records.push_back(std::move(rec));
                    }
                }
            } catch (...) {
                errors[static_cast<std::size_t>(b)] = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::min<unsigned>(worker_threads(options.threads), static_cast<unsigned>(n_blocks));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    EnsembleStats out;
    out.n_traj = n_traj;
    out.base_seed = base_seed;
    out.plan = plan;
    for (std::size_t t = 0; t < n_rec; ++t) out.times.push_back(static_cast<double>(t) * static_cast<double>(plan.record_every) * plan.dt);

    std::vector<std::vector<RunningStats>> total(names.size(), std::vector<RunningStats>(n_rec));
    std::map<std::string, long> outcomes;
    for (auto& block : blocks) {
        for (std::size_t s = 0; s < names.size(); ++s)
            for (std::size_t t = 0; t < n_rec; ++t) total[s][t].merge(block.series[s][t]);
        for (const auto& [label, c] : block.outcomes) outcomes[label] += c;
        out.norm_sq_drift_per_traj.merge(block.drift);
        if (options.keep_density) {
            if (out.mean_density.empty()) out.mean_density = block.density;
            else
                for (std::size_t t = 0; t < n_rec; ++t) out.mean_density[t] += block.density[t];
        }
        for (auto& r : block.records) out.records.push_back(std::move(r));
    }
    for (auto& rho : out.mean_density) rho /= static_cast<double>(n_traj);

    for (std::size_t s = 0; s < names.size(); ++s) {
        SeriesStats st;
        st.name = names[s];
        for (std::size_t t = 0; t < n_rec; ++t) {
            const auto& r = total[s][t];
            st.mean.push_back(r.mean);
            st.variance.push_back(r.variance());
            st.std_error.push_back(r.std_error());
            st.ci_low.push_back(r.mean - 1.96 * r.std_error());
            st.ci_high.push_back(r.mean + 1.96 * r.std_error());
        }
        out.series.push_back(std::move(st));
    }
    std::vector<std::string> labels = model.branches.labels;
    labels.push_back("none");
    for (const auto& label : labels) {
        OutcomeStats o;
        o.label = label;
        o.count = outcomes.count(label) ? outcomes[label] : 0;
        o.frequency = static_cast<double>(o.count) / static_cast<double>(n_traj);
        o.std_error = std::sqrt(o.frequency * (1.0 - o.frequency) / static_cast<double>(n_traj));
        out.outcomes.push_back(o);
    }
    return out;
}

CMatrix projector(const CVector& psi) { return psi * psi.adjoint(); }

double trace_distance(const CMatrix& a, const CMatrix& b) {
    const CMatrix d = a - b;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
    return 0.5 * eig.eigenvalues().cwiseAbs().sum();
}

namespace {

void check_density(const CMatrix& rho0) {
    if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw ValidationError("initial density matrix is not Hermitian");
    if (std::abs(rho0.trace().real() - 1.0) > 1e-10) throw ValidationError("initial density matrix does not have unit trace");
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(rho0, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) throw ValidationError("initial density matrix is not positive semidefinite");
}

// Every RK4 stage input is Hermitian, so rho A = (A rho)^dagger for Hermitian A and only
// left products are formed.
template <class Op>
std::vector<CMatrix> rk4_lindblad(const Op& h, const Op& v, const CMatrix& rho0, double dt, long n_steps, long record_every) {
    const Index n = rho0.rows();
    if (h.rows() != n || h.cols() != n || v.rows() != n || v.cols() != n || rho0.cols() != n)
        throw ValidationError("Lindblad oracle operands have mismatched sizes");
    if (!(dt > 0.0) || n_steps < 1 || record_every < 1) throw ValidationError("Lindblad oracle needs dt > 0 and positive step counts");
    check_density(rho0);
    const cplx I(0.0, 1.0);
    const Op v2 = v * v;
    // Diagonal V: the dissipator is rho_ij -> -(v_i - v_j)^2 rho_ij / 2.
    bool diagonal = true;
    for (Index i = 0; i < n && diagonal; ++i)
        for (Index j = 0; j < n && diagonal; ++j)
            if (i != j && v.coeff(i, j) != cplx(0.0)) diagonal = false;
    CMatrix decay;
    if (diagonal) {
        decay.resize(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                const cplx d = v.coeff(i, i) - std::conj(v.coeff(j, j));
                decay(i, j) = -0.5 * d * d;
            }
    }
    CMatrix a(n, n), b(n, n);
    auto rhs = [&](const CMatrix& rho) -> CMatrix {
        a.noalias() = h * rho;
        CMatrix out = -I * a;
        out += I * a.adjoint();
        if (diagonal) {
            out += decay.cwiseProduct(rho);
            return out;
        }
        b.noalias() = v * rho;
        a.noalias() = v * b.adjoint();
        out += a;
        b.noalias() = v2 * rho;
        out -= 0.5 * b;
        out -= 0.5 * b.adjoint();
        return out;
    };
    std::vector<CMatrix> series{rho0};
    CMatrix rho = rho0;
    for (long step = 1; step <= n_steps; ++step) {
        const CMatrix k1 = rhs(rho);
        const CMatrix k2 = rhs(rho + 0.5 * dt * k1);
        const CMatrix k3 = rhs(rho + 0.5 * dt * k2);
        const CMatrix k4 = rhs(rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = 0.5 * (rho + rho.adjoint()).eval();
        if (step % record_every == 0) series.push_back(rho);
    }
    return series;
}

}  // namespace

std::vector<CMatrix> lindblad_oracle(const CMatrix& h, const CMatrix& v, const CMatrix& rho0, double dt, long n_steps,
                                     long record_every) {
    return rk4_lindblad(h, v, rho0, dt, n_steps, record_every);
}

std::vector<CMatrix> lindblad_oracle(const SparseMatrix& h, const SparseMatrix& v, const CMatrix& rho0, double dt, long n_steps,
                                     long record_every) {
    using ColSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;
    return rk4_lindblad(ColSparse(h), ColSparse(v), rho0, dt, n_steps, record_every);
}

}  // namespace clab
