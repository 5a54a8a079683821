#include "clab/conservation.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "clab/errors.hpp"

namespace clab {

std::string to_string(QuantityKind kind) {
    switch (kind) {
        case QuantityKind::energy: return "energy";
        case QuantityKind::total_quasimomentum: return "total_quasimomentum";
        case QuantityKind::spin_z: return "spin_z";
        case QuantityKind::custom: return "custom";
    }
    return "custom";
}

QuantityKind quantity_kind_from_string(const std::string& name) {
    if (name == "energy") return QuantityKind::energy;
    if (name == "total_quasimomentum") return QuantityKind::total_quasimomentum;
    if (name == "spin_z") return QuantityKind::spin_z;
    if (name == "custom") return QuantityKind::custom;
    throw ValidationError("unknown quantity kind '" + name + "'");
}

std::string to_string(ConservationClass c) {
    switch (c) {
        case ConservationClass::exact: return "exact";
        case ConservationClass::martingale: return "martingale";
        case ConservationClass::lindblad_governed: return "lindblad-governed";
    }
    return "lindblad-governed";
}

cplx expectation(const AssembledOperator& q, const StateVector& psi) {
    if (q.dim() != psi.dim()) throw ValidationError("operator and state dimensions differ");
    cplx value = psi.amplitudes().dot(q.apply(psi.amplitudes()));
    if (q.hermitian()) {
        if (std::abs(value.imag()) > 1e-10 * std::max(1.0, std::abs(value)))
            throw NumericalError("Hermitian expectation has imaginary part " + format_number(value.imag()));
        value = cplx(value.real(), 0.0);
    }
    return value;
}

cplx expectation(const ConservedQuantity& q, const StateVector& psi) { return expectation(q.op, psi); }

double subsystem_marginal(const CMatrix& q_single, std::string_view subsystem, const StateVector& psi) {
    const auto& space = psi.space();
    const std::size_t k = space.index_of(subsystem);
    if (!is_hermitian_local(q_single)) throw ValidationError("marginal operator must be Hermitian");
    const SparseMatrix q = embed_local(space, k, q_single);
    return psi.amplitudes().dot(q * psi.amplitudes()).real();
}

AssembledOperator total_shift_generator(SpacePtr space) {
    std::vector<std::pair<std::size_t, CMatrix>> factors;
    for (std::size_t k = 0; k < space->size(); ++k)
        if (space->subsystem(k).is_lattice()) factors.emplace_back(k, local_operator(space->subsystem(k), "shift"));
    if (factors.empty()) throw ValidationError("total shift generator needs at least one lattice subsystem");
    SparseMatrix t = embed_product(*space, factors);
    return AssembledOperator(std::move(space), std::move(t), false);
}

double quasi_momentum(cplx shift_expectation, double grid_spacing) { return std::arg(shift_expectation) / grid_spacing; }

StateVector project_shift_sector(const StateVector& psi, long q) {
    const auto t = total_shift_generator(psi.space_ptr());
    long period = 1;
    for (const auto& sub : psi.space().subsystems())
        if (sub.is_lattice()) period = std::lcm(period, static_cast<long>(sub.dim));
    const double k = 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(period);
    CVector acc = CVector::Zero(psi.dim());
    CVector shifted = psi.amplitudes();
    for (long s = 0; s < period; ++s) {
        acc += std::polar(1.0, -k * static_cast<double>(s)) * shifted;
        shifted = t.apply(shifted);
    }
    if (acc.norm() < 1e-12) throw ValidationError("state has no weight in shift sector " + std::to_string(q));
    return StateVector(psi.space_ptr(), acc);
}

CommutatorCertificate commutator_certificate(const AssembledOperator& a, const AssembledOperator& b, double tolerance) {
    if (a.dim() != b.dim()) throw ValidationError("commutator operands have different dimensions");
    SparseMatrix ab = a.matrix() * b.matrix();
    SparseMatrix ba = b.matrix() * a.matrix();
    SparseMatrix c = ab - ba;
    CommutatorCertificate cert;
    cert.max_norm = max_abs(c);
    cert.tolerance = tolerance;
    cert.pass = cert.max_norm <= tolerance;
    return cert;
}

namespace {

const ComplexSeries& require_series(const TrajectoryRecord& rec, const std::string& name) {
    for (const auto& s : rec.observables)
        if (s.name == name) return s;
    throw ValidationError("trajectory record has no observable series '" + name + "'");
}

bool in_eigenspace(const ConservedQuantity& q, const StateVector& psi, double tol) {
    const CVector qpsi = q.op.apply(psi.amplitudes());
    const cplx mean = psi.amplitudes().dot(qpsi);
    // |Q psi - <Q> psi| vanishes exactly on eigenvectors.
    return (qpsi - mean * psi.amplitudes()).norm() <= tol * std::max(1.0, q.op.norm_bound());
}

std::vector<std::size_t> checkpoint_indices(std::size_t n_times, std::size_t wanted = 10) {
    std::vector<std::size_t> idx;
    if (n_times < 2) return idx;
    const std::size_t m = std::min(wanted, n_times - 1);
    for (std::size_t i = 1; i <= m; ++i) idx.push_back(i * (n_times - 1) / m);
    return idx;
}

}  // namespace

AuditReport audit_trajectories(const std::vector<TrajectoryRecord>& records, const std::vector<ConservedQuantity>& quantities,
                               const AuditContext& ctx) {
    if (ctx.has_external_terms)
        throw AuditError("refusing to certify conservation: configuration contains external potential terms");
    if (records.empty()) throw ValidationError("audit needs at least one trajectory record");

    AuditReport report;
    report.scenario = ctx.scenario;
    report.n_traj = static_cast<long>(records.size());
    const auto& times = records.front().times;
    const IntegrationPlan& plan = records.front().plan;
    for (const auto& r : records)
        if (r.times.size() != times.size()) throw ValidationError("trajectory records have different lengths");

    const bool oracle_feasible = ctx.hamiltonian.dim() <= kOracleDimLimit && records.size() >= 2;
    std::vector<CMatrix> oracle;
    auto ensure_oracle = [&] {
        if (!oracle.empty()) return;
        // RK4 substeps per record interval: h times the largest generator rate stays below 1,
        // where coherences decay at up to (V_i - V_j)^2 / 2 <= 2 |V|^2.
        const double interval = plan.dt * static_cast<double>(plan.record_every);
        const double scale = ctx.hamiltonian.norm_bound() + 2.0 * ctx.collapse.norm_bound() * ctx.collapse.norm_bound();
        const long substeps = std::max(1L, static_cast<long>(std::ceil(interval * scale)));
        oracle = lindblad_oracle(ctx.hamiltonian.matrix(), ctx.collapse.matrix(), projector(ctx.initial.amplitudes()),
                                 interval / static_cast<double>(substeps), substeps * static_cast<long>(times.size() - 1), substeps);
    };

    for (const auto& q : quantities) {
        QuantityAudit qa;
        qa.name = q.name;
        qa.kind = q.kind;
        qa.with_hamiltonian = commutator_certificate(ctx.hamiltonian, q.op, ctx.commutator_tolerance * std::max(1.0, ctx.hamiltonian.norm_bound()));
        qa.with_collapse = commutator_certificate(ctx.collapse, q.op, ctx.commutator_tolerance * std::max(1.0, ctx.collapse.norm_bound()));
        qa.initial_value = expectation(q, ctx.initial);

        std::vector<const ComplexSeries*> series;
        for (const auto& r : records) series.push_back(&require_series(r, q.name));
        for (const auto* s : series) {
            double drift = 0.0;
            for (const auto& v : s->values) drift = std::max(drift, std::abs(v - s->values.front()));
            qa.per_trajectory_drift.push_back(drift);
        }

        const bool commutes = qa.with_hamiltonian.pass && qa.with_collapse.pass;
        if (commutes && in_eigenspace(q, ctx.initial, 1e-10)) {
            qa.classification = ConservationClass::exact;
            qa.asserted = true;
            qa.tolerance = kExactDriftTolerance;
            qa.criterion = "per-trajectory max |q(t) - q(0)| below tolerance";
            for (double d : qa.per_trajectory_drift) qa.pass = qa.pass && d < kExactDriftTolerance;
        } else if (commutes) {
            qa.classification = ConservationClass::martingale;
            qa.criterion = "ensemble mean of q(T) - q(0) within 3 standard errors of 0";
            qa.tolerance = kStatisticalSigmas;
            if (records.size() >= 2) {
                qa.asserted = true;
                const std::size_t last = times.size() - 1;
                for (int part = 0; part < (q.unitary ? 2 : 1); ++part) {
                    RunningStats st;
                    for (const auto* s : series) {
                        const cplx d = s->values[last] - s->values.front();
                        st.add(part == 0 ? d.real() : d.imag());
                    }
                    CheckpointComparison c{times[last], st.mean, st.std_error(), 0.0, false};
                    c.pass = std::abs(st.mean) <= kStatisticalSigmas * st.std_error() + 1e-12;
                    qa.pass = qa.pass && c.pass;
                    qa.checkpoints.push_back(c);
                }
            }
        } else {
            qa.classification = ConservationClass::lindblad_governed;
            qa.criterion = "ensemble mean of q(t) matches the Lindblad oracle within 3 standard errors at 10 checkpoints";
            qa.tolerance = kStatisticalSigmas;
            if (oracle_feasible && !q.unitary) {
                qa.asserted = true;
                ensure_oracle();
                const CMatrix qd = q.op.dense();
                for (std::size_t t : checkpoint_indices(times.size())) {
                    RunningStats st;
                    for (const auto* s : series) st.add(s->values[t].real());
                    const double predicted = (qd * oracle[t]).trace().real();
                    CheckpointComparison c{times[t], st.mean, st.std_error(), predicted, false};
                    c.pass = std::abs(st.mean - predicted) <= kStatisticalSigmas * st.std_error() + 1e-9;
                    qa.pass = qa.pass && c.pass;
                    qa.checkpoints.push_back(c);
                }
            }
        }
        report.pass = report.pass && qa.pass;

        // Branch-conditional totals. For any event A, |E[X|A] - E[X]| <= sd(X) sqrt((1 - P(A)) / P(A)),
        // and the spread of <Q> across trajectories is at most the oracle's quantum spread of Q.
        if (!ctx.branches.empty() && oracle_feasible && !q.unitary) {
            ensure_oracle();
            const CMatrix qd = q.op.dense();
            const std::size_t last = times.size() - 1;
            const double predicted = (qd * oracle[last]).trace().real();
            const double second = (qd * qd * oracle[last]).trace().real();
            const double spread = std::sqrt(std::max(0.0, second - predicted * predicted));
            for (const auto& label : ctx.branches.labels) {
                BranchTotal bt;
                bt.quantity = q.name;
                bt.branch = label;
                bt.initial = qa.initial_value.real();
                RunningStats st;
                for (std::size_t i = 0; i < records.size(); ++i)
                    if (records[i].collapsed_branch == label) st.add(series[i]->values[last].real());
                bt.count = st.count;
                if (bt.count < 2) continue;
                bt.mean = st.mean;
                bt.std_error = st.std_error();
                // P(A) enters through its 3-sigma lower confidence bound; two-valued Q saturates the inequality.
                const double n = static_cast<double>(records.size());
                const double p_hat = static_cast<double>(bt.count) / n;
                const double p = std::max(p_hat - kStatisticalSigmas * std::sqrt(p_hat * (1.0 - p_hat) / n), 1.0 / n);
                bt.oracle_prediction = predicted;
                bt.selection_allowance = spread * std::sqrt((1.0 - p) / p);
                bt.bound = std::abs(predicted - bt.initial) + bt.selection_allowance + kStatisticalSigmas * bt.std_error + 1e-9;
                bt.pass = std::abs(bt.mean - bt.initial) <= bt.bound;
                report.pass = report.pass && bt.pass;
                report.branch_totals.push_back(bt);
            }
        }
        report.quantities.push_back(std::move(qa));
    }

    // Exchange bookkeeping for everything else that was recorded.
    for (const auto& s : records.front().observables) {
        bool audited = false;
        for (const auto& q : quantities) audited = audited || q.name == s.name;
        if (audited || s.is_complex) continue;
        RunningStats first, last;
        for (const auto& r : records) {
            const auto& v = require_series(r, s.name).values;
            first.add(v.front().real());
            last.add(v.back().real());
        }
        report.marginals.push_back({s.name, first.mean, last.mean, last.std_error()});
    }
    return report;
}

std::string summarize(const AuditReport& report) {
    std::ostringstream out;
    out << "audit of '" << report.scenario << "' over " << report.n_traj << " trajectories: " << (report.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& q : report.quantities) {
        double max_drift = 0.0;
        for (double d : q.per_trajectory_drift) max_drift = std::max(max_drift, d);
        out << "  " << q.name << " [" << to_string(q.kind) << "] " << to_string(q.classification)
            << "  |[H,Q]|=" << q.with_hamiltonian.max_norm << " |[V,Q]|=" << q.with_collapse.max_norm
            << "  max drift=" << max_drift << "  ";
        if (!q.asserted) out << "not asserted";
        else out << (q.pass ? "pass" : "FAIL") << " (" << q.criterion << ")";
        out << "\n";
    }
    for (const auto& b : report.branch_totals)
        out << "  branch " << b.branch << ": <" << b.quantity << "> = " << b.mean << " +/- " << b.std_error << " (n=" << b.count
            << "), initial " << b.initial << ", bound " << b.bound << " (oracle drift " << b.oracle_prediction - b.initial
            << ", selection " << b.selection_allowance << ")  " << (b.pass ? "pass" : "FAIL") << "\n";
    for (const auto& m : report.marginals)
        out << "  marginal " << m.name << ": " << m.initial_mean << " -> " << m.final_mean << " +/- " << m.final_std_error << "\n";
    return out.str();
}

}  // namespace clab
