#include "clab/entanglement.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "clab/errors.hpp"

namespace clab {

namespace {

struct SideLayout {
    std::vector<std::size_t> subsystems;
    std::vector<Index> strides;  // row-major within the side
    Index dim = 1;
};

SideLayout layout(const CompositeSpace& space, const std::vector<std::string>& labels) {
    SideLayout out;
    for (std::size_t k = 0; k < space.size(); ++k)
        if (std::find(labels.begin(), labels.end(), space.subsystem(k).label) != labels.end()) out.subsystems.push_back(k);
    out.strides.assign(out.subsystems.size(), 1);
    for (std::size_t i = out.subsystems.size(); i-- > 0;) {
        out.strides[i] = out.dim;
        out.dim *= space.subsystem(out.subsystems[i]).dim;
    }
    return out;
}

Index side_index(const CompositeSpace& space, const SideLayout& side, Index basis) {
    Index idx = 0;
    for (std::size_t i = 0; i < side.subsystems.size(); ++i) idx += space.level(basis, side.subsystems[i]) * side.strides[i];
    return idx;
}

}  // namespace

Bipartition Bipartition::from_side_a(const CompositeSpace& space, const std::vector<std::string>& side_a) {
    Bipartition p;
    p.side_a = side_a;
    for (const auto& sub : space.subsystems())
        if (std::find(side_a.begin(), side_a.end(), sub.label) == side_a.end()) p.side_b.push_back(sub.label);
    p.validate(space);
    return p;
}

void Bipartition::validate(const CompositeSpace& space) const {
    if (side_a.empty() || side_b.empty()) throw ValidationError("bipartition sides must both be nonempty");
    std::set<std::string> seen;
    for (const auto* side : {&side_a, &side_b})
        for (const auto& label : *side) {
            if (!space.contains(label)) throw ValidationError("bipartition names unknown subsystem '" + label + "'");
            if (!seen.insert(label).second) throw ValidationError("bipartition lists '" + label + "' twice");
        }
    if (seen.size() != space.size()) throw ValidationError("bipartition does not cover every subsystem");
}

CMatrix bipartite_matrix(const StateVector& psi, const Bipartition& partition) {
    const auto& space = psi.space();
    partition.validate(space);
    const SideLayout a = layout(space, partition.side_a);
    const SideLayout b = layout(space, partition.side_b);
    CMatrix m(a.dim, b.dim);
    for (Index s = 0; s < psi.dim(); ++s) m(side_index(space, a, s), side_index(space, b, s)) = psi[s];
    return m;
}

CMatrix reduced_density(const StateVector& psi, const Bipartition& partition) {
    const CMatrix m = bipartite_matrix(psi, partition);
    CMatrix rho = m * m.adjoint();
    return 0.5 * (rho + rho.adjoint());
}

SchmidtResult schmidt(const StateVector& psi, const Bipartition& partition) {
    const CMatrix m = bipartite_matrix(psi, partition);
    Eigen::BDCSVD<CMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SchmidtResult r;
    r.coefficients = svd.singularValues();
    r.left = svd.matrixU();
    r.right = svd.matrixV().conjugate();
    return r;
}

CVector reconstruct(const SchmidtResult& result, const CompositeSpace& space, const Bipartition& partition) {
    partition.validate(space);
    const SideLayout a = layout(space, partition.side_a);
    const SideLayout b = layout(space, partition.side_b);
    const CMatrix m = result.left * result.coefficients.cast<cplx>().asDiagonal() * result.right.transpose();
    CVector psi(space.total_dim());
    for (Index s = 0; s < psi.size(); ++s) psi[s] = m(side_index(space, a, s), side_index(space, b, s));
    return psi;
}

Eigen::VectorXd density_spectrum(const CMatrix& rho) {
    if (rho.rows() != rho.cols() || rho.rows() == 0) throw ValidationError("density matrix must be square and nonempty");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw ValidationError("density matrix is not Hermitian");
    const double tr = rho.trace().real();
    if (std::abs(tr - 1.0) > 1e-8) throw ValidationError("density matrix trace is " + format_number(tr));
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(rho, Eigen::EigenvaluesOnly);
    Eigen::VectorXd lambda = eig.eigenvalues();
    for (Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] < -1e-10) throw ValidationError("density matrix has negative eigenvalue " + format_number(lambda[i]));
        lambda[i] = std::max(lambda[i], 0.0);
    }
    return lambda;
}

double shannon_entropy(const Eigen::VectorXd& p) {
    double s = 0.0;
    for (Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s -= p[i] * std::log(p[i]);
    return std::max(s, 0.0);
}

double vn_entropy(const CMatrix& rho) { return shannon_entropy(density_spectrum(rho)); }

double vn_entropy(const SchmidtResult& result) { return shannon_entropy(result.coefficients.array().square().matrix()); }

double purity(const CMatrix& rho) { return rho.cwiseAbs2().sum(); }

double two_branch_entropy_exact(double mu) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("branch overlap must lie in [0, 1]");
    Eigen::VectorXd p(2);
    p << 0.5 * (1.0 + mu), 0.5 * (1.0 - mu);
    return shannon_entropy(p);
}

double two_branch_entropy_approx(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
    const double h = 0.5 * delta;
    return h * (1.0 - std::log(h));
}

std::string to_string(MirrorModel model) {
    return model == MirrorModel::two_mode ? "two-mode" : "displaced-gaussian";
}

MirrorModel mirror_model_from_string(const std::string& name) {
    if (name == "two-mode") return MirrorModel::two_mode;
    if (name == "displaced-gaussian") return MirrorModel::displaced_gaussian;
    throw ValidationError("unknown mirror model '" + name + "'");
}

MirrorBranches mirror_branches(double delta, MirrorModel model, const SubsystemSpec& mirror, double packet_width) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw ValidationError("delta must lie in [0, 1]");
    const double mu = 1.0 - delta;
    MirrorBranches out;
    out.mirror = mirror;
    if (model == MirrorModel::two_mode) {
        if (mirror.dim != 2) throw ValidationError("the two-mode mirror needs a 2-level subsystem");
        out.reflected = CVector::Zero(2);
        out.reflected[0] = 1.0;
        out.transmitted = CVector::Zero(2);
        out.transmitted[0] = mu;
        out.transmitted[1] = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        return out;
    }
    if (mirror.kind != SubsystemKind::lattice1d) throw ValidationError("the displaced-gaussian mirror needs a lattice subsystem");
    // Overlap of two width-a packets displaced by d is exp(-d^2 / 8a^2).
    if (mu <= 0.0) throw ValidationError("displaced Gaussians cannot realize overlap 0 (delta = 1)");
    const double a = packet_width;
    const double d = std::sqrt(-8.0 * a * a * std::log(mu));
    SubsystemSpec single = mirror;
    CompositeSpace space({single});
    const double center = mirror.x_min() + 0.5 * mirror.box_length();
    try {
        out.reflected = gaussian_packet(space, mirror.label, GaussianParams{center - 0.5 * d, a, 0.0});
        out.transmitted = gaussian_packet(space, mirror.label, GaussianParams{center + 0.5 * d, a, 0.0});
    } catch (const ValidationError& e) {
        throw ValidationError("delta = " + format_number(delta) + " is unrealizable on the mirror grid: " + e.what());
    }
    return out;
}

MirrorBranches mirror_branches(double delta, MirrorModel model, const MirrorGeometry& geometry) {
    if (model == MirrorModel::two_mode) return mirror_branches(delta, model, SubsystemSpec{"mirror", SubsystemKind::discrete, 2, 1.0, 0.0, false, {}}, 1.0);
    return mirror_branches(delta, model,
                           SubsystemSpec{"mirror", SubsystemKind::lattice1d, geometry.sites, 1.0, geometry.grid_spacing, false, {}},
                           geometry.packet_width);
}

TwoBranchState build_two_branch_state(double delta, MirrorModel model, const MirrorGeometry& geometry) {
    MirrorBranches b = mirror_branches(delta, model, geometry);
    const double overlap = std::abs(b.reflected.dot(b.transmitted));
    if (std::abs(overlap - (1.0 - delta)) > 1e-6)
        throw ValidationError("delta = " + format_number(delta) + " is unrealizable: constructed overlap " + format_number(overlap));
    auto space = make_space({SubsystemSpec{"photon", SubsystemKind::discrete, 2, 1.0, 0.0, false, {}}, b.mirror});
    CVector e0 = CVector::Zero(2), e1 = CVector::Zero(2);
    e0[0] = 1.0;
    e1[1] = 1.0;
    CVector psi = (kron(e0, b.reflected) + kron(e1, b.transmitted)) / std::sqrt(2.0);
    return TwoBranchState{StateVector(std::move(space), std::move(psi)), overlap};
}

}  // namespace clab
