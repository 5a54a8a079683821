#include "clab/operators.hpp"

#include <cmath>
#include <sstream>

#include "clab/errors.hpp"

namespace clab {

namespace {

using Triplet = Eigen::Triplet<cplx>;

constexpr double kHermitianTol = 1e-12;

double induced_inf_norm(const SparseMatrix& m) {
    double best = 0.0;
    for (Index r = 0; r < m.outerSize(); ++r) {
        double row = 0.0;
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) row += std::abs(it.value());
        best = std::max(best, row);
    }
    return best;
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_finite(const SparseMatrix& m, const std::string& what) {
    for (Index r = 0; r < m.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(m, r); it; ++it)
            if (!std::isfinite(it.value().real()) || !std::isfinite(it.value().imag()))
                throw ValidationError(what + " has a non-finite matrix element");
}

}  // namespace

double max_abs(const SparseMatrix& m) {
    double best = 0.0;
    for (Index r = 0; r < m.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) best = std::max(best, std::abs(it.value()));
    return best;
}

double hermiticity_defect(const SparseMatrix& m) {
    SparseMatrix adj = m.adjoint();
    SparseMatrix diff = m - adj;
    return max_abs(diff);
}

AssembledOperator::AssembledOperator(SpacePtr space, SparseMatrix matrix, bool hermitian)
    : space_(std::move(space)), matrix_(std::move(matrix)), hermitian_(hermitian) {
    if (!space_) throw ValidationError("operator needs a space");
    if (matrix_.rows() != space_->total_dim() || matrix_.cols() != space_->total_dim())
        throw ValidationError("operator size does not match space dimension " + std::to_string(space_->total_dim()));
    matrix_.makeCompressed();
    if (hermitian_) {
        const double scale = std::max(1.0, max_abs(matrix_));
        const double defect = hermiticity_defect(matrix_);
        if (defect >= kHermitianTol * scale)
            throw ValidationError("operator flagged Hermitian has |M - M^dagger|_max = " + format_number(defect));
    }
    norm_bound_ = induced_inf_norm(matrix_);
}

AssembledOperator AssembledOperator::zero(SpacePtr space) {
    const Index n = space->total_dim();
    return AssembledOperator(std::move(space), SparseMatrix(n, n), true);
}

AssembledOperator AssembledOperator::identity(SpacePtr space) {
    const Index n = space->total_dim();
    SparseMatrix id(n, n);
    id.setIdentity();
    return AssembledOperator(std::move(space), std::move(id), true);
}

AssembledOperator AssembledOperator::from_dense(SpacePtr space, const CMatrix& matrix, bool hermitian) {
    SparseMatrix sparse = matrix.sparseView();
    return AssembledOperator(std::move(space), std::move(sparse), hermitian);
}

AssembledOperator AssembledOperator::scaled(double factor) const {
    return AssembledOperator(space_, SparseMatrix(matrix_ * cplx(factor, 0.0)), hermitian_);
}

AssembledOperator AssembledOperator::operator+(const AssembledOperator& other) const {
    if (!(*space_ == *other.space_)) throw ValidationError("cannot add operators on different spaces");
    return AssembledOperator(space_, SparseMatrix(matrix_ + other.matrix_), hermitian_ && other.hermitian_);
}

bool is_hermitian_local(const CMatrix& m, double tol) {
    if (m.rows() != m.cols()) return false;
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

CMatrix kinetic_matrix(const SubsystemSpec& sub, double mass) {
    if (!sub.is_lattice()) throw ValidationError("kinetic term needs a lattice subsystem, got '" + sub.label + "'");
    if (!(mass > 0.0)) throw ValidationError("kinetic term on '" + sub.label + "' needs a positive mass");
    const Index n = sub.dim;
    const double c = kHbar * kHbar / (2.0 * mass * sub.grid_spacing * sub.grid_spacing);
    CMatrix k = CMatrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        k(j, j) += 2.0 * c;
        if (j + 1 < n) k(j, j + 1) -= c;
        else if (sub.periodic) k(j, 0) -= c;
        if (j > 0) k(j, j - 1) -= c;
        else if (sub.periodic) k(j, n - 1) -= c;
    }
    return k;
}

CMatrix local_operator(const SubsystemSpec& sub, const LocalOp& op) {
    const Index n = sub.dim;
    if (op.matrix) {
        if (op.matrix->rows() != n || op.matrix->cols() != n)
            throw ValidationError("operator matrix for '" + sub.label + "' must be " + std::to_string(n) + "x" + std::to_string(n));
        return *op.matrix;
    }
    const std::string& name = op.name;
    const cplx I(0.0, 1.0);
    auto need_dim2 = [&] {
        if (n != 2) throw ValidationError("operator '" + name + "' needs a two-level subsystem, '" + sub.label + "' has dim " + std::to_string(n));
    };
    auto need_lattice = [&] {
        if (!sub.is_lattice()) throw ValidationError("operator '" + name + "' needs a lattice subsystem, got '" + sub.label + "'");
    };
    CMatrix m = CMatrix::Zero(n, n);
    if (name == "identity") {
        m.setIdentity();
    } else if (name == "sigma_x") {
        need_dim2();
        m << 0, 1, 1, 0;
    } else if (name == "sigma_y") {
        need_dim2();
        m << 0, -I, I, 0;
    } else if (name == "sigma_z") {
        need_dim2();
        m << 1, 0, 0, -1;
    } else if (name == "spin_z") {
        const double s = 0.5 * static_cast<double>(n - 1);
        for (Index j = 0; j < n; ++j) m(j, j) = s - static_cast<double>(j);
    } else if (name == "number") {
        for (Index j = 0; j < n; ++j) m(j, j) = static_cast<double>(j);
    } else if (name.rfind("projector:", 0) == 0) {
        Index k = -1;
        try {
            k = std::stol(name.substr(10));
        } catch (const std::exception&) {
        }
        if (k < 0 || k >= n) throw ValidationError("bad projector level in '" + name + "' for '" + sub.label + "'");
        m(k, k) = 1.0;
    } else if (name == "position") {
        need_lattice();
        for (Index j = 0; j < n; ++j) m(j, j) = sub.position(j);
    } else if (name == "momentum") {
        need_lattice();
        const cplx c = -I * kHbar / (2.0 * sub.grid_spacing);
        for (Index j = 0; j < n; ++j) {
            if (j + 1 < n) m(j, j + 1) += c;
            else if (sub.periodic) m(j, 0) += c;
            if (j > 0) m(j, j - 1) -= c;
            else if (sub.periodic) m(j, n - 1) -= c;
        }
    } else if (name == "shift") {
        need_lattice();
        // (T psi)_j = psi_{j+1}: T = exp(i p dx), so <T> = exp(i k dx) on a plane wave.
        for (Index j = 0; j < n; ++j) m(j, (j + 1) % n) = 1.0;
    } else {
        throw ValidationError("unknown local operator '" + name + "'");
    }
    return m;
}

SparseMatrix embed_product(const CompositeSpace& space, const std::vector<std::pair<std::size_t, CMatrix>>& factors) {
    const Index dim = space.total_dim();
    // Columns of the product are built by walking each factor's nonzeros column by column.
    struct Entry {
        Index row;
        cplx value;
    };
    std::vector<std::vector<std::vector<Entry>>> columns;  // factor -> column level -> entries
    for (const auto& [k, op] : factors) {
        const auto& sub = space.subsystem(k);
        if (op.rows() != sub.dim || op.cols() != sub.dim) throw ValidationError("local operator size mismatch on '" + sub.label + "'");
        std::vector<std::vector<Entry>> cols(sub.dim);
        for (Index c = 0; c < sub.dim; ++c)
            for (Index r = 0; r < sub.dim; ++r)
                if (op(r, c) != cplx(0.0)) cols[c].push_back({r, op(r, c)});
        columns.push_back(std::move(cols));
    }
    for (std::size_t a = 0; a < factors.size(); ++a)
        for (std::size_t b = a + 1; b < factors.size(); ++b)
            if (factors[a].first == factors[b].first) throw ValidationError("embed_product needs distinct subsystems");

    std::vector<Triplet> triplets;
    std::vector<std::pair<Index, cplx>> acc, next;
    for (Index col = 0; col < dim; ++col) {
        acc.assign(1, {col, cplx(1.0)});
        for (std::size_t f = 0; f < factors.size(); ++f) {
            const std::size_t k = factors[f].first;
            const Index stride = space.stride(k);
            const Index level = space.level(col, k);
            next.clear();
            for (const auto& [row, v] : acc)
                for (const auto& e : columns[f][level]) next.push_back({row + (e.row - level) * stride, v * e.value});
            acc.swap(next);
        }
        for (const auto& [row, v] : acc) triplets.emplace_back(row, col, v);
    }
    SparseMatrix m(dim, dim);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

SparseMatrix embed_local(const CompositeSpace& space, std::size_t k, const CMatrix& op) {
    return embed_product(space, {{k, op}});
}

double PairPotential::operator()(double r) const {
    switch (family) {
        case Family::gaussian: return strength * std::exp(-r * r / (2.0 * range * range));
        case Family::soft_coulomb: return strength / std::sqrt(r * r + range * range);
        case Family::square_barrier: return std::abs(r) <= range ? strength : 0.0;
        case Family::tabulated: {
            if (table.empty()) return std::numeric_limits<double>::quiet_NaN();
            const double u = (r - table_start) / table_step;
            const double last = static_cast<double>(table.size() - 1);
            if (!(u >= -1e-9 && u <= last + 1e-9)) return std::numeric_limits<double>::quiet_NaN();
            const double uc = std::clamp(u, 0.0, last);
            const auto k = std::min(static_cast<std::size_t>(uc), table.size() - 1);
            if (k + 1 >= table.size()) return table.back();
            const double f = uc - static_cast<double>(k);
            return (1.0 - f) * table[k] + f * table[k + 1];
        }
    }
    return 0.0;
}

std::string to_string(PairPotential::Family family) {
    switch (family) {
        case PairPotential::Family::gaussian: return "gaussian";
        case PairPotential::Family::soft_coulomb: return "soft_coulomb";
        case PairPotential::Family::square_barrier: return "square_barrier";
        case PairPotential::Family::tabulated: return "tabulated";
    }
    return "gaussian";
}

PairPotential::Family pair_family_from_string(const std::string& name) {
    if (name == "gaussian") return PairPotential::Family::gaussian;
    if (name == "soft_coulomb") return PairPotential::Family::soft_coulomb;
    if (name == "square_barrier") return PairPotential::Family::square_barrier;
    if (name == "tabulated") return PairPotential::Family::tabulated;
    throw ValidationError("unknown pair potential family '" + name + "'");
}

CouplingTerm spin_coupling(const std::string& spin, const std::string& pointer, double strength) {
    return CouplingTerm{spin, LocalOp{"sigma_z", {}}, pointer, LocalOp{"position", {}}, strength, true};
}

bool OperatorSpec::has_external_terms() const {
    for (const auto& t : terms)
        if (std::holds_alternative<ExternalTerm>(t)) return true;
    return false;
}

bool OperatorSpec::has_interactions() const {
    for (const auto& t : terms)
        if (std::holds_alternative<InteractionTerm>(t) || std::holds_alternative<CouplingTerm>(t)) return true;
    return false;
}

namespace {

void check_pair(const CompositeSpace& space, const std::string& a, const std::string& b) {
    space.index_of(a);
    space.index_of(b);
    if (a == b) throw ValidationError("interaction term must reference two distinct subsystems, got '" + a + "' twice");
}

}  // namespace

void validate(const OperatorSpec& spec, const CompositeSpace& space) {
    for (const auto& term : spec.terms) {
        std::visit(overloaded{
                       [&](const KineticTerm& t) {
                           const auto& sub = space.subsystem(t.subsystem);
                           if (!sub.is_lattice()) throw ValidationError("kinetic term needs a lattice subsystem, got '" + sub.label + "'");
                           if (t.mass && !(*t.mass > 0.0)) throw ValidationError("kinetic mass must be positive");
                       },
                       [&](const ExternalTerm& t) {
                           const auto& sub = space.subsystem(t.subsystem);
                           if (t.matrix) {
                               if (!is_hermitian_local(*t.matrix)) throw ValidationError("external matrix on '" + sub.label + "' is not Hermitian");
                               if (t.matrix->rows() != sub.dim) throw ValidationError("external matrix on '" + sub.label + "' has wrong size");
                           } else if (static_cast<Index>(t.diagonal.size()) != sub.dim) {
                               throw ValidationError("external samples on '" + sub.label + "' must have length " + std::to_string(sub.dim));
                           }
                       },
                       [&](const InteractionTerm& t) {
                           check_pair(space, t.subsystem_i, t.subsystem_j);
                           const auto& a = space.subsystem(t.subsystem_i);
                           const auto& b = space.subsystem(t.subsystem_j);
                           if (!a.is_lattice() || !b.is_lattice())
                               throw ValidationError("pair potential between '" + a.label + "' and '" + b.label + "' needs two lattices");
                           if (a.periodic != b.periodic)
                               throw ValidationError("pair potential mixes periodic and hard-wall lattices");
                           if (a.periodic && (a.dim != b.dim || a.grid_spacing != b.grid_spacing))
                               throw ValidationError("periodic pair potential needs identical lattice geometry");
                       },
                       [&](const CouplingTerm& t) {
                           check_pair(space, t.subsystem_i, t.subsystem_j);
                           const auto ai = local_operator(space.subsystem(t.subsystem_i), t.op_i);
                           const auto bj = local_operator(space.subsystem(t.subsystem_j), t.op_j);
                           if (!is_hermitian_local(ai) || !is_hermitian_local(bj))
                               throw ValidationError("coupling factors must be Hermitian");
                           if (!std::isfinite(t.strength)) throw ValidationError("coupling strength must be finite");
                       },
                   },
                   term);
    }
}

SparseMatrix interaction_matrix(const InteractionTerm& t, const CompositeSpace& space) {
    const std::size_t ki = space.index_of(t.subsystem_i);
    const std::size_t kj = space.index_of(t.subsystem_j);
    const auto& a = space.subsystem(ki);
    const auto& b = space.subsystem(kj);
    // Tabulate V over site pairs. On periodic grids V depends only on (i - j) mod n.
    CMatrix pair(a.dim, b.dim);
    if (a.periodic) {
        const Index n = a.dim;
        const double box = a.box_length();
        const double offset = a.x_min() - b.x_min();
        std::vector<double> by_diff(n);
        for (Index d = 0; d < n; ++d) {
            double r = static_cast<double>(d) * a.grid_spacing + offset;
            r -= box * std::floor(r / box + 0.5);
            by_diff[d] = t.potential(r);
        }
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) pair(i, j) = by_diff[((i - j) % n + n) % n];
    } else {
        for (Index i = 0; i < a.dim; ++i)
            for (Index j = 0; j < b.dim; ++j) pair(i, j) = t.potential(a.position(i) - b.position(j));
    }
    for (Index i = 0; i < pair.rows(); ++i)
        for (Index j = 0; j < pair.cols(); ++j)
            if (!std::isfinite(pair(i, j).real()))
                throw ValidationError("pair potential between '" + a.label + "' and '" + b.label + "' is not finite at sites (" +
                                      std::to_string(i) + ", " + std::to_string(j) + ")");
    const Index dim = space.total_dim();
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(dim));
    for (Index s = 0; s < dim; ++s) {
        const cplx v = pair(space.level(s, ki), space.level(s, kj));
        if (v != cplx(0.0)) triplets.emplace_back(s, s, v);
    }
    SparseMatrix m(dim, dim);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

SparseMatrix coupling_matrix(const CouplingTerm& t, const CompositeSpace& space) {
    const std::size_t ki = space.index_of(t.subsystem_i);
    const std::size_t kj = space.index_of(t.subsystem_j);
    CMatrix a = local_operator(space.subsystem(ki), t.op_i) * t.strength;
    CMatrix b = local_operator(space.subsystem(kj), t.op_j);
    return embed_product(space, {{ki, a}, {kj, b}});
}

AssembledOperator assemble_hamiltonian(const OperatorSpec& spec, SpacePtr space) {
    validate(spec, *space);
    const Index dim = space->total_dim();
    SparseMatrix h(dim, dim);
    for (const auto& term : spec.terms) {
        std::visit(overloaded{
                       [&](const KineticTerm& t) {
                           const std::size_t k = space->index_of(t.subsystem);
                           const auto& sub = space->subsystem(k);
                           h += embed_local(*space, k, kinetic_matrix(sub, t.mass.value_or(sub.mass)));
                       },
                       [&](const ExternalTerm& t) {
                           const std::size_t k = space->index_of(t.subsystem);
                           CMatrix local;
                           if (t.matrix) {
                               local = *t.matrix;
                           } else {
                               local = CMatrix::Zero(space->subsystem(k).dim, space->subsystem(k).dim);
                               for (std::size_t j = 0; j < t.diagonal.size(); ++j) {
                                   if (!std::isfinite(t.diagonal[j])) throw ValidationError("external potential sample is not finite");
                                   local(static_cast<Index>(j), static_cast<Index>(j)) = t.diagonal[j];
                               }
                           }
                           h += embed_local(*space, k, local);
                       },
                       [&](const InteractionTerm& t) {
                           if (t.in_hamiltonian) h += interaction_matrix(t, *space);
                       },
                       [&](const CouplingTerm& t) {
                           if (t.in_hamiltonian) h += coupling_matrix(t, *space);
                       },
                   },
                   term);
    }
    require_finite(h, "Hamiltonian");
    h.prune(cplx(0.0));
    return AssembledOperator(std::move(space), std::move(h), true);
}

AssembledOperator scaled_interaction_sum(const OperatorSpec& spec, SpacePtr space) {
    validate(spec, *space);
    const Index dim = space->total_dim();
    SparseMatrix v(dim, dim);
    for (const auto& term : spec.terms) {
        if (const auto* t = std::get_if<InteractionTerm>(&term)) {
            const double m = space->subsystem(t->subsystem_i).mass + space->subsystem(t->subsystem_j).mass;
            v += interaction_matrix(*t, *space) * cplx(1.0 / m, 0.0);
        } else if (const auto* c = std::get_if<CouplingTerm>(&term)) {
            const double m = space->subsystem(c->subsystem_i).mass + space->subsystem(c->subsystem_j).mass;
            v += coupling_matrix(*c, *space) * cplx(1.0 / m, 0.0);
        }
    }
    require_finite(v, "scaled interaction sum");
    v.prune(cplx(0.0));
    return AssembledOperator(std::move(space), std::move(v), true);
}

void CollapseParams::validate() const {
    if (!(c_scale > 0.0) || !std::isfinite(c_scale)) throw ValidationError("c_scale must be positive and finite");
    if (!(tau0 > 0.0) || !std::isfinite(tau0)) throw ValidationError("tau0 must be positive and finite");
}

AssembledOperator collapse_operator(const AssembledOperator& vprime, const CollapseParams& params) {
    params.validate();
    if (!vprime.hermitian()) throw ValidationError("collapse operator needs a Hermitian interaction sum");
    return vprime.scaled(1.0 / (params.c_scale * params.c_scale * std::sqrt(params.tau0)));
}

double beta_apply(const SparseMatrix& v, const CVector& psi, CVector& out) {
    out.noalias() = v * psi;
    const double mean = psi.dot(out).real();
    out -= mean * psi;
    return mean;
}

BetaResult beta_apply(const AssembledOperator& v, const StateVector& psi) {
    if (!v.hermitian()) throw ValidationError("beta needs a Hermitian collapse operator");
    if (v.dim() != psi.dim()) throw ValidationError("collapse operator and state have different dimensions");
    BetaResult r;
    const cplx mean = psi.amplitudes().dot(v.apply(psi.amplitudes()));
    if (std::abs(mean.imag()) > 1e-10 * std::max(1.0, std::abs(mean)))
        throw NumericalError("<V> has imaginary part " + format_number(mean.imag()));
    r.v_mean = beta_apply(v.matrix(), psi.amplitudes(), r.vector);
    return r;
}

}  // namespace clab
