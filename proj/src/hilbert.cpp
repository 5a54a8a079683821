#include "clab/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "clab/errors.hpp"

namespace clab {

std::string to_string(SubsystemKind kind) {
    switch (kind) {
        case SubsystemKind::lattice1d: return "lattice1d";
        case SubsystemKind::spin: return "spin";
        case SubsystemKind::discrete: return "discrete";
    }
    return "discrete";
}

SubsystemKind subsystem_kind_from_string(std::string_view name) {
    if (name == "lattice1d") return SubsystemKind::lattice1d;
    if (name == "spin") return SubsystemKind::spin;
    if (name == "discrete") return SubsystemKind::discrete;
    throw ValidationError("unknown subsystem kind '" + std::string(name) + "'");
}

double SubsystemSpec::x_min() const {
    if (origin) return *origin;
    return -static_cast<double>(dim / 2) * grid_spacing;
}

Eigen::VectorXd SubsystemSpec::positions() const {
    Eigen::VectorXd x(dim);
    for (Index j = 0; j < dim; ++j) x[j] = position(j);
    return x;
}

CompositeSpace::CompositeSpace(std::vector<SubsystemSpec> subsystems) : subsystems_(std::move(subsystems)) {
    if (subsystems_.empty()) throw ValidationError("composite space needs at least one subsystem");
    std::set<std::string> labels;
    for (const auto& s : subsystems_) {
        if (s.label.empty()) throw ValidationError("subsystem label must be nonempty");
        if (!labels.insert(s.label).second) throw ValidationError("duplicate subsystem label '" + s.label + "'");
        if (s.dim < 1) throw ValidationError("subsystem '" + s.label + "': dim must be positive");
        if (!(s.mass > 0.0) || !std::isfinite(s.mass))
            throw ValidationError("subsystem '" + s.label + "': mass must be positive and finite");
        if (s.is_lattice()) {
            if (s.dim < 2) throw ValidationError("lattice '" + s.label + "': dim must be at least 2");
            if (!(s.grid_spacing > 0.0) || !std::isfinite(s.grid_spacing))
                throw ValidationError("lattice '" + s.label + "': grid_spacing must be positive");
        }
    }
    strides_.assign(subsystems_.size(), 1);
    for (std::size_t k = subsystems_.size(); k-- > 0;) {
        strides_[k] = total_dim_;
        if (total_dim_ > (Index{1} << 40) / subsystems_[k].dim) throw ValidationError("composite space too large");
        total_dim_ *= subsystems_[k].dim;
    }
}

std::size_t CompositeSpace::index_of(std::string_view label) const {
    for (std::size_t k = 0; k < subsystems_.size(); ++k)
        if (subsystems_[k].label == label) return k;
    throw ValidationError("unknown subsystem '" + std::string(label) + "'");
}

bool CompositeSpace::contains(std::string_view label) const {
    for (const auto& s : subsystems_)
        if (s.label == label) return true;
    return false;
}

bool CompositeSpace::operator==(const CompositeSpace& other) const {
    if (subsystems_.size() != other.subsystems_.size()) return false;
    for (std::size_t k = 0; k < subsystems_.size(); ++k) {
        const auto& a = subsystems_[k];
        const auto& b = other.subsystems_[k];
        if (a.label != b.label || a.kind != b.kind || a.dim != b.dim || a.mass != b.mass ||
            a.grid_spacing != b.grid_spacing || a.periodic != b.periodic || a.x_min() != b.x_min())
            return false;
    }
    return true;
}

SpacePtr make_space(std::vector<SubsystemSpec> subsystems) {
    return std::make_shared<const CompositeSpace>(std::move(subsystems));
}

double norm(const CVector& psi) { return psi.norm(); }

StateVector::StateVector(SpacePtr space, CVector amplitudes) : space_(std::move(space)) {
    if (!space_) throw ValidationError("state vector needs a space");
    if (amplitudes.size() != space_->total_dim())
        throw ValidationError("state vector length " + std::to_string(amplitudes.size()) + " does not match space dimension " +
                              std::to_string(space_->total_dim()));
    const double n = amplitudes.norm();
    if (!std::isfinite(n)) throw NumericalError("state vector has non-finite amplitudes");
    if (n == 0.0) throw NumericalError("state vector has zero norm");
    amplitudes_ = amplitudes / n;
}

StateVector renormalize(SpacePtr space, const CVector& psi) { return StateVector(std::move(space), psi); }

CVector kron(const CVector& a, const CVector& b) {
    CVector out(a.size() * b.size());
    for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
}

StateVector make_product_state(SpacePtr space, const std::vector<CVector>& factors) {
    if (!space) throw ValidationError("product state needs a space");
    if (factors.size() != space->size())
        throw ValidationError("expected " + std::to_string(space->size()) + " factors, got " + std::to_string(factors.size()));
    CVector out = CVector::Ones(1);
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const auto& sub = space->subsystem(k);
        if (factors[k].size() != sub.dim)
            throw ValidationError("factor for '" + sub.label + "' has length " + std::to_string(factors[k].size()) +
                                  ", expected " + std::to_string(sub.dim));
        const double n = factors[k].norm();
        if (!std::isfinite(n)) throw NumericalError("factor for '" + sub.label + "' is not finite");
        if (n == 0.0) throw ValidationError("factor for '" + sub.label + "' has zero norm");
        out = kron(out, factors[k] / n);
    }
    return StateVector(std::move(space), std::move(out));
}

StateVector make_product_state(SpacePtr space, const std::map<std::string, CVector>& factors) {
    if (!space) throw ValidationError("product state needs a space");
    std::vector<CVector> ordered;
    for (const auto& sub : space->subsystems()) {
        auto it = factors.find(sub.label);
        if (it == factors.end()) throw ValidationError("missing factor for subsystem '" + sub.label + "'");
        ordered.push_back(it->second);
    }
    if (factors.size() != space->size()) {
        for (const auto& [label, _] : factors)
            if (!space->contains(label)) throw ValidationError("factor given for unknown subsystem '" + label + "'");
    }
    return make_product_state(std::move(space), ordered);
}

double gaussian_leakage(const SubsystemSpec& lattice, const GaussianParams& p) {
    const double lo = lattice.x_min();
    const double hi = lattice.position(lattice.dim - 1);
    const double s = std::sqrt(2.0) * p.width;
    return 0.5 * std::erfc((p.center - lo) / s) + 0.5 * std::erfc((hi - p.center) / s);
}

CVector sample_gaussian(const SubsystemSpec& lattice, const GaussianParams& p) {
    if (!lattice.is_lattice()) throw ValidationError("gaussian packet needs a lattice subsystem, got '" + lattice.label + "'");
    if (!(p.width > 0.0) || !std::isfinite(p.width)) throw ValidationError("packet width must be positive");
    const double a2 = p.width * p.width;
    const double n = std::pow(2.0 * std::numbers::pi * a2, -0.25);
    CVector psi(lattice.dim);
    for (Index j = 0; j < lattice.dim; ++j) {
        const double x = lattice.position(j);
        const double d = x - p.center;
        psi[j] = n * std::exp(cplx(-d * d / (4.0 * a2), p.momentum * x));
    }
    return psi;
}

CVector gaussian_packet(const CompositeSpace& space, std::string_view label, const GaussianParams& p) {
    const auto& sub = space.subsystem(label);
    if (!sub.is_lattice()) throw ValidationError("gaussian packet needs a lattice subsystem, got '" + sub.label + "'");
    if (p.width < 2.0 * sub.grid_spacing)
        throw ValidationError("packet width " + format_number(p.width) + " is not resolvable on '" + sub.label +
                              "' (needs >= 2 * grid_spacing)");
    if (!sub.periodic) {
        const double leak = gaussian_leakage(sub, p);
        if (leak > kBoundaryLeakageTolerance)
            throw ValidationError("packet on '" + sub.label + "' leaks " + format_number(leak) +
                                  " probability past the hard walls");
    }
    CVector psi = sample_gaussian(sub, p);
    return psi / psi.norm();
}

}  // namespace clab
