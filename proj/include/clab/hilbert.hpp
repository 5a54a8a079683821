#pragma once

#include <complex>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace clab {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Index = Eigen::Index;

// Internal units: hbar = 1.
inline constexpr double kHbar = 1.0;

enum class SubsystemKind { lattice1d, spin, discrete };

std::string to_string(SubsystemKind kind);
SubsystemKind subsystem_kind_from_string(std::string_view name);

struct SubsystemSpec {
    std::string label;
    SubsystemKind kind = SubsystemKind::discrete;
    Index dim = 1;
    double mass = 1.0;
    // Lattice only.
    double grid_spacing = 0.0;
    bool periodic = false;
    // Position of site 0. Defaults to -(dim/2)*grid_spacing so that x = 0 is a site.
    std::optional<double> origin;

    bool is_lattice() const { return kind == SubsystemKind::lattice1d; }
    double x_min() const;
    double position(Index site) const { return x_min() + static_cast<double>(site) * grid_spacing; }
    // Box length dim*grid_spacing; the minimum-image period on periodic grids.
    double box_length() const { return static_cast<double>(dim) * grid_spacing; }
    Eigen::VectorXd positions() const;
};

// Tensor-product space. Basis index is row-major in subsystem order:
// the first subsystem is the most significant digit.
class CompositeSpace {
public:
    explicit CompositeSpace(std::vector<SubsystemSpec> subsystems);

    const std::vector<SubsystemSpec>& subsystems() const { return subsystems_; }
    std::size_t size() const { return subsystems_.size(); }
    Index total_dim() const { return total_dim_; }

    std::size_t index_of(std::string_view label) const;
    bool contains(std::string_view label) const;
    const SubsystemSpec& subsystem(std::string_view label) const { return subsystems_[index_of(label)]; }
    const SubsystemSpec& subsystem(std::size_t k) const { return subsystems_.at(k); }

    Index stride(std::size_t k) const { return strides_.at(k); }
    Index level(Index basis_index, std::size_t k) const { return (basis_index / strides_[k]) % subsystems_[k].dim; }

    bool operator==(const CompositeSpace& other) const;

private:
    std::vector<SubsystemSpec> subsystems_;
    std::vector<Index> strides_;
    Index total_dim_ = 1;
};

using SpacePtr = std::shared_ptr<const CompositeSpace>;

SpacePtr make_space(std::vector<SubsystemSpec> subsystems);

// Normalized, finite amplitude vector over a CompositeSpace. Immutable.
class StateVector {
public:
    StateVector() = default;  // empty placeholder
    // Normalizes `amplitudes`; throws on zero, non-finite, or mis-sized input.
    StateVector(SpacePtr space, CVector amplitudes);

    const CompositeSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }
    const CVector& amplitudes() const { return amplitudes_; }
    Index dim() const { return amplitudes_.size(); }
    cplx operator[](Index i) const { return amplitudes_[i]; }

private:
    SpacePtr space_;
    CVector amplitudes_;
};

double norm(const CVector& psi);
inline double norm(const StateVector& psi) { return norm(psi.amplitudes()); }

StateVector renormalize(SpacePtr space, const CVector& psi);

// Kronecker product of per-subsystem factors, given in subsystem order.
StateVector make_product_state(SpacePtr space, const std::vector<CVector>& factors);
StateVector make_product_state(SpacePtr space, const std::map<std::string, CVector>& factors);

// Kronecker product of raw vectors (first argument most significant).
CVector kron(const CVector& a, const CVector& b);

struct GaussianParams {
    double center = 0.0;
    double width = 1.0;  // a: |psi|^2 has standard deviation a
    double momentum = 0.0;  // k0 (inverse length)
};

// Probability mass that the continuum packet places outside the grid interval.
// Non-periodic lattices refuse packets whose leakage exceeds this.
inline constexpr double kBoundaryLeakageTolerance = 1e-10;

// Samples of N*exp(-(x-x0)^2/4a^2 + i k0 x) on the lattice, renormalized to unit discrete norm.
CVector gaussian_packet(const CompositeSpace& space, std::string_view label, const GaussianParams& params);

// The same samples with the continuum normalization N = (2 pi a^2)^(-1/4); sum |psi|^2 dx ~ 1.
CVector sample_gaussian(const SubsystemSpec& lattice, const GaussianParams& params);

// Continuum mass of |psi|^2 outside [x_min, x_max].
double gaussian_leakage(const SubsystemSpec& lattice, const GaussianParams& params);

}  // namespace clab
