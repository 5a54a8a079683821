#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/conservation.hpp"
#include "clab/entanglement.hpp"
#include "clab/integrator.hpp"
#include "clab/operators.hpp"

namespace clab {

inline constexpr int kConfigSchemaVersion = 1;

struct FactorSpec {
    enum class Kind { amplitudes, basis, weights, gaussian };
    Kind kind = Kind::basis;
    CVector amplitudes;
    Index basis = 0;
    std::vector<double> weights;  // amplitudes sqrt(w_k)
    GaussianParams gaussian;
};

struct InitialStateSpec {
    enum class Type { product, two_branch };
    Type type = Type::product;
    std::map<std::string, FactorSpec> factors;  // product: every subsystem; two_branch: all but photon/mirror
    std::optional<long> shift_sector;           // project onto a total-shift eigenspace
    // two_branch only
    double delta = 0.0;
    MirrorModel mirror_model = MirrorModel::two_mode;
    std::string photon = "photon";
    std::string mirror = "mirror";
    double mirror_width = 1.0;  // displaced-gaussian packet width
};

// Kinds: energy, collapse_mean, local (op), position, momentum, spread, total_shift, local_shift.
struct ObservableSpec {
    std::string name;
    std::string kind;
    std::string subsystem;
    std::optional<LocalOp> op;
};

// Branches on one subsystem; together they must partition its levels.
struct BranchSpec {
    std::string label;
    std::string subsystem;
    std::vector<Index> levels;
};

struct BipartitionSpec {
    std::string name;
    std::vector<std::string> side_a;
};

struct AuditSpec {
    std::string quantity;  // observable name
    QuantityKind kind = QuantityKind::custom;
};

struct CollapseSpec {
    bool enabled = true;
    CollapseParams params;
};

struct ScenarioConfig {
    std::string name;
    std::string description;
    std::vector<SubsystemSpec> subsystems;
    OperatorSpec operators;
    CollapseSpec collapse;
    InitialStateSpec initial_state;
    IntegrationPlan plan;
    std::vector<ObservableSpec> observables;
    std::vector<BranchSpec> branches;
    std::vector<BipartitionSpec> bipartitions;
    std::vector<AuditSpec> audits;

    // False when external potentials are present; audits refuse such configs.
    bool certifiable() const { return !operators.has_external_terms(); }
};

// Parses and validates; throws ConfigError listing every problem found.
ScenarioConfig parse_config(const nlohmann::json& doc);
// Parse errors carry line and column.
ScenarioConfig load_config_text(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

// Canonical form: every field explicit, object keys sorted.
nlohmann::json to_json(const ScenarioConfig& config);
// SHA-256 of the canonical form, hex encoded.
std::string config_hash(const ScenarioConfig& config);

std::vector<std::string> builtin_scenario_names();
ScenarioConfig builtin_scenario(const std::string& name);
// Sets the mass of the second subsystem to ratio times the first (the apparatus-to-system ratio).
// dt is halved as often as the stability guard requires, with n_steps and record_every doubled to match.
ScenarioConfig with_mass_ratio(ScenarioConfig config, double ratio);

struct CompiledScenario {
    ScenarioConfig config;
    SimulationModel model;
    OperatorSpec operators;
    AssembledOperator scaled_interactions;  // V'
    AssembledOperator collapse_operator;    // V, built even when collapse is disabled
    std::vector<ConservedQuantity> audits;
    std::vector<std::string> warnings;

    AuditContext audit_context() const;
};

CompiledScenario compile(const ScenarioConfig& config);

TrajectoryRecord run_trajectory(const ScenarioConfig& config, const TrajectoryOptions& options = {});
EnsembleStats run_ensemble(const ScenarioConfig& config, long n_traj, std::uint64_t base_seed, const EnsembleOptions& options = {});
AuditReport audit_trajectory(const std::vector<TrajectoryRecord>& records, const ScenarioConfig& config);

}  // namespace clab
