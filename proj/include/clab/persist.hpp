#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/conservation.hpp"
#include "clab/integrator.hpp"
#include "clab/scenario.hpp"

namespace clab {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kRunSchemaVersion = 1;

enum class OutputFormat { csv, json };
std::string to_string(OutputFormat f);
OutputFormat output_format_from_string(const std::string& name);

// Columns: t, norm_pre, observables (complex ones as <name>.re and <name>.im), w:<branch>, S:<bipartition>.
std::vector<std::string> csv_columns(const TrajectoryRecord& record);
// Values printed with %.17g so they re-load bit-exactly.
std::string trajectory_csv(const TrajectoryRecord& record);
// Restores the recorded series; seed, plan and collapse outcome are not part of the CSV.
TrajectoryRecord parse_trajectory_csv(const std::string& text);

nlohmann::json trajectory_json(const TrajectoryRecord& record);
TrajectoryRecord trajectory_from_json(const nlohmann::json& j);

nlohmann::json ensemble_json(const EnsembleStats& stats);
// t, then <series>.mean and <series>.se per series.
std::string ensemble_csv(const EnsembleStats& stats);

nlohmann::json audit_json(const AuditReport& report);

struct RunManifest {
    std::string kind;  // "trajectory" or "ensemble"
    std::string scenario;
    std::string config_hash;
    nlohmann::json config;
    std::uint64_t base_seed = 0;
    long n_traj = 0;
    OutputFormat format = OutputFormat::csv;
    std::vector<std::string> files;
    nlohmann::json trajectories;  // per trajectory: seed, file, collapsed_branch, collapse_time, drift
    std::string tool_version = kToolVersion;
    std::string created_at;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    // Equal up to the creation time.
    bool same_run(const RunManifest& other) const;
};

struct PersistOutcome {
    std::filesystem::path directory;
    std::vector<std::filesystem::path> files;
    bool written = false;  // false when an identical run was already on disk
};

// Writes <out_dir>/<name>-<hash12>-seed<seed>[-n<N>]/ with one file per trajectory, an optional
// ensemble summary and manifest.json. Re-running the same (config, seed) is a no-op; an existing
// manifest that differs or cannot be read is never overwritten.
PersistOutcome persist_run(const ScenarioConfig& config, const std::vector<TrajectoryRecord>& records, const EnsembleStats* ensemble,
                           const std::filesystem::path& out_dir, OutputFormat format);

std::filesystem::path run_directory(const ScenarioConfig& config, std::uint64_t base_seed, long n_traj, bool ensemble,
                                    const std::filesystem::path& out_dir);

RunManifest read_manifest(const std::filesystem::path& run_dir);

struct LoadedRun {
    RunManifest manifest;
    ScenarioConfig config;
    std::vector<TrajectoryRecord> records;
};

LoadedRun load_run(const std::filesystem::path& run_dir);

}  // namespace clab
