#include "clab/persist.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "clab/errors.hpp"

namespace clab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json"; }

OutputFormat output_format_from_string(const std::string& name) {
    if (name == "csv") return OutputFormat::csv;
    if (name == "json") return OutputFormat::json;
    throw ValidationError("unknown output format '" + name + "' (expected csv or json)");
}

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError("malformed number '" + s + "' in trajectory file");
    }
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json stats_json(const RunningStats& s) { return {{"count", s.count}, {"mean", s.mean}, {"m2", s.m2}}; }

RunningStats stats_from_json(const json& j) {
    RunningStats s;
    s.count = j.at("count").get<long>();
    s.mean = j.at("mean").get<double>();
    s.m2 = j.at("m2").get<double>();
    return s;
}

}  // namespace

std::vector<std::string> csv_columns(const TrajectoryRecord& r) {
    std::vector<std::string> cols{"t", "norm_pre"};
    for (const auto& o : r.observables) {
        if (o.is_complex) {
            cols.push_back(o.name + ".re");
            cols.push_back(o.name + ".im");
        } else {
            cols.push_back(o.name);
        }
    }
    for (const auto& b : r.branch_weights) cols.push_back("w:" + b.name);
    for (const auto& s : r.entropy_series) cols.push_back("S:" + s.name);
    return cols;
}

std::string trajectory_csv(const TrajectoryRecord& r) {
    std::string out;
    const auto cols = csv_columns(r);
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
    out += '\n';
    for (std::size_t t = 0; t < r.times.size(); ++t) {
        out += fmt(r.times[t]);
        out += ',' + fmt(r.norms_pre_renorm[t]);
        for (const auto& o : r.observables) {
            out += ',' + fmt(o.values[t].real());
            if (o.is_complex) out += ',' + fmt(o.values[t].imag());
        }
        for (const auto& b : r.branch_weights) out += ',' + fmt(b.values[t]);
        for (const auto& s : r.entropy_series) out += ',' + fmt(s.values[t]);
        out += '\n';
    }
    return out;
}

TrajectoryRecord parse_trajectory_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty trajectory file");
    const auto cols = split(line, ',');
    if (cols.size() < 2 || cols[0] != "t" || cols[1] != "norm_pre") throw IoError("trajectory file header must start with t,norm_pre");

    TrajectoryRecord r;
    // Column c feeds target[c]: kind 0 times, 1 norms, 2 observable real, 3 observable imag, 4 branch, 5 entropy.
    struct Target {
        int kind;
        std::size_t index;
    };
    std::vector<Target> targets;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::string& name = cols[c];
        if (c == 0) targets.push_back({0, 0});
        else if (c == 1) targets.push_back({1, 0});
        else if (name.rfind("w:", 0) == 0) {
            r.branch_weights.push_back(RealSeries{name.substr(2), {}});
            targets.push_back({4, r.branch_weights.size() - 1});
        } else if (name.rfind("S:", 0) == 0) {
            r.entropy_series.push_back(RealSeries{name.substr(2), {}});
            targets.push_back({5, r.entropy_series.size() - 1});
        } else if (name.size() > 3 && name.compare(name.size() - 3, 3, ".re") == 0) {
            r.observables.push_back(ComplexSeries{name.substr(0, name.size() - 3), true, {}});
            targets.push_back({2, r.observables.size() - 1});
        } else if (name.size() > 3 && name.compare(name.size() - 3, 3, ".im") == 0) {
            if (r.observables.empty() || r.observables.back().name != name.substr(0, name.size() - 3))
                throw IoError("column '" + name + "' does not follow its real part");
            targets.push_back({3, r.observables.size() - 1});
        } else {
            r.observables.push_back(ComplexSeries{name, false, {}});
            targets.push_back({2, r.observables.size() - 1});
        }
    }
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != cols.size()) throw IoError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(cols.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = parse_double(cells[c]);
            const auto [kind, i] = targets[c];
            switch (kind) {
            case 0: r.times.push_back(v); break;
            case 1: r.norms_pre_renorm.push_back(v); break;
            case 2: r.observables[i].values.emplace_back(v, 0.0); break;
            case 3: r.observables[i].values.back().imag(v); break;
            case 4: r.branch_weights[i].values.push_back(v); break;
            case 5: r.entropy_series[i].values.push_back(v); break;
            }
        }
    }
    return r;
}

json trajectory_json(const TrajectoryRecord& r) {
    json j;
    j["schema_version"] = kRunSchemaVersion;
    j["seed"] = r.seed;
    j["times"] = r.times;
    j["norm_pre"] = r.norms_pre_renorm;
    j["observables"] = json::array();
    for (const auto& o : r.observables) {
        json s = {{"name", o.name}, {"complex", o.is_complex}};
        std::vector<double> re, im;
        for (const auto& v : o.values) {
            re.push_back(v.real());
            im.push_back(v.imag());
        }
        s["re"] = re;
        if (o.is_complex) s["im"] = im;
        j["observables"].push_back(s);
    }
    j["branch_weights"] = json::array();
    for (const auto& b : r.branch_weights) j["branch_weights"].push_back({{"name", b.name}, {"values", b.values}});
    j["entropy"] = json::array();
    for (const auto& e : r.entropy_series) j["entropy"].push_back({{"name", e.name}, {"values", e.values}});
    j["collapsed_branch"] = r.collapsed_branch ? json(*r.collapsed_branch) : json(nullptr);
    j["collapse_time"] = r.collapse_time;
    j["norm_sq_drift"] = stats_json(r.norm_sq_drift);
    return j;
}

TrajectoryRecord trajectory_from_json(const json& j) {
    try {
        TrajectoryRecord r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.times = j.at("times").get<std::vector<double>>();
        r.norms_pre_renorm = j.at("norm_pre").get<std::vector<double>>();
        for (const auto& s : j.at("observables")) {
            const std::string name = s.at("name").get<std::string>();
            ComplexSeries cs{name, s.at("complex").get<bool>(), {}};
            const auto re = s.at("re").get<std::vector<double>>();
            const auto im = cs.is_complex ? s.at("im").get<std::vector<double>>() : std::vector<double>(re.size(), 0.0);
            if (im.size() != re.size()) throw IoError("observable '" + name + "' has mismatched parts");
            for (std::size_t i = 0; i < re.size(); ++i) cs.values.emplace_back(re[i], im[i]);
            r.observables.push_back(std::move(cs));
        }
        for (const auto& b : j.at("branch_weights"))
            r.branch_weights.push_back(RealSeries{b.at("name").get<std::string>(), b.at("values").get<std::vector<double>>()});
        for (const auto& e : j.at("entropy"))
            r.entropy_series.push_back(RealSeries{e.at("name").get<std::string>(), e.at("values").get<std::vector<double>>()});
        if (!j.at("collapsed_branch").is_null()) r.collapsed_branch = j.at("collapsed_branch").get<std::string>();
        r.collapse_time = j.at("collapse_time").get<double>();
        r.norm_sq_drift = stats_from_json(j.at("norm_sq_drift"));
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed trajectory JSON: ") + e.what());
    }
}

json ensemble_json(const EnsembleStats& s) {
    json j;
    j["schema_version"] = kRunSchemaVersion;
    j["n_traj"] = s.n_traj;
    j["base_seed"] = s.base_seed;
    j["times"] = s.times;
    j["series"] = json::object();
    for (const auto& ss : s.series)
        j["series"][ss.name] = {{"mean", ss.mean}, {"variance", ss.variance}, {"std_error", ss.std_error}, {"ci_low", ss.ci_low}, {"ci_high", ss.ci_high}};
    j["outcomes"] = json::array();
    for (const auto& o : s.outcomes)
        j["outcomes"].push_back({{"label", o.label}, {"count", o.count}, {"frequency", o.frequency}, {"std_error", o.std_error}});
    j["norm_sq_drift_per_traj"] = {{"mean", s.norm_sq_drift_per_traj.mean}, {"std_error", s.norm_sq_drift_per_traj.std_error()}};
    return j;
}

std::string ensemble_csv(const EnsembleStats& s) {
    std::string out = "t";
    for (const auto& ss : s.series) out += "," + ss.name + ".mean," + ss.name + ".se";
    out += '\n';
    for (std::size_t t = 0; t < s.times.size(); ++t) {
        out += fmt(s.times[t]);
        for (const auto& ss : s.series) out += ',' + fmt(ss.mean[t]) + ',' + fmt(ss.std_error[t]);
        out += '\n';
    }
    return out;
}

json audit_json(const AuditReport& r) {
    json j;
    j["schema_version"] = AuditReport::kSchemaVersion;
    j["scenario"] = r.scenario;
    j["n_traj"] = r.n_traj;
    j["pass"] = r.pass;
    j["quantities"] = json::array();
    for (const auto& q : r.quantities) {
        json qj = {{"name", q.name},
                   {"kind", to_string(q.kind)},
                   {"classification", to_string(q.classification)},
                   {"commutator_with_hamiltonian", {{"max_norm", q.with_hamiltonian.max_norm}, {"tolerance", q.with_hamiltonian.tolerance}, {"pass", q.with_hamiltonian.pass}}},
                   {"commutator_with_collapse", {{"max_norm", q.with_collapse.max_norm}, {"tolerance", q.with_collapse.tolerance}, {"pass", q.with_collapse.pass}}},
                   {"initial_value", {q.initial_value.real(), q.initial_value.imag()}},
                   {"per_trajectory_drift", q.per_trajectory_drift},
                   {"asserted", q.asserted},
                   {"pass", q.pass},
                   {"tolerance", q.tolerance},
                   {"criterion", q.criterion}};
        qj["checkpoints"] = json::array();
        for (const auto& c : q.checkpoints)
            qj["checkpoints"].push_back({{"t", c.time}, {"mean", c.ensemble_mean}, {"std_error", c.std_error}, {"reference", c.reference}, {"pass", c.pass}});
        j["quantities"].push_back(qj);
    }
    j["branch_totals"] = json::array();
    for (const auto& b : r.branch_totals)
        j["branch_totals"].push_back({{"quantity", b.quantity},
                                      {"branch", b.branch},
                                      {"count", b.count},
                                      {"mean", b.mean},
                                      {"std_error", b.std_error},
                                      {"initial", b.initial},
                                      {"oracle_prediction", b.oracle_prediction},
                                      {"selection_allowance", b.selection_allowance},
                                      {"bound", b.bound},
                                      {"pass", b.pass}});
    j["marginals"] = json::array();
    for (const auto& m : r.marginals)
        j["marginals"].push_back({{"name", m.name}, {"initial_mean", m.initial_mean}, {"final_mean", m.final_mean}, {"final_std_error", m.final_std_error}});
    return j;
}

json RunManifest::to_json() const {
    return {{"schema_version", kRunSchemaVersion},
            {"kind", kind},
            {"scenario", scenario},
            {"config_hash", config_hash},
            {"config", config},
            {"base_seed", base_seed},
            {"n_traj", n_traj},
            {"format", to_string(format)},
            {"files", files},
            {"trajectories", trajectories},
            {"tool_version", tool_version},
            {"created_at", created_at}};
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != kRunSchemaVersion) throw IoError("unsupported manifest schema version");
        RunManifest m;
        m.kind = j.at("kind").get<std::string>();
        m.scenario = j.at("scenario").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.config = j.at("config");
        m.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.n_traj = j.at("n_traj").get<long>();
        m.format = output_format_from_string(j.at("format").get<std::string>());
        m.files = j.at("files").get<std::vector<std::string>>();
        m.trajectories = j.at("trajectories");
        m.tool_version = j.at("tool_version").get<std::string>();
        m.created_at = j.at("created_at").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    } catch (const ValidationError& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
}

bool RunManifest::same_run(const RunManifest& o) const {
    json a = to_json(), b = o.to_json();
    a.erase("created_at");
    b.erase("created_at");
    return a == b;
}

fs::path run_directory(const ScenarioConfig& config, std::uint64_t base_seed, long n_traj, bool ensemble, const fs::path& out_dir) {
    std::string name = config.name + "-" + config_hash(config).substr(0, 12) + "-seed" + std::to_string(base_seed);
    if (ensemble) name += "-n" + std::to_string(n_traj);
    return out_dir / name;
}

RunManifest read_manifest(const fs::path& run_dir) {
    const fs::path path = run_dir / "manifest.json";
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("corrupted manifest " + path.string() + ": " + e.what());
    }
    return RunManifest::from_json(j);
}

PersistOutcome persist_run(const ScenarioConfig& config, const std::vector<TrajectoryRecord>& records, const EnsembleStats* ensemble,
                           const fs::path& out_dir, OutputFormat format) {
    if (records.empty() && !ensemble) throw ValidationError("nothing to persist");
    RunManifest m;
    m.kind = ensemble ? "ensemble" : "trajectory";
    m.scenario = config.name;
    m.config_hash = config_hash(config);
    m.config = to_json(config);
    m.base_seed = ensemble ? ensemble->base_seed : records.front().seed;
    m.n_traj = ensemble ? ensemble->n_traj : static_cast<long>(records.size());
    m.format = format;
    m.created_at = utc_now();
    m.trajectories = json::array();

    std::vector<std::pair<std::string, std::string>> contents;
    for (const auto& r : records) {
        const std::string file = "trajectory-" + std::to_string(r.seed) + (format == OutputFormat::csv ? ".csv" : ".json");
        contents.emplace_back(file, format == OutputFormat::csv ? trajectory_csv(r) : trajectory_json(r).dump(1) + "\n");
        m.trajectories.push_back({{"seed", r.seed},
                                  {"file", file},
                                  {"collapsed_branch", r.collapsed_branch ? json(*r.collapsed_branch) : json(nullptr)},
                                  {"collapse_time", r.collapse_time},
                                  {"norm_sq_drift", stats_json(r.norm_sq_drift)}});
    }
    if (ensemble) {
        if (format == OutputFormat::csv) contents.emplace_back("ensemble.csv", ensemble_csv(*ensemble));
        contents.emplace_back("ensemble.json", ensemble_json(*ensemble).dump(1) + "\n");
    }
    for (const auto& [file, _] : contents) m.files.push_back(file);

    PersistOutcome out;
    out.directory = run_directory(config, m.base_seed, m.n_traj, ensemble != nullptr, out_dir);
    for (const auto& f : m.files) out.files.push_back(out.directory / f);
    out.files.push_back(out.directory / "manifest.json");

    if (fs::exists(out.directory / "manifest.json")) {
        RunManifest existing;
        try {
            existing = read_manifest(out.directory);
        } catch (const IoError& e) {
            throw IoError("refusing to overwrite " + out.directory.string() + ": " + e.what());
        }
        if (!existing.same_run(m))
            throw IoError("refusing to overwrite " + out.directory.string() + ": existing manifest describes a different run");
        for (const auto& f : out.files)
            if (!fs::exists(f)) throw IoError("run directory " + out.directory.string() + " is incomplete: missing " + f.filename().string());
        out.written = false;
        return out;
    }
    std::error_code ec;
    fs::create_directories(out.directory, ec);
    if (ec) throw IoError("cannot create " + out.directory.string() + ": " + ec.message());
    for (const auto& [file, text] : contents) write_file(out.directory / file, text);
    // The manifest goes last: its presence marks a complete run.
    write_file(out.directory / "manifest.json", m.to_json().dump(1) + "\n");
    out.written = true;
    return out;
}

LoadedRun load_run(const fs::path& run_dir) {
    LoadedRun run;
    run.manifest = read_manifest(run_dir);
    run.config = parse_config(run.manifest.config);
    if (config_hash(run.config) != run.manifest.config_hash) throw IoError("manifest config does not match its recorded hash");
    for (const auto& t : run.manifest.trajectories) {
        const std::string file = t.at("file").get<std::string>();
        const std::string text = read_file(run_dir / file);
        TrajectoryRecord r;
        if (run.manifest.format == OutputFormat::csv) {
            r = parse_trajectory_csv(text);
        } else {
            try {
                r = trajectory_from_json(json::parse(text));
            } catch (const json::parse_error& e) {
                throw IoError("corrupted trajectory file " + file + ": " + e.what());
            }
        }
        r.seed = t.at("seed").get<std::uint64_t>();
        r.plan = run.config.plan;
        r.plan.seed = r.seed;
        if (!t.at("collapsed_branch").is_null()) r.collapsed_branch = t.at("collapsed_branch").get<std::string>();
        r.collapse_time = t.at("collapse_time").get<double>();
        r.norm_sq_drift = stats_from_json(t.at("norm_sq_drift"));
        run.records.push_back(std::move(r));
    }
    return run;
}

}  // namespace clab
