#include "clab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "clab/entanglement.hpp"
#include "clab/errors.hpp"
#include "clab/persist.hpp"
#include "clab/scenario.hpp"
#include "clab/wavepacket.hpp"

namespace clab {

using nlohmann::json;

namespace {

struct Source {
    std::string config_path;
    std::string scenario;
    std::optional<double> mass_ratio;

    void add_to(CLI::App* app) {
        auto* c = app->add_option("--config", config_path, "Scenario configuration file (JSON)");
        auto* s = app->add_option("--scenario", scenario, "Built-in scenario name");
        c->excludes(s);
        app->add_option("--mass-ratio", mass_ratio, "Set the second subsystem's mass to this multiple of the first");
    }

    bool given() const { return !config_path.empty() || !scenario.empty(); }

    ScenarioConfig load() const {
        if (!given()) throw ValidationError("give --config PATH or --scenario NAME");
        ScenarioConfig c = config_path.empty() ? builtin_scenario(scenario) : load_config(config_path);
        if (mass_ratio) c = parse_config(to_json(with_mass_ratio(std::move(c), *mass_ratio)));
        return c;
    }
};

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

json complex_pair(std::complex<double> z) { return {{"re", z.real()}, {"im", z.imag()}}; }

// "lo:hi:n" -> n evenly spaced values.
std::vector<double> parse_sweep(const std::string& spec, const std::string& flag) {
    std::vector<std::string> parts;
    std::stringstream in(spec);
    std::string part;
    while (std::getline(in, part, ':')) parts.push_back(part);
    try {
        if (parts.size() != 3) throw std::invalid_argument(spec);
        const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
        const long n = std::stol(parts[2]);
        if (n < 1) throw std::invalid_argument(spec);
        std::vector<double> out;
        for (long i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
        return out;
    } catch (const std::exception&) {
        throw ValidationError(flag + " expects lo:hi:n, got '" + spec + "'");
    }
}

json analyze_point(const PacketParams& p, double x_f, std::optional<double> epsilon) {
    const double width = packet_width(p);
    const PostSelection sel{x_f, epsilon.value_or(width / 100.0)};
    const auto closed = postselected_momentum_closed(p, sel);
    const auto quad = postselected_momentum_quadrature(p, sel);
    const Polar polar = polar_decomposition(closed);
    json j = {{"t", p.t},
              {"x_f", x_f},
              {"epsilon", sel.epsilon},
              {"width", width},
              {"closed_form", complex_pair(closed)},
              {"closed_form_regime", closed_form_regime(p, sel)},
              {"quadrature", complex_pair(quad)},
              {"relative_error", std::abs(quad - closed) / std::abs(closed)},
              {"polar", {{"r", polar.r}, {"theta", polar.theta}}},
              {"dominant_momentum", complex_pair(dominant_momentum(p, x_f))}};
    return j;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Interaction-induced collapse laboratory", "collapse-lab"};
    app.require_subcommand(1);

    // run
    Source run_src;
    std::optional<std::uint64_t> run_seed;
    std::string run_out_dir, run_format = "csv";
    bool run_quiet = false;
    auto* run = app.add_subcommand("run", "Integrate one trajectory");
    run_src.add_to(run);
    run->add_option("--seed", run_seed, "Noise seed (defaults to the plan's seed)");
    run->add_option("--out-dir", run_out_dir, "Persist the run under this directory instead of printing it");
    run->add_option("--format", run_format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    run->add_flag("--quiet", run_quiet, "Suppress informational output");

    // ensemble
    Source ens_src;
    std::optional<std::uint64_t> ens_seed;
    long ens_n = 100;
    std::string ens_out_dir, ens_format = "json";
    bool ens_quiet = false;
    auto* ens = app.add_subcommand("ensemble", "Integrate an ensemble of trajectories (seeds base, base+1, ...)");
    ens_src.add_to(ens);
    ens->add_option("--seed", ens_seed, "Base seed (defaults to the plan's seed)");
    ens->add_option("--n-traj", ens_n, "Number of trajectories")->check(CLI::PositiveNumber);
    ens->add_option("--out-dir", ens_out_dir, "Persist per-trajectory files, ensemble summary and manifest");
    ens->add_option("--format", ens_format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    ens->add_flag("--quiet", ens_quiet, "Suppress informational output");

    // analyze
    PacketParams packet;
    std::optional<double> an_xf, an_eps;
    std::string sweep_xf, sweep_t, an_format = "json";
    bool si_electron = false, an_quiet = false;
    packet.t = 1.0;
    auto* an = app.add_subcommand("analyze", "Free-packet widths and post-selected momentum (closed form and quadrature)");
    an->add_option("--a", packet.a, "Initial width a");
    an->add_option("--m", packet.m, "Mass");
    an->add_option("--hbar", packet.hbar, "Reduced Planck constant");
    an->add_option("--t", packet.t, "Time");
    an->add_option("--xf", an_xf, "Detection point");
    an->add_option("--epsilon", an_eps, "Detection half-width (defaults to width/100)");
    an->add_option("--sweep-xf", sweep_xf, "Sweep detection points lo:hi:n");
    an->add_option("--sweep-t", sweep_t, "Sweep times lo:hi:n");
    an->add_flag("--si-electron", si_electron, "Electron in SI units with a = 1e-10 m (overrides --a, --m, --hbar)");
    an->add_option("--format", an_format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    an->add_flag("--quiet", an_quiet, "Suppress informational output");

    // entropy
    std::optional<double> delta, mu;
    std::string ent_format = "text";
    auto* ent = app.add_subcommand("entropy", "Two-branch entanglement entropy, exact and small-delta approximation");
    auto* d_opt = ent->add_option("--delta", delta, "Overlap defect delta = 1 - mu");
    auto* m_opt = ent->add_option("--mu", mu, "Branch overlap mu");
    d_opt->excludes(m_opt);
    ent->add_option("--format", ent_format, "Output format")->check(CLI::IsMember({"text", "csv", "json"}));

    // audit
    Source aud_src;
    std::string aud_run_dir, aud_out_dir, aud_format = "text";
    std::optional<std::uint64_t> aud_seed;
    long aud_n = 200;
    bool aud_quiet = false;
    auto* aud = app.add_subcommand("audit", "Conservation report for stored or freshly integrated trajectories");
    aud_src.add_to(aud);
    aud->add_option("--run-dir", aud_run_dir, "Run directory containing manifest.json");
    aud->add_option("--seed", aud_seed, "Base seed for a fresh ensemble");
    aud->add_option("--n-traj", aud_n, "Trajectories for a fresh ensemble")->check(CLI::PositiveNumber);
    aud->add_option("--out-dir", aud_out_dir, "Write audit.json into this directory");
    aud->add_option("--format", aud_format, "Output format")->check(CLI::IsMember({"text", "json"}));
    aud->add_flag("--quiet", aud_quiet, "Print only failures");

    // scenario
    auto* sc = app.add_subcommand("scenario", "Built-in scenario library");
    sc->require_subcommand(1);
    auto* sc_list = sc->add_subcommand("list", "List built-in scenarios");
    std::string show_name;
    std::optional<double> show_ratio;
    auto* sc_show = sc->add_subcommand("show", "Print a built-in scenario's configuration");
    sc_show->add_option("name", show_name, "Scenario name")->required();
    sc_show->add_option("--mass-ratio", show_ratio, "Set the second subsystem's mass to this multiple of the first");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (*run) {
            ScenarioConfig config = run_src.load();
            if (run_seed) config.plan.seed = *run_seed;
            const CompiledScenario compiled = compile(config);
            if (!run_quiet)
                for (const auto& w : compiled.warnings) err << "warning: " << w << "\n";
            const TrajectoryRecord record = clab::run_trajectory(compiled.model, config.plan);
            const OutputFormat format = output_format_from_string(run_format);
            if (run_out_dir.empty()) {
                out << (format == OutputFormat::csv ? trajectory_csv(record) : trajectory_json(record).dump(1) + "\n");
            } else {
                const PersistOutcome p = persist_run(config, {record}, nullptr, run_out_dir, format);
                if (!run_quiet) out << (p.written ? "wrote " : "unchanged ") << p.directory.string() << "\n";
            }
            return kExitOk;
        }
        if (*ens) {
            ScenarioConfig config = ens_src.load();
            const std::uint64_t base = ens_seed.value_or(config.plan.seed);
            const CompiledScenario compiled = compile(config);
            if (!ens_quiet)
                for (const auto& w : compiled.warnings) err << "warning: " << w << "\n";
            EnsembleOptions opts;
            opts.keep_records = !ens_out_dir.empty();
            const EnsembleStats stats = clab::run_ensemble(compiled.model, config.plan, ens_n, base, opts);
            const OutputFormat format = output_format_from_string(ens_format);
            if (ens_out_dir.empty()) {
                out << (format == OutputFormat::csv ? ensemble_csv(stats) : ensemble_json(stats).dump(1) + "\n");
            } else {
                const PersistOutcome p = persist_run(config, stats.records, &stats, ens_out_dir, format);
                if (!ens_quiet) out << (p.written ? "wrote " : "unchanged ") << p.directory.string() << "\n";
            }
            return kExitOk;
        }
        if (*an) {
            if (si_electron) {
                packet.a = 1e-10;
                packet.m = si::electron_mass;
                packet.hbar = si::hbar;
            }
            packet.validate();
            std::vector<double> ts = sweep_t.empty() ? std::vector<double>{packet.t} : parse_sweep(sweep_t, "--sweep-t");
            std::vector<double> xs;
            if (!sweep_xf.empty()) xs = parse_sweep(sweep_xf, "--sweep-xf");
            else if (an_xf) xs = {*an_xf};
            json rows = json::array();
            json widths = json::array();
            for (double t : ts) {
                PacketParams p = packet;
                p.t = t;
                p.validate();
                widths.push_back({{"t", t}, {"width", packet_width(p)}});
                for (double x : xs) rows.push_back(analyze_point(p, x, an_eps));
            }
            if (an_format == "json") {
                json doc = {{"schema_version", 1}, {"a", packet.a}, {"m", packet.m}, {"hbar", packet.hbar}, {"widths", widths}, {"points", rows}};
                out << doc.dump(1) << "\n";
            } else if (xs.empty()) {
                out << "t,width\n";
                for (const auto& w : widths) out << fmt(w["t"]) << "," << fmt(w["width"]) << "\n";
            } else {
                out << "t,x_f,epsilon,width,closed_re,closed_im,quad_re,quad_im,relative_error,r,theta\n";
                for (const auto& r : rows)
                    out << fmt(r["t"]) << "," << fmt(r["x_f"]) << "," << fmt(r["epsilon"]) << "," << fmt(r["width"]) << ","
                        << fmt(r["closed_form"]["re"]) << "," << fmt(r["closed_form"]["im"]) << "," << fmt(r["quadrature"]["re"]) << ","
                        << fmt(r["quadrature"]["im"]) << "," << fmt(r["relative_error"]) << "," << fmt(r["polar"]["r"]) << ","
                        << fmt(r["polar"]["theta"]) << "\n";
            }
            if (!an_quiet)
                for (const auto& r : rows)
                    if (!r["closed_form_regime"].get<bool>())
                        err << "note: epsilon exceeds width/10 at t=" << fmt(r["t"]) << ", x_f=" << fmt(r["x_f"])
                            << "; the closed form is a narrow-window approximation\n";
            return kExitOk;
        }
        if (*ent) {
            if (!delta && !mu) throw ValidationError("give --delta or --mu");
            const double m = mu ? *mu : 1.0 - *delta;
            const double d = 1.0 - m;
            const double exact = two_branch_entropy_exact(m);
            const double approx = two_branch_entropy_approx(d);
            const double rel = std::abs(approx - exact) / exact;
            if (ent_format == "json") {
                out << json{{"delta", d}, {"mu", m}, {"exact_nats", exact}, {"approx_nats", approx}, {"exact_bits", nats_to_bits(exact)},
                            {"relative_error", rel}}
                           .dump(1)
                    << "\n";
            } else if (ent_format == "csv") {
                out << "delta,mu,exact_nats,approx_nats,relative_error\n"
                    << fmt(d) << "," << fmt(m) << "," << fmt(exact) << "," << fmt(approx) << "," << fmt(rel) << "\n";
            } else {
                char line[160];
                std::snprintf(line, sizeof line, "delta %.6g: exact %.5f nats / approx %.5f nats (relative difference %.3g)\n", d, exact,
                              approx, rel);
                out << line;
            }
            return kExitOk;
        }
        if (*aud) {
            std::vector<TrajectoryRecord> records;
            ScenarioConfig config;
            if (!aud_run_dir.empty()) {
                if (aud_src.given()) throw ValidationError("--run-dir carries its own configuration; drop --config/--scenario");
                // Refusal is decided from the stored configuration before any trajectory is read.
                const RunManifest manifest = read_manifest(aud_run_dir);
                config = parse_config(manifest.config);
                if (!config.certifiable())
                    throw AuditError("scenario '" + config.name + "' contains external potentials; conservation audits are refused");
                records = load_run(aud_run_dir).records;
            } else {
                config = aud_src.load();
                if (!config.certifiable())
                    throw AuditError("scenario '" + config.name + "' contains external potentials; conservation audits are refused");
                EnsembleOptions opts;
                opts.keep_records = true;
                records = clab::run_ensemble(config, aud_n, aud_seed.value_or(config.plan.seed), opts).records;
            }
            const AuditReport report = audit_trajectory(records, config);
            if (aud_format == "json") out << audit_json(report).dump(1) << "\n";
            else if (!aud_quiet || !report.pass) out << summarize(report);
            if (!aud_out_dir.empty()) {
                std::filesystem::create_directories(aud_out_dir);
                std::ofstream f(std::filesystem::path(aud_out_dir) / "audit.json");
                f << audit_json(report).dump(1) << "\n";
                if (!f) throw IoError("cannot write audit.json under " + aud_out_dir);
            }
            if (!report.pass) {
                err << "audit failed for scenario '" << config.name << "'\n";
                return kExitAudit;
            }
            return kExitOk;
        }
        if (*sc_list) {
            for (const auto& n : builtin_scenario_names()) out << n << "  " << builtin_scenario(n).description << "\n";
            return kExitOk;
        }
        if (*sc_show) {
            ScenarioConfig c = builtin_scenario(show_name);
            if (show_ratio) c = parse_config(to_json(with_mass_ratio(std::move(c), *show_ratio)));
            out << to_json(c).dump(2) << "\n";
            return kExitOk;
        }
    } catch (const AuditError& e) {
        err << "audit refused: " << e.what() << "\n";
        return kExitAudit;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitValidation;
}

int cli_run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_run(args, std::cout, std::cerr);
}

}  // namespace clab
