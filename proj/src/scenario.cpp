#include "clab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "clab/errors.hpp"

namespace clab {

using nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> problems)
    : ValidationError([&] {
          std::string msg = "invalid configuration:";
          for (const auto& p : problems) msg += "\n  - " + p;
          return msg;
      }()),
      problems_(std::move(problems)) {}

namespace {

// Walks a JSON document, recording every problem instead of stopping at the first.
class Reader {
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!j.is_object()) {
            fail(path, "expected an object");
            return false;
        }
        for (const auto& [key, _] : j.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
                fail(path, "unknown key '" + key + "'");
        }
        return true;
    }

    const json* field(const json& obj, const std::string& path, const char* key, bool required) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(path, "missing required key '" + std::string(key) + "'");
            return nullptr;
        }
        return &*it;
    }

    double number(const json& obj, const std::string& path, const char* key, std::optional<double> fallback) {
        const json* v = field(obj, path, key, !fallback);
        if (!v) return fallback.value_or(0.0);
        if (!v->is_number()) {
            fail(path + "." + key, "expected a number");
            return fallback.value_or(0.0);
        }
        const double x = v->get<double>();
        if (!std::isfinite(x)) fail(path + "." + key, "must be finite");
        return x;
    }

    std::optional<double> opt_number(const json& obj, const std::string& path, const char* key) {
        if (!obj.contains(key)) return std::nullopt;
        return number(obj, path, key, std::nullopt);
    }

    long integer(const json& obj, const std::string& path, const char* key, std::optional<long> fallback) {
        const json* v = field(obj, path, key, !fallback);
        if (!v) return fallback.value_or(0);
        if (!v->is_number_integer()) {
            fail(path + "." + key, "expected an integer");
            return fallback.value_or(0);
        }
        return v->get<long>();
    }

    std::string string(const json& obj, const std::string& path, const char* key, std::optional<std::string> fallback) {
        const json* v = field(obj, path, key, !fallback);
        if (!v) return fallback.value_or("");
        if (!v->is_string()) {
            fail(path + "." + key, "expected a string");
            return fallback.value_or("");
        }
        return v->get<std::string>();
    }

    bool boolean(const json& obj, const std::string& path, const char* key, bool fallback) {
        const json* v = field(obj, path, key, false);
        if (!v) return fallback;
        if (!v->is_boolean()) {
            fail(path + "." + key, "expected true or false");
            return fallback;
        }
        return v->get<bool>();
    }

    const json* array(const json& obj, const std::string& path, const char* key, bool required) {
        const json* v = field(obj, path, key, required);
        if (v && !v->is_array()) {
            fail(path + "." + key, "expected an array");
            return nullptr;
        }
        return v;
    }

    std::vector<double> numbers(const json& j, const std::string& path) {
        std::vector<double> out;
        if (!j.is_array()) {
            fail(path, "expected an array of numbers");
            return out;
        }
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number()) {
                fail(path + "[" + std::to_string(i) + "]", "expected a number");
                continue;
            }
            out.push_back(j[i].get<double>());
        }
        return out;
    }

    // A complex entry is a number or [re, im].
    cplx complex(const json& j, const std::string& path) {
        if (j.is_number()) return j.get<double>();
        if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
        fail(path, "expected a number or [re, im]");
        return 0.0;
    }

    CVector complex_vector(const json& j, const std::string& path) {
        if (!j.is_array() || j.empty()) {
            fail(path, "expected a non-empty array");
            return {};
        }
        CVector v(static_cast<Index>(j.size()));
        for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = complex(j[i], path + "[" + std::to_string(i) + "]");
        return v;
    }

    std::optional<CMatrix> complex_matrix(const json& j, const std::string& path) {
        if (!j.is_array() || j.empty() || !j[0].is_array()) {
            fail(path, "expected a square array of rows");
            return std::nullopt;
        }
        const std::size_t n = j.size();
        CMatrix m(static_cast<Index>(n), static_cast<Index>(n));
        for (std::size_t r = 0; r < n; ++r) {
            if (!j[r].is_array() || j[r].size() != n) {
                fail(path, "matrix must be square");
                return std::nullopt;
            }
            for (std::size_t c = 0; c < n; ++c)
                m(static_cast<Index>(r), static_cast<Index>(c)) = complex(j[r][c], path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
        }
        return m;
    }

    LocalOp local_op(const json& j, const std::string& path) {
        if (j.is_string()) return LocalOp{j.get<std::string>(), {}};
        LocalOp op{"matrix", complex_matrix(j, path)};
        return op;
    }

    template <class F>
    auto guarded(const std::string& path, F&& f) -> decltype(f()) {
        try {
            return f();
        } catch (const std::exception& e) {
            fail(path, e.what());
            return decltype(f()){};
        }
    }
};

std::string idx(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

SubsystemSpec read_subsystem(Reader& r, const json& j, const std::string& path) {
    SubsystemSpec s;
    if (!r.object(j, path, {"label", "kind", "dim", "mass", "grid_spacing", "periodic", "origin"})) return s;
    s.label = r.string(j, path, "label", std::nullopt);
    s.kind = r.guarded(path + ".kind", [&] { return subsystem_kind_from_string(r.string(j, path, "kind", std::nullopt)); });
    s.dim = r.integer(j, path, "dim", std::nullopt);
    s.mass = r.number(j, path, "mass", 1.0);
    s.grid_spacing = r.number(j, path, "grid_spacing", 0.0);
    s.periodic = r.boolean(j, path, "periodic", false);
    s.origin = r.opt_number(j, path, "origin");
    if (s.kind != SubsystemKind::lattice1d && (j.contains("grid_spacing") || j.contains("periodic") || j.contains("origin")))
        r.fail(path, "grid_spacing, periodic and origin apply only to lattice subsystems");
    return s;
}

PairPotential read_potential(Reader& r, const json& j, const std::string& path) {
    PairPotential p;
    if (!r.object(j, path, {"family", "strength", "range", "start", "step", "values"})) return p;
    p.family = r.guarded(path + ".family", [&] { return pair_family_from_string(r.string(j, path, "family", std::nullopt)); });
    if (p.family == PairPotential::Family::tabulated) {
        p.strength = 1.0;
        p.table_start = r.number(j, path, "start", std::nullopt);
        p.table_step = r.number(j, path, "step", std::nullopt);
        if (const json* v = r.array(j, path, "values", true)) p.table = r.numbers(*v, path + ".values");
        if (!(p.table_step > 0.0)) r.fail(path + ".step", "must be positive");
        if (p.table.size() < 2) r.fail(path + ".values", "needs at least two samples");
        if (j.contains("strength") || j.contains("range")) r.fail(path, "tabulated potentials take start, step and values only");
    } else {
        p.strength = r.number(j, path, "strength", std::nullopt);
        p.range = r.number(j, path, "range", std::nullopt);
        if (!(p.range > 0.0)) r.fail(path + ".range", "must be positive");
        if (j.contains("start") || j.contains("step") || j.contains("values")) r.fail(path, "start, step and values apply only to tabulated potentials");
    }
    return p;
}

std::pair<std::string, std::string> read_pair(Reader& r, const json& j, const std::string& path) {
    const json* v = r.array(j, path, "subsystems", true);
    if (!v) return {};
    if (v->size() != 2 || !(*v)[0].is_string() || !(*v)[1].is_string()) {
        r.fail(path + ".subsystems", "expected two subsystem labels");
        return {};
    }
    return {(*v)[0].get<std::string>(), (*v)[1].get<std::string>()};
}

std::optional<OperatorTerm> read_term(Reader& r, const json& j, const std::string& path) {
    if (!j.is_object()) {
        r.fail(path, "expected an object");
        return std::nullopt;
    }
    const std::string type = r.string(j, path, "type", std::nullopt);
    if (type == "kinetic") {
        r.object(j, path, {"type", "subsystem", "mass"});
        KineticTerm t{r.string(j, path, "subsystem", std::nullopt), r.opt_number(j, path, "mass")};
        if (t.mass && !(*t.mass > 0.0)) r.fail(path + ".mass", "must be positive");
        return t;
    }
    if (type == "external_potential") {
        r.object(j, path, {"type", "subsystem", "values", "matrix"});
        ExternalTerm t;
        t.subsystem = r.string(j, path, "subsystem", std::nullopt);
        const bool has_values = j.contains("values"), has_matrix = j.contains("matrix");
        if (has_values == has_matrix) r.fail(path, "give exactly one of values or matrix");
        if (has_values) t.diagonal = r.numbers(j["values"], path + ".values");
        if (has_matrix) t.matrix = r.complex_matrix(j["matrix"], path + ".matrix");
        return t;
    }
    if (type == "interaction") {
        r.object(j, path, {"type", "subsystems", "potential", "in_hamiltonian"});
        InteractionTerm t;
        std::tie(t.subsystem_i, t.subsystem_j) = read_pair(r, j, path);
        if (const json* p = r.field(j, path, "potential", true)) t.potential = read_potential(r, *p, path + ".potential");
        t.in_hamiltonian = r.boolean(j, path, "in_hamiltonian", true);
        return t;
    }
    if (type == "spin_coupling") {
        r.object(j, path, {"type", "spin", "pointer", "strength", "in_hamiltonian"});
        CouplingTerm t = spin_coupling(r.string(j, path, "spin", std::nullopt), r.string(j, path, "pointer", std::nullopt),
                                       r.number(j, path, "strength", std::nullopt));
        t.in_hamiltonian = r.boolean(j, path, "in_hamiltonian", true);
        return t;
    }
    if (type == "coupling") {
        r.object(j, path, {"type", "subsystems", "ops", "strength", "in_hamiltonian"});
        CouplingTerm t;
        std::tie(t.subsystem_i, t.subsystem_j) = read_pair(r, j, path);
        if (const json* ops = r.array(j, path, "ops", true)) {
            if (ops->size() != 2) {
                r.fail(path + ".ops", "expected two local operators");
            } else {
                t.op_i = r.local_op((*ops)[0], path + ".ops[0]");
                t.op_j = r.local_op((*ops)[1], path + ".ops[1]");
            }
        }
        t.strength = r.number(j, path, "strength", std::nullopt);
        t.in_hamiltonian = r.boolean(j, path, "in_hamiltonian", true);
        return t;
    }
    if (!type.empty())
        r.fail(path + ".type", "unknown term type '" + type + "' (expected kinetic, external_potential, interaction, spin_coupling or coupling)");
    return std::nullopt;
}

FactorSpec read_factor(Reader& r, const json& j, const std::string& path) {
    FactorSpec f;
    if (!r.object(j, path, {"amplitudes", "basis", "weights", "gaussian"})) return f;
    if (j.size() != 1) {
        r.fail(path, "give exactly one of amplitudes, basis, weights or gaussian");
        return f;
    }
    if (j.contains("amplitudes")) {
        f.kind = FactorSpec::Kind::amplitudes;
        f.amplitudes = r.complex_vector(j["amplitudes"], path + ".amplitudes");
    } else if (j.contains("basis")) {
        f.kind = FactorSpec::Kind::basis;
        f.basis = r.integer(j, path, "basis", std::nullopt);
    } else if (j.contains("weights")) {
        f.kind = FactorSpec::Kind::weights;
        f.weights = r.numbers(j["weights"], path + ".weights");
        for (double w : f.weights)
            if (!(w >= 0.0)) r.fail(path + ".weights", "weights must be non-negative");
    } else {
        f.kind = FactorSpec::Kind::gaussian;
        const json& g = j["gaussian"];
        const std::string gp = path + ".gaussian";
        if (r.object(g, gp, {"center", "width", "momentum"})) {
            f.gaussian.center = r.number(g, gp, "center", 0.0);
            f.gaussian.width = r.number(g, gp, "width", std::nullopt);
            f.gaussian.momentum = r.number(g, gp, "momentum", 0.0);
        }
    }
    return f;
}

InitialStateSpec read_initial(Reader& r, const json& j, const std::string& path) {
    InitialStateSpec s;
    if (!r.object(j, path, {"type", "factors", "shift_sector", "delta", "mirror_model", "photon", "mirror", "mirror_width"})) return s;
    const std::string type = r.string(j, path, "type", "product");
    if (type == "product") {
        s.type = InitialStateSpec::Type::product;
        for (const char* k : {"delta", "mirror_model", "photon", "mirror", "mirror_width"})
            if (j.contains(k)) r.fail(path, "'" + std::string(k) + "' applies only to two_branch initial states");
    } else if (type == "two_branch") {
        s.type = InitialStateSpec::Type::two_branch;
        s.delta = r.number(j, path, "delta", std::nullopt);
        s.mirror_model = r.guarded(path + ".mirror_model", [&] { return mirror_model_from_string(r.string(j, path, "mirror_model", "two-mode")); });
        s.photon = r.string(j, path, "photon", "photon");
        s.mirror = r.string(j, path, "mirror", "mirror");
        s.mirror_width = r.number(j, path, "mirror_width", 1.0);
        if (!(s.delta >= 0.0 && s.delta <= 1.0)) r.fail(path + ".delta", "must lie in [0, 1]");
    } else {
        r.fail(path + ".type", "unknown initial state type '" + type + "' (expected product or two_branch)");
    }
    if (const json* f = r.field(j, path, "factors", s.type == InitialStateSpec::Type::product)) {
        if (!f->is_object()) {
            r.fail(path + ".factors", "expected an object keyed by subsystem label");
        } else {
            for (const auto& [label, fj] : f->items()) s.factors[label] = read_factor(r, fj, path + ".factors." + label);
        }
    }
    if (j.contains("shift_sector")) s.shift_sector = r.integer(j, path, "shift_sector", std::nullopt);
    return s;
}

IntegrationPlan read_plan(Reader& r, const json& j, const std::string& path) {
    IntegrationPlan p;
    if (!r.object(j, path, {"dt", "n_steps", "seed", "noise", "record_every", "collapse_threshold"})) return p;
    p.dt = r.number(j, path, "dt", std::nullopt);
    p.n_steps = r.integer(j, path, "n_steps", std::nullopt);
    const long seed = r.integer(j, path, "seed", 0);
    if (seed < 0) r.fail(path + ".seed", "must be non-negative");
    p.seed = static_cast<std::uint64_t>(std::max(0L, seed));
    p.noise = r.guarded(path + ".noise", [&] { return noise_kind_from_string(r.string(j, path, "noise", "complex")); });
    p.record_every = r.integer(j, path, "record_every", 1);
    p.collapse_threshold = r.number(j, path, "collapse_threshold", 1.0 - 1e-6);
    r.guarded(path, [&] {
        p.validate();
        return 0;
    });
    return p;
}

const std::set<std::string> kObservableKinds = {"energy", "collapse_mean", "local", "position", "momentum", "spread", "total_shift", "local_shift"};

ScenarioConfig read_config(Reader& r, const json& doc) {
    ScenarioConfig c;
    if (!r.object(doc, "config", {"schema_version", "name", "description", "subsystems", "operators", "collapse", "initial_state", "plan",
                                  "observables", "branches", "bipartitions", "audits"}))
        return c;
    const long version = r.integer(doc, "config", "schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion) r.fail("config.schema_version", "unsupported version " + std::to_string(version));
    c.name = r.string(doc, "config", "name", std::nullopt);
    c.description = r.string(doc, "config", "description", "");

    if (const json* subs = r.array(doc, "config", "subsystems", true)) {
        if (subs->empty()) r.fail("config.subsystems", "at least one subsystem is required");
        for (std::size_t i = 0; i < subs->size(); ++i) c.subsystems.push_back(read_subsystem(r, (*subs)[i], idx("subsystems", i)));
    }
    if (const json* ops = r.array(doc, "config", "operators", false))
        for (std::size_t i = 0; i < ops->size(); ++i)
            if (auto t = read_term(r, (*ops)[i], idx("operators", i))) c.operators.terms.push_back(std::move(*t));

    if (const json* col = r.field(doc, "config", "collapse", false)) {
        if (r.object(*col, "collapse", {"enabled", "c_scale", "tau0"})) {
            c.collapse.enabled = r.boolean(*col, "collapse", "enabled", true);
            c.collapse.params.c_scale = r.number(*col, "collapse", "c_scale", 1.0);
            c.collapse.params.tau0 = r.number(*col, "collapse", "tau0", 1.0);
            r.guarded("collapse", [&] {
                c.collapse.params.validate();
                return 0;
            });
        }
    }
    if (const json* init = r.field(doc, "config", "initial_state", true)) c.initial_state = read_initial(r, *init, "initial_state");
    if (const json* plan = r.field(doc, "config", "plan", true)) c.plan = read_plan(r, *plan, "plan");

    if (const json* obs = r.array(doc, "config", "observables", false)) {
        for (std::size_t i = 0; i < obs->size(); ++i) {
            const json& o = (*obs)[i];
            const std::string path = idx("observables", i);
            if (!r.object(o, path, {"name", "kind", "subsystem", "op"})) continue;
            ObservableSpec s;
            s.name = r.string(o, path, "name", std::nullopt);
            s.kind = r.string(o, path, "kind", std::nullopt);
            s.subsystem = r.string(o, path, "subsystem", "");
            if (o.contains("op")) s.op = r.local_op(o["op"], path + ".op");
            if (!s.kind.empty() && !kObservableKinds.count(s.kind)) r.fail(path + ".kind", "unknown observable kind '" + s.kind + "'");
            c.observables.push_back(std::move(s));
        }
    }
    if (const json* br = r.array(doc, "config", "branches", false)) {
        for (std::size_t i = 0; i < br->size(); ++i) {
            const json& b = (*br)[i];
            const std::string path = idx("branches", i);
            if (!r.object(b, path, {"label", "subsystem", "levels"})) continue;
            BranchSpec s;
            s.label = r.string(b, path, "label", std::nullopt);
            s.subsystem = r.string(b, path, "subsystem", std::nullopt);
            if (const json* lv = r.array(b, path, "levels", true))
                for (const auto& l : *lv) {
                    if (l.is_number_integer()) s.levels.push_back(l.get<Index>());
                    else r.fail(path + ".levels", "expected integer levels");
                }
            c.branches.push_back(std::move(s));
        }
    }
    if (const json* bp = r.array(doc, "config", "bipartitions", false)) {
        for (std::size_t i = 0; i < bp->size(); ++i) {
            const json& b = (*bp)[i];
            const std::string path = idx("bipartitions", i);
            if (!r.object(b, path, {"name", "side_a"})) continue;
            BipartitionSpec s;
            s.name = r.string(b, path, "name", std::nullopt);
            if (const json* side = r.array(b, path, "side_a", true))
                for (const auto& l : *side) {
                    if (l.is_string()) s.side_a.push_back(l.get<std::string>());
                    else r.fail(path + ".side_a", "expected subsystem labels");
                }
            c.bipartitions.push_back(std::move(s));
        }
    }
    if (const json* au = r.array(doc, "config", "audits", false)) {
        for (std::size_t i = 0; i < au->size(); ++i) {
            const json& a = (*au)[i];
            const std::string path = idx("audits", i);
            if (!r.object(a, path, {"quantity", "kind"})) continue;
            AuditSpec s;
            s.quantity = r.string(a, path, "quantity", std::nullopt);
            s.kind = r.guarded(path + ".kind", [&] { return quantity_kind_from_string(r.string(a, path, "kind", "custom")); });
            c.audits.push_back(std::move(s));
        }
    }
    return c;
}

// Checks that need the assembled space; appends to `errors`.
void check_semantics(const ScenarioConfig& c, std::vector<std::string>& errors) {
    auto fail = [&](const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); };
    if (c.name.empty()) fail("config.name", "must not be empty");
    // Each subsystem is checked alone; bad ones are patched so label checks can still run.
    std::vector<SubsystemSpec> usable;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < c.subsystems.size(); ++i) {
        SubsystemSpec s = c.subsystems[i];
        try {
            make_space({s});
        } catch (const std::exception& e) {
            fail(idx("subsystems", i), e.what());
            s.mass = 1.0;
            s.dim = std::max<Index>(s.dim, s.is_lattice() ? 2 : 1);
            if (s.is_lattice() && !(s.grid_spacing > 0.0)) s.grid_spacing = 1.0;
        }
        if (s.label.empty() || !seen.insert(s.label).second) {
            if (!s.label.empty()) fail(idx("subsystems", i), "duplicate subsystem label '" + s.label + "'");
            continue;
        }
        usable.push_back(std::move(s));
    }
    SpacePtr space;
    try {
        space = make_space(usable);
    } catch (const std::exception& e) {
        fail("subsystems", e.what());
        return;
    }
    bool terms_ok = true;
    for (std::size_t i = 0; i < c.operators.terms.size(); ++i) {
        try {
            validate(OperatorSpec{{c.operators.terms[i]}}, *space);
        } catch (const std::exception& e) {
            fail(idx("operators", i), e.what());
            terms_ok = false;
        }
    }
    if (terms_ok) {
        try {
            validate(c.operators, *space);
        } catch (const std::exception& e) {
            fail("operators", e.what());
        }
    }

    const auto& init = c.initial_state;
    std::set<std::string> expected;
    for (const auto& s : c.subsystems) expected.insert(s.label);
    if (init.type == InitialStateSpec::Type::two_branch) {
        for (const auto* l : {&init.photon, &init.mirror}) {
            if (!space->contains(*l)) fail("initial_state", "two_branch subsystem '" + *l + "' does not exist");
            expected.erase(*l);
        }
        if (space->contains(init.photon) && space->subsystem(init.photon).dim != 2)
            fail("initial_state.photon", "the photon subsystem must have 2 levels");
    }
    for (const auto& [label, _] : init.factors)
        if (!expected.count(label)) fail("initial_state.factors", "unexpected factor for '" + label + "'");
    for (const auto& label : expected)
        if (!init.factors.count(label)) fail("initial_state.factors", "missing factor for subsystem '" + label + "'");

    std::set<std::string> names;
    for (std::size_t i = 0; i < c.observables.size(); ++i) {
        const auto& o = c.observables[i];
        const std::string path = idx("observables", i);
        if (!names.insert(o.name).second) fail(path, "duplicate observable name '" + o.name + "'");
        if (o.name.empty() || o.name.find_first_of(".:,\"\n ") != std::string::npos)
            fail(path, "observable names must be non-empty and free of '.', ':', ',', quotes and spaces");
        const bool needs_sub = o.kind != "energy" && o.kind != "collapse_mean" && o.kind != "total_shift";
        if (needs_sub && !space->contains(o.subsystem)) {
            fail(path, "kind '" + o.kind + "' needs an existing subsystem");
            continue;
        }
        if (!needs_sub && !o.subsystem.empty()) fail(path, "kind '" + o.kind + "' does not take a subsystem");
        if (o.kind == "local") {
            if (!o.op) fail(path, "local observables need an op");
            else {
                try {
                    if (!is_hermitian_local(local_operator(space->subsystem(o.subsystem), *o.op))) fail(path, "local observable op must be Hermitian");
                } catch (const std::exception& e) {
                    fail(path, e.what());
                }
            }
        } else if (o.op) {
            fail(path, "only local observables take an op");
        }
        if ((o.kind == "position" || o.kind == "momentum" || o.kind == "spread" || o.kind == "local_shift") && needs_sub &&
            space->subsystem(o.subsystem).kind != SubsystemKind::lattice1d)
            fail(path, "kind '" + o.kind + "' needs a lattice subsystem");
    }

    std::set<std::string> branch_labels;
    std::string branch_sub;
    std::vector<int> owner;
    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        const auto& b = c.branches[i];
        const std::string path = idx("branches", i);
        if (!branch_labels.insert(b.label).second || b.label == "none") fail(path, "branch labels must be unique and not 'none'");
        if (b.label.empty() || b.label.find_first_of(",\"\n") != std::string::npos) fail(path, "label must be non-empty without commas or quotes");
        if (!space->contains(b.subsystem)) {
            fail(path, "unknown subsystem '" + b.subsystem + "'");
            continue;
        }
        if (branch_sub.empty()) {
            branch_sub = b.subsystem;
            owner.assign(static_cast<std::size_t>(space->subsystem(b.subsystem).dim), -1);
        } else if (b.subsystem != branch_sub) {
            fail(path, "all branches must live on the same subsystem");
            continue;
        }
        for (Index l : b.levels) {
            if (l < 0 || l >= static_cast<Index>(owner.size())) fail(path, "level " + std::to_string(l) + " out of range");
            else if (owner[static_cast<std::size_t>(l)] >= 0) fail(path, "level " + std::to_string(l) + " belongs to two branches");
            else owner[static_cast<std::size_t>(l)] = static_cast<int>(i);
        }
    }
    if (!owner.empty() && std::count(owner.begin(), owner.end(), -1) > 0) fail("branches", "branches must cover every level of '" + branch_sub + "'");

    std::set<std::string> bp_names;
    for (std::size_t i = 0; i < c.bipartitions.size(); ++i) {
        const auto& b = c.bipartitions[i];
        if (!bp_names.insert(b.name).second) fail(idx("bipartitions", i), "duplicate name '" + b.name + "'");
        if (b.name.empty() || b.name.find_first_of(",\"\n") != std::string::npos) fail(idx("bipartitions", i), "name must be non-empty without commas or quotes");
        try {
            Bipartition::from_side_a(*space, b.side_a);
        } catch (const std::exception& e) {
            fail(idx("bipartitions", i), e.what());
        }
    }

    for (std::size_t i = 0; i < c.audits.size(); ++i) {
        const auto& a = c.audits[i];
        auto it = std::find_if(c.observables.begin(), c.observables.end(), [&](const ObservableSpec& o) { return o.name == a.quantity; });
        if (it == c.observables.end()) fail(idx("audits", i), "no observable named '" + a.quantity + "'");
        else if (it->kind == "spread") fail(idx("audits", i), "spread is not an operator expectation and cannot be audited");
    }
}

json complex_json(cplx z) {
    if (z.imag() == 0.0) return z.real();
    return json::array({z.real(), z.imag()});
}

json local_op_json(const LocalOp& op) {
    if (!op.matrix) return op.name;
    json rows = json::array();
    for (Index r = 0; r < op.matrix->rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < op.matrix->cols(); ++c) row.push_back(complex_json((*op.matrix)(r, c)));
        rows.push_back(row);
    }
    return rows;
}

json term_json(const OperatorTerm& term) {
    return std::visit(
        [](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            json j;
            if constexpr (std::is_same_v<T, KineticTerm>) {
                j = {{"type", "kinetic"}, {"subsystem", t.subsystem}};
                if (t.mass) j["mass"] = *t.mass;
            } else if constexpr (std::is_same_v<T, ExternalTerm>) {
                j = {{"type", "external_potential"}, {"subsystem", t.subsystem}};
                if (t.matrix) j["matrix"] = local_op_json(LocalOp{"matrix", t.matrix});
                else j["values"] = t.diagonal;
            } else if constexpr (std::is_same_v<T, InteractionTerm>) {
                json p = {{"family", to_string(t.potential.family)}};
                if (t.potential.family == PairPotential::Family::tabulated) {
                    p["start"] = t.potential.table_start;
                    p["step"] = t.potential.table_step;
                    p["values"] = t.potential.table;
                } else {
                    p["strength"] = t.potential.strength;
                    p["range"] = t.potential.range;
                }
                j = {{"type", "interaction"}, {"subsystems", {t.subsystem_i, t.subsystem_j}}, {"potential", p}, {"in_hamiltonian", t.in_hamiltonian}};
            } else {
                j = {{"type", "coupling"},
                     {"subsystems", {t.subsystem_i, t.subsystem_j}},
                     {"ops", {local_op_json(t.op_i), local_op_json(t.op_j)}},
                     {"strength", t.strength},
                     {"in_hamiltonian", t.in_hamiltonian}};
            }
            return j;
        },
        term);
}

json factor_json(const FactorSpec& f) {
    switch (f.kind) {
    case FactorSpec::Kind::amplitudes: {
        json a = json::array();
        for (Index i = 0; i < f.amplitudes.size(); ++i) a.push_back(complex_json(f.amplitudes[i]));
        return {{"amplitudes", a}};
    }
    case FactorSpec::Kind::basis: return {{"basis", f.basis}};
    case FactorSpec::Kind::weights: return {{"weights", f.weights}};
    case FactorSpec::Kind::gaussian:
        return {{"gaussian", {{"center", f.gaussian.center}, {"width", f.gaussian.width}, {"momentum", f.gaussian.momentum}}}};
    }
    return {};
}

CVector build_factor(const FactorSpec& f, const SubsystemSpec& sub) {
    CVector v;
    switch (f.kind) {
    case FactorSpec::Kind::amplitudes: v = f.amplitudes; break;
    case FactorSpec::Kind::basis:
        if (f.basis < 0 || f.basis >= sub.dim) throw ValidationError("basis index " + std::to_string(f.basis) + " out of range for '" + sub.label + "'");
        v = CVector::Zero(sub.dim);
        v[f.basis] = 1.0;
        break;
    case FactorSpec::Kind::weights:
        v = CVector::Zero(static_cast<Index>(f.weights.size()));
        for (std::size_t i = 0; i < f.weights.size(); ++i) v[static_cast<Index>(i)] = std::sqrt(f.weights[i]);
        break;
    case FactorSpec::Kind::gaussian: {
        if (sub.kind != SubsystemKind::lattice1d) throw ValidationError("gaussian factors need a lattice subsystem ('" + sub.label + "')");
        return gaussian_packet(CompositeSpace({sub}), sub.label, f.gaussian);
    }
    }
    if (v.size() != sub.dim)
        throw ValidationError("factor for '" + sub.label + "' has " + std::to_string(v.size()) + " entries, expected " + std::to_string(sub.dim));
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("factor for '" + sub.label + "' has zero or non-finite norm");
    return v / n;
}

StateVector build_initial(const ScenarioConfig& c, const SpacePtr& space) {
    const auto& init = c.initial_state;
    std::vector<CVector> factors;
    std::optional<MirrorBranches> mirror;
    for (std::size_t k = 0; k < space->size(); ++k) {
        const auto& sub = space->subsystem(k);
        if (init.type == InitialStateSpec::Type::two_branch && (sub.label == init.photon || sub.label == init.mirror)) continue;
        factors.push_back(build_factor(init.factors.at(sub.label), sub));
    }
    CVector psi;
    if (init.type == InitialStateSpec::Type::product) {
        psi = make_product_state(space, factors).amplitudes();
    } else {
        const auto& msub = space->subsystem(init.mirror);
        MirrorBranches mb = mirror_branches(init.delta, init.mirror_model, msub, init.mirror_width);
        const double overlap = std::abs(mb.reflected.dot(mb.transmitted));
        if (std::abs(overlap - (1.0 - init.delta)) > 1e-6)
            throw ValidationError("delta = " + format_number(init.delta) + " is unrealizable: constructed overlap " + format_number(overlap));
        // Sum over photon level p of |p> (x) branch_p (x) other factors, in space order.
        psi = CVector::Zero(space->total_dim());
        for (int p = 0; p < 2; ++p) {
            CVector term = CVector::Ones(1);
            std::size_t f = 0;
            for (std::size_t k = 0; k < space->size(); ++k) {
                const auto& sub = space->subsystem(k);
                CVector piece;
                if (sub.label == init.photon) {
                    piece = CVector::Zero(2);
                    piece[p] = 1.0;
                } else if (sub.label == init.mirror) {
                    piece = p == 0 ? mb.reflected : mb.transmitted;
                } else {
                    piece = factors[f++];
                }
                term = kron(term, piece);
            }
            psi += term / std::sqrt(2.0);
        }
    }
    StateVector state(space, psi);
    if (init.shift_sector) state = project_shift_sector(state, *init.shift_sector);
    return state;
}

std::string hex_sha256(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 || EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("SHA-256 computation failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return out.str();
}

std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ScenarioConfig parse_config(const json& doc) {
    Reader r;
    ScenarioConfig c = read_config(r, doc);
    {
        // Semantic problems at a path the reader already rejected are echoes; drop them.
        std::vector<std::string> semantic;
        check_semantics(c, semantic);
        const std::vector<std::string> structural = r.errors;
        for (const auto& msg : semantic) {
            const std::string path = msg.substr(0, msg.find(": "));
            bool echo = false;
            for (const auto& prior : structural) {
                const std::string p = prior.substr(0, prior.find(": "));
                echo = echo || path.rfind(p, 0) == 0 || p.rfind(path, 0) == 0;
            }
            if (!echo) r.errors.push_back(msg);
        }
    }
    if (r.errors.empty()) {
        try {
            compile(c);
        } catch (const std::exception& e) {
            r.errors.emplace_back(e.what());
        }
    }
    if (!r.errors.empty()) throw ConfigError(r.errors);
    return c;
}

ScenarioConfig load_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({"malformed JSON at " + line_column(text, e.byte) + ": " + e.what()});
    }
    return parse_config(doc);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return load_config_text(buf.str());
    } catch (const ConfigError& e) {
        std::vector<std::string> problems;
        for (const auto& p : e.problems()) problems.push_back(path.string() + ": " + p);
        throw ConfigError(problems);
    }
}

json to_json(const ScenarioConfig& c) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["name"] = c.name;
    j["description"] = c.description;
    j["subsystems"] = json::array();
    for (const auto& s : c.subsystems) {
        json sj = {{"label", s.label}, {"kind", to_string(s.kind)}, {"dim", s.dim}, {"mass", s.mass}};
        if (s.kind == SubsystemKind::lattice1d) {
            sj["grid_spacing"] = s.grid_spacing;
            sj["periodic"] = s.periodic;
            if (s.origin) sj["origin"] = *s.origin;
        }
        j["subsystems"].push_back(sj);
    }
    j["operators"] = json::array();
    for (const auto& t : c.operators.terms) j["operators"].push_back(term_json(t));
    j["collapse"] = {{"enabled", c.collapse.enabled}, {"c_scale", c.collapse.params.c_scale}, {"tau0", c.collapse.params.tau0}};

    const auto& init = c.initial_state;
    json ij;
    ij["factors"] = json::object();
    for (const auto& [label, f] : init.factors) ij["factors"][label] = factor_json(f);
    if (init.type == InitialStateSpec::Type::product) {
        ij["type"] = "product";
    } else {
        ij["type"] = "two_branch";
        ij["delta"] = init.delta;
        ij["mirror_model"] = to_string(init.mirror_model);
        ij["photon"] = init.photon;
        ij["mirror"] = init.mirror;
        ij["mirror_width"] = init.mirror_width;
    }
    if (init.shift_sector) ij["shift_sector"] = *init.shift_sector;
    j["initial_state"] = ij;

    const auto& p = c.plan;
    j["plan"] = {{"dt", p.dt},
                 {"n_steps", p.n_steps},
                 {"seed", p.seed},
                 {"noise", to_string(p.noise)},
                 {"record_every", p.record_every},
                 {"collapse_threshold", p.collapse_threshold}};
    j["observables"] = json::array();
    for (const auto& o : c.observables) {
        json oj = {{"name", o.name}, {"kind", o.kind}};
        if (!o.subsystem.empty()) oj["subsystem"] = o.subsystem;
        if (o.op) oj["op"] = local_op_json(*o.op);
        j["observables"].push_back(oj);
    }
    j["branches"] = json::array();
    for (const auto& b : c.branches) j["branches"].push_back({{"label", b.label}, {"subsystem", b.subsystem}, {"levels", b.levels}});
    j["bipartitions"] = json::array();
    for (const auto& b : c.bipartitions) j["bipartitions"].push_back({{"name", b.name}, {"side_a", b.side_a}});
    j["audits"] = json::array();
    for (const auto& a : c.audits) j["audits"].push_back({{"quantity", a.quantity}, {"kind", to_string(a.kind)}});
    return j;
}

std::string config_hash(const ScenarioConfig& config) { return hex_sha256(to_json(config).dump()); }

CompiledScenario compile(const ScenarioConfig& c) {
    {
        std::vector<std::string> errors;
        check_semantics(c, errors);
        if (!errors.empty()) throw ConfigError(errors);
    }
    CompiledScenario out;
    out.config = c;
    out.operators = c.operators;
    auto space = make_space(c.subsystems);
    SimulationModel& m = out.model;
    m.space = space;
    m.hamiltonian = assemble_hamiltonian(c.operators, space);
    out.scaled_interactions = scaled_interaction_sum(c.operators, space);
    out.collapse_operator = collapse_operator(out.scaled_interactions, c.collapse.params);
    m.collapse = c.collapse.enabled ? out.collapse_operator : AssembledOperator::zero(space);
    if (c.collapse.enabled && out.collapse_operator.empty())
        out.warnings.push_back("collapse is enabled but there are no interaction terms; the collapse operator is zero");
    if (c.collapse.enabled) {
        const double bound = out.collapse_operator.norm_bound();
        if (c.plan.dt * bound * bound > kStabilityLimit)
            throw ValidationError("plan.dt = " + format_number(c.plan.dt) + " violates dt*|V|^2 <= " + format_number(kStabilityLimit) +
                                  " (|V| = " + format_number(bound) + ")");
    }
    m.initial = build_initial(c, space);

    for (const auto& o : c.observables) {
        ObservableDef d;
        d.name = o.name;
        if (o.kind == "energy") {
            d.op = m.hamiltonian;
        } else if (o.kind == "collapse_mean") {
            d.op = out.collapse_operator;
        } else if (o.kind == "total_shift") {
            d.is_complex = true;
            d.op = total_shift_generator(space);
        } else {
            const std::size_t k = space->index_of(o.subsystem);
            const auto& sub = space->subsystem(k);
            if (o.kind == "local") {
                d.op = AssembledOperator(space, embed_local(*space, k, local_operator(sub, *o.op)), true);
            } else if (o.kind == "position" || o.kind == "momentum") {
                d.op = AssembledOperator(space, embed_local(*space, k, local_operator(sub, o.kind)), true);
            } else if (o.kind == "local_shift") {
                d.is_complex = true;
                d.op = AssembledOperator(space, embed_local(*space, k, local_operator(sub, "shift")), false);
            } else {  // spread
                const CMatrix x = local_operator(sub, "position");
                const AssembledOperator xo(space, embed_local(*space, k, x), true);
                const AssembledOperator x2(space, embed_local(*space, k, x * x), true);
                d.evaluator = [xo, x2](const CVector& psi) -> cplx {
                    const double mean = psi.dot(xo.apply(psi)).real();
                    const double sq = psi.dot(x2.apply(psi)).real();
                    return std::sqrt(std::max(0.0, sq - mean * mean));
                };
            }
        }
        m.observables.push_back(std::move(d));
    }

    if (!c.branches.empty()) {
        const std::size_t k = space->index_of(c.branches.front().subsystem);
        std::vector<int> of_level(static_cast<std::size_t>(space->subsystem(k).dim), -1);
        for (std::size_t b = 0; b < c.branches.size(); ++b) {
            m.branches.labels.push_back(c.branches[b].label);
            for (Index l : c.branches[b].levels) of_level[static_cast<std::size_t>(l)] = static_cast<int>(b);
        }
        m.branches.branch_of_index.resize(static_cast<std::size_t>(space->total_dim()));
        for (Index i = 0; i < space->total_dim(); ++i) m.branches.branch_of_index[static_cast<std::size_t>(i)] = of_level[static_cast<std::size_t>(space->level(i, k))];
    }
    for (const auto& b : c.bipartitions) m.bipartitions.push_back(NamedBipartition{b.name, Bipartition::from_side_a(*space, b.side_a)});

    for (const auto& a : c.audits) {
        std::size_t i = 0;
        while (c.observables[i].name != a.quantity) ++i;
        const auto& def = m.observables[i];
        out.audits.push_back(ConservedQuantity{a.quantity, a.kind, *def.op, def.is_complex});
    }
    return out;
}

AuditContext CompiledScenario::audit_context() const {
    AuditContext ctx;
    ctx.scenario = config.name;
    ctx.hamiltonian = model.hamiltonian;
    ctx.collapse = model.collapse;
    ctx.initial = model.initial;
    ctx.has_external_terms = operators.has_external_terms();
    ctx.branches = model.branches;
    return ctx;
}

TrajectoryRecord run_trajectory(const ScenarioConfig& config, const TrajectoryOptions& options) {
    const CompiledScenario s = compile(config);
    return run_trajectory(s.model, config.plan, options);
}

EnsembleStats run_ensemble(const ScenarioConfig& config, long n_traj, std::uint64_t base_seed, const EnsembleOptions& options) {
    const CompiledScenario s = compile(config);
    return run_ensemble(s.model, config.plan, n_traj, base_seed, options);
}

AuditReport audit_trajectory(const std::vector<TrajectoryRecord>& records, const ScenarioConfig& config) {
    if (!config.certifiable())
        throw AuditError("scenario '" + config.name + "' contains external potentials; conservation audits are refused for such configurations");
    const CompiledScenario s = compile(config);
    return audit_trajectories(records, s.audits, s.audit_context());
}

// ---------------------------------------------------------------------------
// Built-in scenarios

namespace {

ObservableSpec obs(std::string name, std::string kind, std::string sub = "", std::optional<LocalOp> op = std::nullopt) {
    return ObservableSpec{std::move(name), std::move(kind), std::move(sub), std::move(op)};
}

FactorSpec gaussian_factor(double center, double width, double momentum) {
    FactorSpec f;
    f.kind = FactorSpec::Kind::gaussian;
    f.gaussian = GaussianParams{center, width, momentum};
    return f;
}

FactorSpec weights_factor(std::vector<double> w) {
    FactorSpec f;
    f.kind = FactorSpec::Kind::weights;
    f.weights = std::move(w);
    return f;
}

ScenarioConfig two_particle_collision() {
    ScenarioConfig c;
    c.name = "two-particle-collision";
    c.description = "Light particle scattering off a heavy one on a periodic lattice, with interaction-induced collapse";
    c.subsystems = {SubsystemSpec{"p1", SubsystemKind::lattice1d, 64, 1.0, 0.5, true, {}},
                    SubsystemSpec{"p2", SubsystemKind::lattice1d, 64, 100.0, 0.5, true, {}}};
    PairPotential v;
    v.family = PairPotential::Family::gaussian;
    v.strength = 2.0;
    v.range = 1.0;
    c.operators.terms = {KineticTerm{"p1", {}}, KineticTerm{"p2", {}}, InteractionTerm{"p1", "p2", v, true}};
    c.collapse = CollapseSpec{true, CollapseParams{1.0, 1e-3}};
    c.initial_state.factors = {{"p1", gaussian_factor(-6.0, 1.5, 1.5)}, {"p2", gaussian_factor(4.0, 1.0, 0.0)}};
    c.plan = IntegrationPlan{1e-3, 12000, 1, NoiseKind::complex, 200, 1.0 - 1e-6};
    c.observables = {obs("E", "energy"), obs("V", "collapse_mean"), obs("T", "total_shift"), obs("x1", "position", "p1"),
                     obs("x2", "position", "p2"), obs("k1", "momentum", "p1"), obs("k2", "momentum", "p2")};
    c.bipartitions = {BipartitionSpec{"p1|p2", {"p1"}}};
    c.audits = {AuditSpec{"E", QuantityKind::energy}, AuditSpec{"T", QuantityKind::total_quasimomentum}};
    return c;
}

ScenarioConfig free_packet() {
    ScenarioConfig c;
    c.name = "free-packet";
    c.description = "Free Gaussian packet on a hard-wall lattice; collapse disabled";
    c.subsystems = {SubsystemSpec{"p", SubsystemKind::lattice1d, 256, 1.0, 0.125, false, {}}};
    c.operators.terms = {KineticTerm{"p", {}}};
    c.collapse = CollapseSpec{false, CollapseParams{}};
    c.initial_state.factors = {{"p", gaussian_factor(0.0, 1.0, 0.0)}};
    c.plan = IntegrationPlan{5e-4, 4000, 1, NoiseKind::complex, 400, 1.0 - 1e-6};
    c.observables = {obs("x", "position", "p"), obs("width", "spread", "p"), obs("E", "energy"), obs("k", "momentum", "p")};
    c.audits = {AuditSpec{"E", QuantityKind::energy}};
    return c;
}

ScenarioConfig stern_gerlach() {
    ScenarioConfig c;
    c.name = "stern-gerlach";
    c.description = "Spin coupled to a pointer coordinate; the pointer separates the spin branches";
    c.subsystems = {SubsystemSpec{"spin", SubsystemKind::spin, 2, 1.0, 0.0, false, {}},
                    SubsystemSpec{"pointer", SubsystemKind::lattice1d, 72, 10.0, 0.3, false, {}}};
    c.operators.terms = {KineticTerm{"pointer", {}}, spin_coupling("spin", "pointer", 0.5)};
    c.collapse = CollapseSpec{true, CollapseParams{1.0, 1e-2}};
    FactorSpec spin;
    spin.kind = FactorSpec::Kind::amplitudes;
    spin.amplitudes = CVector::Constant(2, 1.0 / std::sqrt(2.0));
    c.initial_state.factors = {{"spin", spin}, {"pointer", gaussian_factor(3.0, 1.0, 0.0)}};
    c.plan = IntegrationPlan{1e-3, 5000, 1, NoiseKind::complex, 50, 1.0 - 1e-6};
    c.observables = {obs("sz", "local", "spin", LocalOp{"sigma_z", {}}), obs("x", "position", "pointer"), obs("E", "energy"),
                     obs("V", "collapse_mean")};
    c.branches = {BranchSpec{"up", "spin", {0}}, BranchSpec{"down", "spin", {1}}};
    c.bipartitions = {BipartitionSpec{"spin|pointer", {"spin"}}};
    c.audits = {AuditSpec{"sz", QuantityKind::spin_z}, AuditSpec{"E", QuantityKind::energy}};
    return c;
}

ScenarioConfig beamsplitter() {
    ScenarioConfig c;
    c.name = "beamsplitter";
    c.description = "Photon after a beamsplitter entangled with a two-mode mirror; detection couples to the photon branch";
    c.subsystems = {SubsystemSpec{"photon", SubsystemKind::discrete, 2, 1.0, 0.0, false, {}},
                    SubsystemSpec{"mirror", SubsystemKind::discrete, 2, 1.0, 0.0, false, {}}};
    c.operators.terms = {CouplingTerm{"photon", LocalOp{"sigma_z", {}}, "mirror", LocalOp{"identity", {}}, 2.0, false}};
    c.collapse = CollapseSpec{true, CollapseParams{1.0, 1.0}};
    c.initial_state.type = InitialStateSpec::Type::two_branch;
    c.initial_state.delta = 0.01;
    c.initial_state.mirror_model = MirrorModel::two_mode;
    c.plan = IntegrationPlan{0.01, 2000, 1, NoiseKind::complex, 20, 1.0 - 1e-6};
    c.observables = {obs("sz", "local", "photon", LocalOp{"sigma_z", {}}), obs("V", "collapse_mean")};
    c.branches = {BranchSpec{"reflected", "photon", {0}}, BranchSpec{"transmitted", "photon", {1}}};
    c.bipartitions = {BipartitionSpec{"photon|mirror", {"photon"}}};
    c.audits = {AuditSpec{"sz", QuantityKind::spin_z}};
    return c;
}

ScenarioConfig qnd_two_level() {
    ScenarioConfig c;
    c.name = "qnd-two-level";
    c.description = "Quantum non-demolition collapse of a qubit with V = sigma_z and H = 0";
    c.subsystems = {SubsystemSpec{"qubit", SubsystemKind::spin, 2, 1.0, 0.0, false, {}},
                    SubsystemSpec{"meter", SubsystemKind::discrete, 1, 1.0, 0.0, false, {}}};
    c.operators.terms = {CouplingTerm{"qubit", LocalOp{"sigma_z", {}}, "meter", LocalOp{"identity", {}}, 2.0, false}};
    c.collapse = CollapseSpec{true, CollapseParams{1.0, 1.0}};
    FactorSpec meter;
    meter.kind = FactorSpec::Kind::basis;
    meter.basis = 0;
    c.initial_state.factors = {{"qubit", weights_factor({0.3, 0.7})}, {"meter", meter}};
    c.plan = IntegrationPlan{0.01, 2000, 1, NoiseKind::complex, 20, 1.0 - 1e-6};
    c.observables = {obs("sz", "local", "qubit", LocalOp{"sigma_z", {}}), obs("V", "collapse_mean")};
    c.branches = {BranchSpec{"up", "qubit", {0}}, BranchSpec{"down", "qubit", {1}}};
    c.audits = {AuditSpec{"sz", QuantityKind::spin_z}};
    return c;
}

}  // namespace

std::vector<std::string> builtin_scenario_names() {
    return {"two-particle-collision", "free-packet", "stern-gerlach", "beamsplitter", "qnd-two-level"};
}

ScenarioConfig builtin_scenario(const std::string& name) {
    if (name == "two-particle-collision") return two_particle_collision();
    if (name == "free-packet") return free_packet();
    if (name == "stern-gerlach") return stern_gerlach();
    if (name == "beamsplitter") return beamsplitter();
    if (name == "qnd-two-level") return qnd_two_level();
    std::string known;
    for (const auto& n : builtin_scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown scenario '" + name + "' (known: " + known + ")");
}

ScenarioConfig with_mass_ratio(ScenarioConfig config, double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ValidationError("mass ratio must be positive");
    if (config.subsystems.size() < 2) throw ValidationError("a mass ratio needs at least two subsystems");
    config.subsystems[1].mass = ratio * config.subsystems[0].mass;
    if (!config.collapse.enabled) return config;
    const auto space = make_space(config.subsystems);
    const double bound = collapse_operator(scaled_interaction_sum(config.operators, space), config.collapse.params).norm_bound();
    // Lighter apparatus strengthens V; halve dt until the guard holds, keeping the recorded times.
    while (config.plan.dt * bound * bound > kStabilityLimit) {
        config.plan.dt /= 2.0;
        config.plan.n_steps *= 2;
        config.plan.record_every *= 2;
    }
    return config;
}

}  // namespace clab
