#include <cmath>
#include <fstream>

#include "support.hpp"

#include "clab/errors.hpp"
#include "clab/scenario.hpp"
#include "clab/wavepacket.hpp"

using namespace clab;
using namespace clab::testing;
using nlohmann::json;

namespace {

const char* kQnd = R"({
  "name": "qnd",
  "subsystems": [
    {"label": "qubit", "kind": "spin", "dim": 2},
    {"label": "meter", "kind": "discrete", "dim": 1}
  ],
  "operators": [
    {"type": "coupling", "subsystems": ["qubit", "meter"], "ops": ["sigma_z", "identity"], "strength": 2, "in_hamiltonian": false}
  ],
  "initial_state": {"type": "product", "factors": {"qubit": {"weights": [0.3, 0.7]}, "meter": {"basis": 0}}},
  "plan": {"dt": 0.01, "n_steps": 100, "record_every": 10},
  "observables": [{"name": "sz", "kind": "local", "subsystem": "qubit", "op": "sigma_z"}],
  "branches": [{"label": "up", "subsystem": "qubit", "levels": [0]}, {"label": "down", "subsystem": "qubit", "levels": [1]}],
  "audits": [{"quantity": "sz", "kind": "spin_z"}]
})";

std::vector<std::string> problems_of(const std::string& text) {
    try {
        load_config_text(text);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
    for (const auto& p : problems)
        if (p.find(needle) != std::string::npos) return true;
    return false;
}

// Rebuild a JSON value with object keys inserted in reverse order.
json reversed(const json& j) {
    if (j.is_object()) {
        std::vector<std::string> keys;
        for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
        json out = json::object();
        for (auto k = keys.rbegin(); k != keys.rend(); ++k) out[*k] = reversed(j.at(*k));
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& e : j) out.push_back(reversed(e));
        return out;
    }
    return j;
}

}  // namespace

TEST_CASE("minimal QND config is valid") {
    const auto c = load_config_text(kQnd);
    CHECK(c.name == "qnd");
    CHECK(c.subsystems.size() == 2);
    CHECK(c.certifiable());
    const auto compiled = compile(c);
    CHECK(compiled.model.hamiltonian.empty());
    const CMatrix v = compiled.model.collapse.dense();
    CHECK(v(0, 0).real() == doctest::Approx(1.0));
    CHECK(v(1, 1).real() == doctest::Approx(-1.0));
    CHECK(std::norm(compiled.model.initial[0]) == doctest::Approx(0.3));
}

TEST_CASE("unknown key is named") {
    std::string text = kQnd;
    text.replace(text.find(R"("dim": 2})"), 9, R"("dim": 2, "massess": 3})");
    const auto p = problems_of(text);
    REQUIRE(p.size() == 1);
    CHECK(mentions(p, "massess"));
    CHECK(mentions(p, "subsystems[0]"));
}

TEST_CASE("every problem is reported") {
    const auto p = problems_of(R"({"name": "x",
      "subsystems": [{"label": "a", "kind": "spin", "dim": 2, "mass": -1}, {"label": "b", "kind": "lattice1d", "dim": 8}],
      "operators": [{"type": "kinetic", "subsystem": "zz"}, {"type": "warp"}],
      "initial_state": {"type": "product", "factors": {}},
      "plan": {"dt": -1, "n_steps": 10, "record_every": 1},
      "observables": [{"name": "bad name", "kind": "energy"}, {"name": "q", "kind": "teleport"}],
      "extra": 1})");
    INFO(p.size());
    for (const auto& m : p) INFO(m);
    CHECK(mentions(p, "unknown key 'extra'"));
    CHECK(mentions(p, "mass must be positive"));
    CHECK(mentions(p, "grid_spacing"));
    CHECK(mentions(p, "unknown subsystem 'zz'"));
    CHECK(mentions(p, "warp"));
    CHECK(mentions(p, "dt must be positive"));
    CHECK(mentions(p, "missing factor"));
    CHECK(mentions(p, "observables[0]"));
    CHECK(mentions(p, "teleport"));
    CHECK(p.size() >= 9);
}

TEST_CASE("parse errors carry line and column") {
    const auto p = problems_of("{\"name\": \"x\",\n \"subsystems\": [,]}");
    REQUIRE(p.size() == 1);
    CHECK(mentions(p, "line 2, column 17"));
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);
}

TEST_CASE("round trip keeps the hash") {
    for (const auto& name : builtin_scenario_names()) {
        INFO(name);
        const auto c = builtin_scenario(name);
        const auto again = parse_config(to_json(c));
        CHECK(config_hash(again) == config_hash(c));
        CHECK(to_json(again) == to_json(c));
    }
    const auto c = load_config_text(kQnd);
    CHECK(config_hash(load_config_text(to_json(c).dump(2))) == config_hash(c));
}

TEST_CASE("hash ignores key order and tracks content") {
    const json doc = json::parse(kQnd);
    const auto a = parse_config(doc);
    const auto b = parse_config(reversed(doc));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 64);
    json changed = doc;
    changed["plan"]["dt"] = 0.02;
    CHECK(config_hash(parse_config(changed)) != config_hash(a));
}

TEST_CASE("builtins validate and compile") {
    const auto names = builtin_scenario_names();
    CHECK(names.size() == 5);
    for (const auto& n : {"qnd-two-level", "beamsplitter", "two-particle-collision", "stern-gerlach", "free-packet"})
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
    for (const auto& name : names) {
        INFO(name);
        const auto c = builtin_scenario(name);
        CHECK(c.name == name);
        CHECK_NOTHROW(parse_config(to_json(c)));
        const auto compiled = compile(c);
        CHECK(compiled.model.hamiltonian.hermitian());
        CHECK(c.certifiable());
    }
    CHECK_THROWS_AS(builtin_scenario("double-slit"), ValidationError);
}

TEST_CASE("two-particle defaults") {
    const auto c = builtin_scenario("two-particle-collision");
    REQUIRE(c.subsystems.size() == 2);
    CHECK(c.subsystems[0].dim == 64);
    CHECK(c.subsystems[1].dim == 64);
    CHECK(c.subsystems[0].periodic);
    CHECK(c.subsystems[1].mass / c.subsystems[0].mass == doctest::Approx(100.0));
}

TEST_CASE("mass ratio sweep suppresses the collapse operator") {
    auto base = builtin_scenario("two-particle-collision");
    base.plan.dt = 1e-5;
    const double n1 = compile(with_mass_ratio(base, 1.0)).scaled_interactions.norm_bound();
    const double n100 = compile(with_mass_ratio(base, 100.0)).scaled_interactions.norm_bound();
    CHECK(n100 / n1 == doctest::Approx(2.0 / 101.0).epsilon(1e-12));
    CHECK_THROWS_AS(with_mass_ratio(base, 0.0), ValidationError);
}

TEST_CASE("light apparatus refines the time step") {
    const auto base = builtin_scenario("two-particle-collision");
    const auto light = with_mass_ratio(base, 1.0);
    CHECK(light.plan.dt < base.plan.dt);
    CHECK(light.plan.dt * static_cast<double>(light.plan.n_steps) == doctest::Approx(base.plan.dt * static_cast<double>(base.plan.n_steps)));
    CHECK(light.plan.dt * static_cast<double>(light.plan.record_every) == doctest::Approx(base.plan.dt * static_cast<double>(base.plan.record_every)));
    CHECK_NOTHROW(compile(light));
    CHECK(with_mass_ratio(base, 100.0).plan.dt == base.plan.dt);
}

TEST_CASE("beamsplitter reproduces the two-branch entropy") {
    const auto c = builtin_scenario("beamsplitter");
    auto plan_short = c;
    plan_short.plan.n_steps = plan_short.plan.record_every;
    const auto rec = run_trajectory(plan_short);
    REQUIRE(!rec.entropy_series.empty());
    CHECK(std::abs(rec.entropy_series[0].values.front() - two_branch_entropy_exact(1.0 - c.initial_state.delta)) < 1e-6);
    CHECK(c.initial_state.delta == 0.01);
}

TEST_CASE("free packet reproduces the spreading law") {
    const auto c = builtin_scenario("free-packet");
    CHECK_FALSE(c.collapse.enabled);
    const auto rec = run_trajectory(c);
    const auto& width = rec.observable("width").values;
    const double t_end = rec.times.back();
    const double expect = packet_width({c.initial_state.factors.at("p").gaussian.width, c.subsystems[0].mass, 1.0, t_end});
    CHECK(width.back().real() == doctest::Approx(expect).epsilon(0.01));
    CHECK(t_end == doctest::Approx(2.0));
    CHECK(expect == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("scenario runs are deterministic") {
    const auto c = load_config_text(kQnd);
    const auto a = run_trajectory(c);
    const auto b = run_trajectory(c);
    CHECK(a.observable("sz").values == b.observable("sz").values);
    auto other = c;
    other.plan.seed = 99;
    CHECK(run_trajectory(other).observable("sz").values != a.observable("sz").values);
}

TEST_CASE("audits refuse external potentials") {
    const auto c = load_config_text(R"({
      "name": "ext",
      "subsystems": [{"label": "q", "kind": "spin", "dim": 2}, {"label": "m", "kind": "discrete", "dim": 1}],
      "operators": [
        {"type": "external_potential", "subsystem": "q", "values": [0.5, -0.5]},
        {"type": "coupling", "subsystems": ["q", "m"], "ops": ["sigma_z", "identity"], "strength": 2, "in_hamiltonian": false}
      ],
      "initial_state": {"type": "product", "factors": {"q": {"amplitudes": [1, 1]}, "m": {"basis": 0}}},
      "plan": {"dt": 0.01, "n_steps": 20, "record_every": 10},
      "observables": [{"name": "sz", "kind": "local", "subsystem": "q", "op": "sigma_z"}],
      "audits": [{"quantity": "sz", "kind": "spin_z"}]
    })");
    CHECK_FALSE(c.certifiable());
    const auto recs = run_ensemble(c, 4, 0, EnsembleOptions{false, true, 0}).records;
    CHECK_THROWS_AS(audit_trajectory(recs, c), AuditError);
}

TEST_CASE("QND audit through the scenario layer") {
    auto c = builtin_scenario("qnd-two-level");
    const auto recs = run_ensemble(c, 64, 0, EnsembleOptions{false, true, 0}).records;
    const auto report = audit_trajectory(recs, c);
    CHECK(report.pass);
    REQUIRE(report.quantities.size() == 1);
    CHECK(report.quantities[0].classification == ConservationClass::martingale);
}

TEST_CASE("shift sector initial state") {
    auto doc = to_json(builtin_scenario("two-particle-collision"));
    doc["initial_state"]["shift_sector"] = 3;
    const auto c = parse_config(doc);
    const auto compiled = compile(c);
    const auto t = total_shift_generator(compiled.model.space);
    const CVector& psi = compiled.model.initial.amplitudes();
    const cplx phase = std::polar(1.0, 2.0 * std::numbers::pi * 3.0 / 64.0);
    CHECK((t.apply(psi) - phase * psi).norm() < 1e-12);
}

TEST_CASE("stability guard is checked at load time") {
    auto doc = json::parse(kQnd);
    doc["plan"]["dt"] = 0.5;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("semantic checks") {
    auto doc = json::parse(kQnd);
    SUBCASE("branches must cover the subsystem") {
        doc["branches"].erase(1);
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("audits must reference observables") {
        doc["audits"][0]["quantity"] = "nope";
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("local ops must be Hermitian") {
        doc["observables"][0]["op"] = json::array({json::array({0, 1}), json::array({0, 0})});
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("bipartition labels must exist") {
        doc["bipartitions"] = json::array({{{"name", "cut"}, {"side_a", {"ghost"}}}});
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("duplicate observable names") {
        doc["observables"].push_back(doc["observables"][0]);
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
}
