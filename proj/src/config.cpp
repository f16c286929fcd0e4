#include "nlbb/config.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nlbb/stats.hpp"

namespace nlbb {

using nlohmann::json;

int SimulationConfig::resolved_threads() const {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min<unsigned>(hw == 0 ? 1 : hw, 8));
}

namespace {

LevyMeasureSpec parse_levy(const json& j) {
    LevyMeasureSpec spec;
    if (j.contains("atoms")) {
        for (const auto& a : j.at("atoms"))
            spec.atoms.push_back({a.at("w").get<double>(), a.at("y").get<double>()});
    }
    if (j.contains("exp")) {
        spec.exp_component = LevyMeasureSpec::ExpComponent{
            j.at("exp").at("c").get<double>(), j.at("exp").at("rho").get<double>()};
    }
    return spec;
}

json levy_to_json(const LevyMeasureSpec& spec) {
    json j = json::object();
    if (!spec.atoms.empty()) {
        json atoms = json::array();
        for (const auto& a : spec.atoms) atoms.push_back({{"w", a.weight}, {"y", a.y}});
        j["atoms"] = atoms;
    }
    if (spec.exp_component && spec.exp_component->c > 0.0)
        j["exp"] = {{"c", spec.exp_component->c}, {"rho", spec.exp_component->rho}};
    return j;
}

Point parse_point(const json& j, int dim) {
    Point p;
    p.dim = dim;
    int i = 0;
    for (const auto& v : j) {
        if (i >= Point::max_dim) throw ConfigError("point has too many coordinates");
        p.v[i++] = v.get<double>();
    }
    if (i != dim) throw ConfigError("point dimension mismatch");
    return p;
}

json point_to_json(const Point& p) {
    json j = json::array();
    for (int i = 0; i < p.dim; ++i) j.push_back(p.v[i]);
    return j;
}

}  // namespace

void ExperimentConfig::rehash() {
    config_hash = hex64(fnv1a64(to_json_text() + "#" + std::to_string(simulation.seed)));
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg = reference();
    cfg.checks.clear();

    if (j.contains("mechanism")) {
        const auto& m = j.at("mechanism");
        cfg.mechanism.alpha = m.value("alpha", cfg.mechanism.alpha);
        cfg.mechanism.beta = m.value("beta", cfg.mechanism.beta);
        cfg.mechanism.gamma = m.value("gamma", cfg.mechanism.gamma);
        cfg.mechanism.pi_L = m.contains("pi_L") ? parse_levy(m.at("pi_L")) : LevyMeasureSpec{};
        cfg.mechanism.pi_NL = m.contains("pi_NL") ? parse_levy(m.at("pi_NL")) : LevyMeasureSpec{};
    }
    if (j.contains("motion")) {
        const auto& m = j.at("motion");
        cfg.motion.dimension = m.value("dimension", 1);
        cfg.motion.sigma2 = m.value("sigma2", 1.0);
        cfg.motion.drift.clear();
        if (m.contains("drift"))
            for (const auto& v : m.at("drift")) cfg.motion.drift.push_back(v.get<double>());
    }
    if (j.contains("displacement")) {
        const auto& d = j.at("displacement");
        DisplacementKernel k;
        k.dimension = cfg.motion.dimension;
        if (d.contains("point_masses")) {
            for (const auto& pm : d.at("point_masses"))
                k.point_masses.push_back({pm.at("w").get<double>(),
                                          parse_point(pm.at("shift"), k.dimension)});
        }
        if (d.contains("normal")) {
            const auto& nrm = d.at("normal");
            k.normal_weight = nrm.value("weight", 1.0);
            k.normal_var = nrm.value("variance", 1.0);
            k.normal_mean.dim = k.dimension;
            if (nrm.contains("mean")) k.normal_mean = parse_point(nrm.at("mean"), k.dimension);
        }
        cfg.displacement = k;
    } else {
        cfg.displacement = DisplacementKernel::standard_normal(cfg.motion.dimension);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        cfg.solver.dt = s.value("dt", cfg.solver.dt);
        cfg.solver.picard_tol = s.value("picard_tol", cfg.solver.picard_tol);
        cfg.solver.picard_max_iters = s.value("picard_max_iters", cfg.solver.picard_max_iters);
        cfg.solver.grid_L = s.value("grid_L", cfg.solver.grid_L);
        cfg.solver.grid_h = s.value("grid_h", cfg.solver.grid_h);
        cfg.solver.semigroup_tail_tol = s.value("tail_tol", cfg.solver.semigroup_tail_tol);
    }
    if (j.contains("simulation")) {
        const auto& s = j.at("simulation");
        if (!s.contains("seed")) throw ConfigError("simulation block must carry a seed");
        cfg.simulation.seed = s.at("seed").get<std::uint64_t>();
        cfg.simulation.replicates = s.value("replicates", cfg.simulation.replicates);
        cfg.simulation.population_cap =
            s.value("population_cap", cfg.simulation.population_cap);
        cfg.simulation.tree_dt = s.value("tree_dt", cfg.simulation.tree_dt);
        cfg.simulation.epsilon = s.value("epsilon", cfg.simulation.epsilon);
        cfg.simulation.mass_floor = s.value("mass_floor", cfg.simulation.mass_floor);
        cfg.simulation.threads = s.value("threads", cfg.simulation.threads);
    }
    if (j.contains("checks")) {
        for (const auto& c : j.at("checks")) {
            CheckRequest req;
            req.name = c.at("name").get<std::string>();
            for (auto it = c.begin(); it != c.end(); ++it) {
                if (it.key() == "name") continue;
                req.params[it.key()] = it.value().get<double>();
            }
            cfg.checks.push_back(std::move(req));
        }
    } else {
        cfg.checks = reference().checks;
    }
    cfg.mechanism.validate();
    cfg.motion.validate();
    cfg.displacement.validate();
    cfg.solver.validate();
    cfg.rehash();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["mechanism"] = {{"alpha", mechanism.alpha},
                      {"beta", mechanism.beta},
                      {"gamma", mechanism.gamma},
                      {"pi_L", levy_to_json(mechanism.pi_L)},
                      {"pi_NL", levy_to_json(mechanism.pi_NL)}};
    json drift = json::array();
    for (double d : motion.drift) drift.push_back(d);
    j["motion"] = {{"dimension", motion.dimension}, {"sigma2", motion.sigma2}, {"drift", drift}};
    json disp;
    if (!displacement.point_masses.empty()) {
        json pms = json::array();
        for (const auto& pm : displacement.point_masses)
            pms.push_back({{"w", pm.weight}, {"shift", point_to_json(pm.shift)}});
        disp["point_masses"] = pms;
    }
    if (displacement.normal_weight > 0.0)
        disp["normal"] = {{"weight", displacement.normal_weight},
                          {"variance", displacement.normal_var},
                          {"mean", point_to_json(displacement.normal_mean)}};
    j["displacement"] = disp;
    j["solver"] = {{"dt", solver.dt},
                   {"picard_tol", solver.picard_tol},
                   {"picard_max_iters", solver.picard_max_iters},
                   {"grid_L", solver.grid_L},
                   {"grid_h", solver.grid_h},
                   {"tail_tol", solver.semigroup_tail_tol}};
    j["simulation"] = {{"seed", simulation.seed},
                       {"replicates", simulation.replicates},
                       {"population_cap", simulation.population_cap},
                       {"tree_dt", simulation.tree_dt},
                       {"epsilon", simulation.epsilon},
                       {"mass_floor", simulation.mass_floor},
                       {"threads", simulation.threads}};
    json checks = json::array();
    for (const auto& c : this->checks) {
        json jc = {{"name", c.name}};
        for (const auto& [k, v] : c.params) jc[k] = v;
        checks.push_back(jc);
    }
    j["checks"] = checks;
    return j.dump();
}

MechanismSpec mechanism_m0() {
    MechanismSpec m;
    m.alpha = -0.5;
    m.beta = 1.0;
    m.gamma = 1.0;
    return m;
}

std::vector<std::pair<std::string, MechanismSpec>> mechanism_battery() {
    std::vector<std::pair<std::string, MechanismSpec>> out;
    out.emplace_back("M0", mechanism_m0());
    {
        MechanismSpec m;
        m.alpha = -0.6;
        m.beta = 0.5;
        m.pi_L.atoms = {{0.4, 1.2}};
        m.gamma = 0.3;
        m.pi_NL.atoms = {{0.25, 0.8}};
        out.emplace_back("J1", m);
    }
    {
        MechanismSpec m;
        m.alpha = -1.0;
        m.beta = 0.75;
        m.pi_L.exp_component = LevyMeasureSpec::ExpComponent{0.5, 2.0};
        m.gamma = 0.0;
        m.pi_NL.exp_component = LevyMeasureSpec::ExpComponent{0.3, 1.5};
        out.emplace_back("J2", m);
    }
    {
        MechanismSpec m;
        m.alpha = -0.9;
        m.beta = 0.6;
        m.pi_L.atoms = {{0.3, 0.5}, {0.2, 2.0}};
        m.pi_L.exp_component = LevyMeasureSpec::ExpComponent{0.25, 3.0};
        m.gamma = 0.2;
        m.pi_NL.atoms = {{0.5, 0.6}};
        out.emplace_back("J3", m);
    }
    {
        MechanismSpec m;
        m.alpha = -0.7;
        m.beta = 1.2;
        m.pi_L.atoms = {{0.8, 0.3}};
        m.gamma = 0.45;
        m.pi_NL.exp_component = LevyMeasureSpec::ExpComponent{0.2, 1.0};
        out.emplace_back("J4", m);
    }
    return out;
}

ExperimentConfig ExperimentConfig::reference() {
    ExperimentConfig cfg;
    cfg.mechanism = mechanism_m0();
    cfg.motion = MotionSpec{};
    cfg.displacement = DisplacementKernel::standard_normal(1);
    cfg.solver = SolverConfig{};
    cfg.simulation = SimulationConfig{};
    cfg.checks = {{"constants", {}},      {"conditioning_identity", {}},         {"scalar_oracle", {}},
                  {"joint_laplace_mc", {}},    {"poissonization_identity", {}}, {"poissonization_mc", {}},
                  {"backbone_laws", {}},  {"subordinator", {}},   {"particle_mass", {}}};
    cfg.rehash();
    return cfg;
}

}  // namespace nlbb
