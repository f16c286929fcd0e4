#include "nlbb/checks.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "nlbb/dressing.hpp"
#include "nlbb/stats.hpp"

namespace nlbb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ReportRecord record(std::string name, double target, std::string provenance, double estimate,
                    double se, std::string tol_rule, bool pass) {
    ReportRecord r;
    r.name = std::move(name);
    r.target = target;
    r.provenance = std::move(provenance);
    r.estimate = estimate;
    r.se = se;
    r.tol_rule = std::move(tol_rule);
    r.pass = pass;
    return r;
}

ReportRecord abs_tol_record(std::string name, double target, std::string provenance,
                            double estimate, double tol) {
    const bool pass = std::abs(estimate - target) <= tol;
    return record(std::move(name), target, std::move(provenance), estimate, 0.0,
                  "|estimate-target| <= " + fmt_g(tol, 3), pass);
}

// Deterministic replicate-parallel map: slot i is always computed by fn(i)
// with its own RNG stream, so results are independent of the thread count.
template <typename T, typename F>
std::vector<T> replicate_map(int n, int threads, F&& fn) {
    std::vector<T> out(n);
    if (threads <= 1 || n < 256) {
        for (int i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&] {
        for (;;) {
            const int start = next.fetch_add(128);
            if (start >= n) return;
            const int end = std::min(start + 128, n);
            try {
                for (int i = start; i < end; ++i) out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

struct CheckContext {
    const ExperimentConfig& cfg;
    const CheckRequest& req;
    std::vector<ReportRecord>& records;

    std::uint64_t stream_base(const std::string& suffix = "") const {
        return fnv1a64(req.name + suffix);
    }
    int threads() const { return cfg.simulation.threads == 0 ? cfg.simulation.resolved_threads()
                                                             : cfg.simulation.threads; }
};

// --------------------------------------------------------- constants

void check_constants(CheckContext& ctx) {
    const MechanismSpec m0 = mechanism_m0();
    const DerivedConstants consts = derive_constants(m0);
    const OffspringLaws laws = offspring_laws(m0, consts);
    auto& out = ctx.records;
    out.push_back(abs_tol_record("constants/lambda_star", 0.5, "closed-form", consts.lambda_star,
                                 1e-10));
    out.push_back(abs_tol_record("constants/q", 1.5, "closed-form", consts.q, 1e-12));
    out.push_back(abs_tol_record("constants/p_L_2", 1.0 / 3.0, "closed-form", laws.p_local[2],
                                 1e-12));
    out.push_back(abs_tol_record("constants/p_NL_1", 2.0 / 3.0, "closed-form", laws.p_nonlocal[1],
                                 1e-12));
    for (const auto& [name, mech] : mechanism_battery()) {
        const DerivedConstants c = derive_constants(mech);
        const OffspringLaws l = offspring_laws(mech, c);
        out.push_back(abs_tol_record("constants/offspring_sum_" + name, 1.0, "closed-form",
                                     l.local_total() + l.nonlocal_total(), 1e-9));
    }
}

// --------------------------------------------- conditioning_identity

void check_conditioning_identity(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const double ls = consts.lambda_star;
    const double T = ctx.req.param("t", 2.0);
    SolverConfig scfg = ctx.cfg.solver;

    double scalar_gap = 0.0;
    for (double theta : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        const SolutionField ustar = solve_u_star_scalar(mech, consts, theta, T, scfg);
        const SolutionField u = solve_u_scalar(mech, consts, theta + ls, T, scfg);
        for (int k = 0; k < ustar.levels(); ++k)
            scalar_gap = std::max(scalar_gap,
                                  std::abs(ustar.scalar_levels[k] - (u.scalar_levels[k] - ls)));
    }
    ctx.records.push_back(abs_tol_record("conditioning_identity/scalar_gap", 0.0, "identity", scalar_gap, 1e-6));

    const MotionSpec motion = ctx.cfg.motion;
    const DisplacementKernel& kernel = ctx.cfg.displacement;
    const GridSpec grid = scfg.grid();
    std::vector<std::function<double(double)>> shapes = {
        [](double x) { return 0.8 * std::exp(-x * x); },
        [](double x) { return 1.2 * std::exp(-(x - 1.0) * (x - 1.0) / 0.5); },
        [](double x) { return (x >= -0.5 && x <= 0.5) ? 0.6 : 0.0; },
        [](double) { return 0.7; },
        [](double x) {
            const double s = std::sin(x);
            return 0.5 * std::exp(-(x + 2.0) * (x + 2.0)) + 0.3 * s * s * std::exp(-x * x / 4.0);
        }};
    double grid_gap = 0.0;
    for (const auto& shape : shapes) {
        const GridFunction f = GridFunction::from(grid, shape);
        const SolutionField ustar = solve_u_star_grid(mech, consts, motion, kernel, f, T, scfg);
        GridFunction f_shift = f;
        for (double& v : f_shift.values) v += ls;
        const SolutionField u = solve_u_grid(mech, consts, motion, kernel, f_shift, T, scfg);
        for (int k = 0; k < ustar.levels(); ++k)
            for (int i = 0; i < grid.n; ++i)
                grid_gap = std::max(grid_gap, std::abs(ustar.grid_levels[k].values[i] -
                                                       (u.grid_levels[k].values[i] - ls)));
    }
    ctx.records.push_back(abs_tol_record("conditioning_identity/grid_gap", 0.0, "identity", grid_gap, 1e-4));
}

// ----------------------------------------------------- scalar_oracle

void check_scalar_oracle(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    // logistic closed form for M0: u_t(theta) = a theta e^{at} / (a + beta theta (e^{at}-1))
    const double a = 0.5, beta = 1.0, theta = 1.0, t = 1.0;
    const double target = a * theta * std::exp(a * t) / (a + beta * theta * (std::exp(a * t) - 1.0));
    const double est = ode_csbp(mech, consts, theta, CsbpVariant::total_mass, t, t).final_value();
    ctx.records.push_back(abs_tol_record("scalar_oracle/logistic", target, "closed-form", est,
                                         1e-8));
    const double w50 = extinction_exponent(mech, consts, 50.0, 1e6);
    ctx.records.push_back(abs_tol_record("scalar_oracle/extinction", std::exp(-0.5), "closed-form",
                                         std::exp(-w50), 1e-6));
}

// -------------------------------------------------- joint_laplace_mc

void check_joint_laplace_mc(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const OffspringLaws laws = offspring_laws(mech, consts);
    const double f = ctx.req.param("f", 0.5);
    const double h = ctx.req.param("h", 0.2);
    const double t = ctx.req.param("t", 1.0);
    const int R = static_cast<int>(ctx.req.param("replicates", ctx.cfg.simulation.replicates));

    const SolutionField ustar = solve_u_star_scalar(mech, consts, f, t, ctx.cfg.solver);
    const SolutionField v = solve_v_scalar(mech, consts, h, ustar, ctx.cfg.solver);
    const double target = std::exp(-ustar.scalar_levels.back()) * v.scalar_levels.back();

    const DisplacementKernel& kernel = ctx.cfg.displacement;
    const MotionSpec motion = ctx.cfg.motion;
    const DressingContext dressing(mech, consts, kernel, ustar, t);
    const AtomicMeasure mu = AtomicMeasure::unit_atom(make_point(0.0));
    const AtomicMeasure nu = AtomicMeasure::unit_atom(make_point(0.0));
    const TreeParams tp{ctx.cfg.simulation.tree_dt, ctx.cfg.simulation.population_cap};
    const std::uint64_t base = ctx.stream_base();

    std::vector<double> values = replicate_map<double>(R, ctx.threads(), [&](int i) {
        Rng rng(ctx.cfg.simulation.seed, base + static_cast<std::uint64_t>(i));
        BackboneTree tree = sample_tree(nu, t, mech, consts, laws, motion, kernel, tp, rng);
        return dressing.conditional_laplace(tree, mu, h).value;
    });
    const MeanSE ms = mean_se(values);
    ctx.records.push_back(record("joint_laplace_mc/value", target, "solver", ms.mean, ms.se,
                                 "|estimate-target| <= 3*SE",
                                 std::abs(ms.mean - target) <= 3.0 * ms.se));
    ctx.records.push_back(record("joint_laplace_mc/se_informative", 0.003 * target, "solver", ms.se,
                                 0.0, "SE < 0.3% of target", ms.se < 0.003 * target));
}

// ------------------------------------------- poissonization_identity

void check_poissonization_identity(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const double ls = consts.lambda_star;
    const SolverConfig scfg = ctx.cfg.solver;
    const double T = 2.0;
    const std::vector<double> fs = {0.1, 0.5, 1.0};
    const std::vector<double> hs = {0.0, 0.2, 1.0};
    const std::vector<double> ts = {0.5, 1.0, 2.0};

    double max_resid = 0.0;
    for (double f : fs) {
        const SolutionField ustar_f = solve_u_star_scalar(mech, consts, f, T, scfg);
        for (double h : hs) {
            const SolutionField v_fh = solve_v_scalar(mech, consts, h, ustar_f, scfg);
            const double f2 = f + ls * (1.0 - std::exp(-h));
            const SolutionField ustar_f2 = solve_u_star_scalar(mech, consts, f2, T, scfg);
            const SolutionField v_f20 = solve_v_scalar(mech, consts, 0.0, ustar_f2, scfg);
            const SolutionField u_mid = solve_u_scalar(mech, consts, f2, T, scfg);
            for (double t : ts) {
                const double lhs = ustar_f.eval_scalar(t) + ls * (1.0 - v_fh.eval_scalar(t));
                const double rhs = ustar_f2.eval_scalar(t) + ls * (1.0 - v_f20.eval_scalar(t));
                const double mid = u_mid.eval_scalar(t);
                max_resid = std::max(max_resid, std::abs(lhs - rhs));
                max_resid = std::max(max_resid, std::abs(lhs - mid));
            }
        }
    }
    ctx.records.push_back(abs_tol_record("poissonization_identity/max_residual", 0.0, "identity",
                                         max_resid, 1e-6));
}

// ------------------------------------------------- poissonization_mc

void check_poissonization_mc(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const OffspringLaws laws = offspring_laws(mech, consts);
    const double f = ctx.req.param("f", 0.5);
    const double t = ctx.req.param("t", 1.0);
    const int R = static_cast<int>(ctx.req.param("replicates", ctx.cfg.simulation.replicates));

    const SolutionField u = solve_u_scalar(mech, consts, f, t, ctx.cfg.solver);
    const double target = std::exp(-u.scalar_levels.back());
    const SolutionField ustar = solve_u_star_scalar(mech, consts, f, t, ctx.cfg.solver);

    const DisplacementKernel& kernel = ctx.cfg.displacement;
    const MotionSpec motion = ctx.cfg.motion;
    const DressingContext dressing(mech, consts, kernel, ustar, t);
    const AtomicMeasure mu = AtomicMeasure::unit_atom(make_point(0.0));
    const TreeParams tp{ctx.cfg.simulation.tree_dt, ctx.cfg.simulation.population_cap};
    const std::uint64_t base = ctx.stream_base();

    std::vector<double> values = replicate_map<double>(R, ctx.threads(), [&](int i) {
        Rng rng(ctx.cfg.simulation.seed, base + static_cast<std::uint64_t>(i));
        const AtomicMeasure nu = poissonize(mu, consts.lambda_star, rng);
        BackboneTree tree = sample_tree(nu, t, mech, consts, laws, motion, kernel, tp, rng);
        return dressing.conditional_laplace(tree, mu, 0.0).value;
    });
    const MeanSE ms = mean_se(values);
    ctx.records.push_back(record("poissonization_mc/value", target, "solver", ms.mean, ms.se,
                                 "|estimate-target| <= 3*SE",
                                 std::abs(ms.mean - target) <= 3.0 * ms.se));
}

// ----------------------------------------------------- backbone_laws

void check_backbone_laws(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const OffspringLaws laws = offspring_laws(mech, consts);
    const double t = ctx.req.param("t", 1.0);
    const int R = static_cast<int>(ctx.req.param("replicates", ctx.cfg.simulation.replicates));
    const DisplacementKernel& kernel = ctx.cfg.displacement;
    const MotionSpec motion = ctx.cfg.motion;
    const TreeParams tp{ctx.cfg.simulation.tree_dt, ctx.cfg.simulation.population_cap};
    const std::uint64_t base = ctx.stream_base();
    const AtomicMeasure nu = AtomicMeasure::unit_atom(make_point(0.0));

    struct Sample {
        double lifetime_sum = 0.0, lifetime_sq = 0.0;
        std::uint64_t nodes = 0, deaths = 0, locals = 0;
        double z_count = 0.0;
        std::vector<std::uint32_t> local_counts, nonlocal_counts;
    };
    std::vector<Sample> samples = replicate_map<Sample>(R, ctx.threads(), [&](int i) {
        Rng rng(ctx.cfg.simulation.seed, base + static_cast<std::uint64_t>(i));
        BackboneTree tree = sample_tree(nu, t, mech, consts, laws, motion, kernel, tp, rng);
        Sample s;
        s.local_counts.assign(laws.n_max + 1, 0);
        s.nonlocal_counts.assign(laws.n_max + 1, 0);
        for (const auto& node : tree.nodes) {
            ++s.nodes;
            s.lifetime_sum += node.lifetime_draw;
            s.lifetime_sq += node.lifetime_draw * node.lifetime_draw;
            if (node.type == BranchType::alive_at_horizon) continue;
            ++s.deaths;
            if (node.type == BranchType::local) {
                ++s.locals;
                ++s.local_counts[node.n_offspring];
            } else {
                ++s.nonlocal_counts[node.n_offspring];
            }
        }
        s.z_count = static_cast<double>(evaluate_Z(tree, t).size());
        return s;
    });

    double life_sum = 0.0, life_sq = 0.0;
    std::uint64_t nodes = 0, deaths = 0, locals = 0;
    std::vector<std::uint64_t> counts(2 * (laws.n_max + 1), 0);
    std::vector<double> z_counts(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        life_sum += s.lifetime_sum;
        life_sq += s.lifetime_sq;
        nodes += s.nodes;
        deaths += s.deaths;
        locals += s.locals;
        for (int n = 0; n <= laws.n_max; ++n) {
            counts[n] += s.local_counts[n];
            counts[laws.n_max + 1 + n] += s.nonlocal_counts[n];
        }
        z_counts[i] = s.z_count;
    }

    const double life_mean = life_sum / double(nodes);
    const double life_var = life_sq / double(nodes) - life_mean * life_mean;
    const double life_se = std::sqrt(life_var / double(nodes));
    ctx.records.push_back(record("backbone_laws/lifetime_mean", 1.0 / consts.q, "closed-form",
                                 life_mean, life_se, "|estimate-target| <= 3*SE",
                                 std::abs(life_mean - 1.0 / consts.q) <= 3.0 * life_se));

    const double p_local = laws.local_total();
    const double frac = double(locals) / double(deaths);
    const double frac_se = std::sqrt(frac * (1.0 - frac) / double(deaths));
    ctx.records.push_back(record("backbone_laws/local_fraction", p_local, "closed-form", frac,
                                 frac_se, "|estimate-target| <= 3*SE",
                                 std::abs(frac - p_local) <= 3.0 * frac_se));

    std::vector<std::uint64_t> obs;
    std::vector<double> probs;
    for (int n = 0; n <= laws.n_max; ++n) {
        if (laws.p_local[n] > 0.0) {
            obs.push_back(counts[n]);
            probs.push_back(laws.p_local[n]);
        }
    }
    for (int n = 0; n <= laws.n_max; ++n) {
        if (laws.p_nonlocal[n] > 0.0) {
            obs.push_back(counts[laws.n_max + 1 + n]);
            probs.push_back(laws.p_nonlocal[n]);
        }
    }
    const Chi2Result chi = chi2_gof(obs, probs);
    ctx.records.push_back(record("backbone_laws/offspring_chi2_p", 0.001, "closed-form",
                                 chi.p_value, 0.0, "p-value > 0.001", chi.p_value > 0.001));

    const MeanSE growth = mean_se(z_counts);
    const double target = std::exp(consts.mean_rate * t);
    ctx.records.push_back(record("backbone_laws/mean_growth", target, "closed-form", growth.mean,
                                 growth.se, "|estimate-target| <= 3*SE",
                                 std::abs(growth.mean - target) <= 3.0 * growth.se));
}

// ------------------------------------------------------ subordinator

void check_subordinator(CheckContext& ctx) {
    Rng rng(ctx.cfg.simulation.seed, ctx.stream_base());
    double max_rel = 0.0;
    for (const auto& [name, mech] : mechanism_battery()) {
        (void)name;
        const DerivedConstants consts = derive_constants(mech);
        for (int i = 0; i < 100; ++i) {
            const double lam = rng.uniform(0.0, 10.0);
            const auto [f1, f2] = subordinator_forms(mech, consts, lam);
            max_rel = std::max(max_rel, std::abs(f1 - f2) / (1.0 + std::abs(f1)));
        }
    }
    ctx.records.push_back(abs_tol_record("subordinator/max_rel_gap", 0.0, "identity", max_rel,
                                         1e-10));
}

// ----------------------------------------------------- particle_mass

void check_particle_mass(CheckContext& ctx) {
    const MechanismSpec mech = mechanism_m0();
    const DerivedConstants consts = derive_constants(mech);
    const OffspringLaws laws = offspring_laws(mech, consts);
    const double t = ctx.req.param("t", 1.0);
    const double eps0 = ctx.req.param("epsilon", 0.01);
    const double m0 = ctx.req.param("mass_floor", 0.01);
    const int R = static_cast<int>(ctx.req.param("replicates", 16000));
    const std::vector<double> lams = {0.5, 1.0, 2.0};

    std::vector<double> targets;
    for (double lam : lams)
        targets.push_back(std::exp(
            -ode_csbp(mech, consts, lam, CsbpVariant::total_mass, t, t).final_value()));

    const DisplacementKernel& kernel = ctx.cfg.displacement;
    const MotionSpec motion = ctx.cfg.motion;
    const TreeParams tp{ctx.cfg.simulation.tree_dt, ctx.cfg.simulation.population_cap};
    const AtomicMeasure mu = AtomicMeasure::unit_atom(make_point(0.0));

    struct Level {
        double eps, m;
        std::vector<MeanSE> stats;  // per lambda
        std::vector<double> gaps;
    };
    std::vector<Level> levels;
    const char* level_names[2] = {"coarse", "fine"};
    for (int lvl = 0; lvl < 2; ++lvl) {
        Level level;
        level.eps = eps0 / (1 << lvl);
        level.m = m0 / (1 << lvl);
        const ParticleParams pp{level.eps, ctx.cfg.simulation.population_cap, level.m};
        const std::uint64_t base = ctx.stream_base(std::string("/") + level_names[lvl]);
        std::vector<double> masses = replicate_map<double>(R, ctx.threads(), [&](int i) {
            Rng rng(ctx.cfg.simulation.seed, base + static_cast<std::uint64_t>(i));
            const AtomicMeasure nu = poissonize(mu, consts.lambda_star, rng);
            BackboneTree tree = sample_tree(nu, t, mech, consts, laws, motion, kernel, tp, rng);
            const auto events =
                sample_immigration_events(tree, t, mech, consts, level.m, rng);
            const DressedState state = particle_dressing(tree, events, t, mu, mech, consts,
                                                         motion, kernel, pp, rng);
            return state.total_mass();
        });
        for (std::size_t j = 0; j < lams.size(); ++j) {
            std::vector<double> vals(masses.size());
            for (std::size_t i = 0; i < masses.size(); ++i)
                vals[i] = std::exp(-lams[j] * masses[i]);
            const MeanSE ms = mean_se(vals);
            level.stats.push_back(ms);
            level.gaps.push_back(std::abs(ms.mean - targets[j]));
        }
        levels.push_back(std::move(level));
    }

    // fit gap ~ C*(eps+m) through the origin over all six points
    double num = 0.0, den = 0.0;
    for (const auto& level : levels) {
        const double s = level.eps + level.m;
        for (double gap : level.gaps) {
            num += gap * s;
            den += s * s;
        }
    }
    const double C = den > 0.0 ? num / den : 0.0;

    for (int lvl = 0; lvl < 2; ++lvl) {
        const Level& level = levels[lvl];
        for (std::size_t j = 0; j < lams.size(); ++j) {
            const double band = 3.0 * level.stats[j].se + C * (level.eps + level.m);
            std::ostringstream name;
            name << "particle_mass/" << level_names[lvl] << "_lam" << fmt_g(lams[j], 3);
            ctx.records.push_back(record(name.str(), targets[j], "solver", level.stats[j].mean,
                                         level.stats[j].se,
                                         "|estimate-target| <= 3*SE + C*(eps+m), C = " + fmt_g(C, 4),
                                         level.gaps[j] <= band));
        }
    }
    for (std::size_t j = 0; j < lams.size(); ++j) {
        const double noise = 3.0 * std::sqrt(levels[0].stats[j].se * levels[0].stats[j].se +
                                             levels[1].stats[j].se * levels[1].stats[j].se);
        const bool pass = levels[1].gaps[j] <= levels[0].gaps[j] + noise;
        ctx.records.push_back(record("particle_mass/richardson_lam" + fmt_g(lams[j], 3), 0.0,
                                     "identity", levels[1].gaps[j] - levels[0].gaps[j], noise,
                                     "fine gap <= coarse gap + 3*SE", pass));
    }
    ctx.records.push_back(record("particle_mass/fitted_C", 0.0, "info", C, 0.0,
                                 "informational", true));
}

using CheckFn = void (*)(CheckContext&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> reg = {
        {"constants", check_constants},
        {"conditioning_identity", check_conditioning_identity},
        {"scalar_oracle", check_scalar_oracle},
        {"joint_laplace_mc", check_joint_laplace_mc},
        {"poissonization_identity", check_poissonization_identity},
        {"poissonization_mc", check_poissonization_mc},
        {"backbone_laws", check_backbone_laws},
        {"subordinator", check_subordinator},
        {"particle_mass", check_particle_mass},
    };
    return reg;
}

}  // namespace

std::vector<ReportRecord> run_verify(const ExperimentConfig& cfg) {
    std::vector<ReportRecord> records;
    for (const auto& req : cfg.checks) {
        CheckFn fn = nullptr;
        for (const auto& [name, f] : registry())
            if (name == req.name) fn = f;
        if (!fn) throw ConfigError("unknown check: " + req.name);

        const std::size_t first = records.size();
        const auto t0 = Clock::now();
        CheckContext ctx{cfg, req, records};
        try {
            fn(ctx);
        } catch (const std::exception& e) {
            records.push_back(record(req.name + "/error", 0.0, "error", 0.0, 0.0,
                                     std::string("check aborted: ") + e.what(), false));
        }
        const double elapsed = seconds_since(t0);
        for (std::size_t i = first; i < records.size(); ++i) {
            records[i].runtime_sec = elapsed;
            records[i].config_hash = cfg.config_hash;
        }
    }
    return records;
}

std::string run_derive_report(const ExperimentConfig& cfg) {
    const DerivedConstants consts = derive_constants(cfg.mechanism);
    const OffspringLaws laws = offspring_laws(cfg.mechanism, consts);
    std::ostringstream os;
    os << "derived constants\n";
    os << "  lambda_star    " << fmt_g(consts.lambda_star, 15) << "\n";
    os << "  q              " << fmt_g(consts.q, 15) << "\n";
    os << "  mean_rate      " << fmt_g(consts.mean_rate, 15) << "\n";
    os << "  backbone_rate  " << fmt_g(consts.backbone_rate, 15) << "\n";
    os << "  supercritical  " << (consts.supercritical_ok ? "yes" : "no") << "\n";
    os << "  grey_lower     " << (consts.grey_lower_ok ? "ok" : "violated") << "\n";
    os << "  grey_upper     " << (consts.grey_upper_ok ? "ok" : "violated") << "\n";
    os << "offspring law (n_max = " << laws.n_max << ", tail = " << fmt_g(laws.tail_mass, 3)
       << ")\n";
    for (int n = 2; n <= laws.n_max && n < 12; ++n)
        if (laws.p_local[n] > 0.0)
            os << "  p_L[" << n << "]   " << fmt_g(laws.p_local[n], 15) << "\n";
    for (int n = 1; n <= laws.n_max && n < 12; ++n)
        if (laws.p_nonlocal[n] > 0.0)
            os << "  p_NL[" << n << "]  " << fmt_g(laws.p_nonlocal[n], 15) << "\n";
    const double total = laws.local_total() + laws.nonlocal_total();
    os << "  sum            " << fmt_g(total, 15) << "  (|sum-1| = " << fmt_g(std::abs(total - 1.0), 3)
       << ")\n";
    os << "  mean identity  q*(sum n*p_n - 1) = " << fmt_g(consts.q * (laws.mean_offspring() - 1.0), 15)
       << "  vs mean_rate " << fmt_g(consts.mean_rate, 15) << "\n";
    return os.str();
}

void write_results_tsv(const std::vector<ReportRecord>& records, std::ostream& os) {
    os << "# nlbb-results v1\n";
    os << "name\ttarget\tprovenance\testimate\tse\ttol_rule\tpass\tconfig_hash\n";
    for (const auto& r : records) {
        os << r.name << '\t' << fmt_g(r.target, 17) << '\t' << r.provenance << '\t'
           << fmt_g(r.estimate, 17) << '\t' << fmt_g(r.se, 17) << '\t' << r.tol_rule << '\t'
           << (r.pass ? 1 : 0) << '\t' << r.config_hash << '\n';
    }
}

void write_summary(const std::vector<ReportRecord>& records, std::ostream& os) {
    os << "verification summary\n";
    for (const auto& r : records) {
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  estimate=" << fmt_g(r.estimate, 8)
           << " target=" << fmt_g(r.target, 8);
        if (r.se > 0.0) os << " se=" << fmt_g(r.se, 4);
        os << " (" << r.tol_rule << ", " << fmt_g(r.runtime_sec, 3) << " s)\n";
    }
    os << (all_pass(records) ? "ALL PASS" : "FAILURES PRESENT") << "\n";
}

std::vector<ReportRecord> read_results_tsv(std::istream& is) {
    std::vector<ReportRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("name\t", 0) == 0) continue;
        std::istringstream ls(line);
        ReportRecord r;
        std::string target, estimate, se, pass;
        if (!std::getline(ls, r.name, '\t') || !std::getline(ls, target, '\t') ||
            !std::getline(ls, r.provenance, '\t') || !std::getline(ls, estimate, '\t') ||
            !std::getline(ls, se, '\t') || !std::getline(ls, r.tol_rule, '\t') ||
            !std::getline(ls, pass, '\t') || !std::getline(ls, r.config_hash))
            throw ConfigError("malformed results line: " + line);
        r.target = std::stod(target);
        r.estimate = std::stod(estimate);
        r.se = std::stod(se);
        r.pass = pass == "1";
        out.push_back(std::move(r));
    }
    return out;
}

bool all_pass(const std::vector<ReportRecord>& records) {
    if (records.empty()) return false;
    for (const auto& r : records)
        if (!r.pass) return false;
    return true;
}

}  // namespace nlbb
