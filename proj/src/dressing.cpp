#include "nlbb/dressing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nlbb {

DressingContext::DressingContext(const MechanismSpec& mech, const DerivedConstants& consts,
                                 const DisplacementKernel& kernel, const SolutionField& u_star,
                                 double t)
    : mech_(mech), consts_(consts), kernel_(kernel), u_star_(u_star), t_(t) {
    if (u_star.kind != FieldKind::u_star) throw FieldMismatch("dressing needs a u* field");
    if (u_star.horizon() + 1e-9 < t) throw FieldMismatch("u* horizon shorter than dressing time");
    if (!u_star_.scalar) {
        const ConvOperator D = make_displacement_operator(kernel_, u_star_.grid);
        pi_u_levels_.reserve(u_star_.grid_levels.size());
        for (const auto& level : u_star_.grid_levels) pi_u_levels_.push_back(D.apply(level));
    }
    const OffspringLaws laws = offspring_laws(mech_, consts_);
    for (int n = 2; n <= laws.n_max; ++n)
        if (laws.p_local[n] > 0.0)
            etas_.emplace(std::make_pair(true, n), immigration_law(mech_, consts_, true, n));
    for (int n = 1; n <= laws.n_max; ++n)
        if (laws.p_nonlocal[n] > 0.0)
            etas_.emplace(std::make_pair(false, n), immigration_law(mech_, consts_, false, n));
}

const ImmigrationLaw& DressingContext::eta(bool local, int n) const {
    const auto it = etas_.find(std::make_pair(local, n));
    if (it == etas_.end())
        throw ZeroProbabilityBranch("no branch-point law for this offspring count");
    return it->second;
}

double DressingContext::u_star_at(const Point& x, double s) const {
    return u_star_.eval(x.v[0], s);
}

double DressingContext::pi_u_star_at(const Point& x, double s) const {
    if (u_star_.scalar) return u_star_.eval_scalar(s);
    const int K = static_cast<int>(pi_u_levels_.size()) - 1;
    double idx = s / u_star_.dt;
    idx = std::max(0.0, std::min(idx, double(K)));
    const int k = std::min(static_cast<int>(idx), K > 0 ? K - 1 : 0);
    const double w = (K == 0) ? 0.0 : idx - k;
    if (K == 0) return pi_u_levels_[0].eval(x.v[0]);
    return pi_u_levels_[k].eval(x.v[0]) * (1.0 - w) + pi_u_levels_[k + 1].eval(x.v[0]) * w;
}

double DressingContext::phi_of_u_star_at(const Point& x, double s) const {
    return phi_subordinator(mech_, consts_, u_star_at(x, s));
}

ConditionalLaplace DressingContext::conditional_laplace(const BackboneTree& tree,
                                                        const AtomicMeasure& mu,
                                                        double h_scalar) const {
    return laplace_impl(tree, mu, &h_scalar, nullptr);
}

ConditionalLaplace DressingContext::conditional_laplace(const BackboneTree& tree,
                                                        const AtomicMeasure& mu,
                                                        const GridFunction& h) const {
    return laplace_impl(tree, mu, nullptr, &h);
}

ConditionalLaplace DressingContext::laplace_impl(const BackboneTree& tree, const AtomicMeasure& mu,
                                                 const double* h_scalar,
                                                 const GridFunction* h_grid) const {
    const double t = t_;
    if (tree.horizon + 1e-12 < t) throw FieldMismatch("tree horizon shorter than dressing time");
    ConditionalLaplace out;

    // (a) the initial independent copy under P*_mu
    double exponent_mu = 0.0;
    for (const auto& a : mu.atoms) exponent_mu += a.mass * u_star_at(a.x, t);
    out.initial_factor = std::exp(-exponent_mu);

    // (b) along-branch streams: exp(-sum_u int Phi(u*(z_u(r), t-r)) dr)
    double integral = 0.0;
    const double dt = tree.dt;
    for (const auto& node : tree.nodes) {
        const double a = std::min(t, node.tau);
        const double b = std::min(t, node.sigma);
        if (b <= a) continue;
        double r_prev = a;
        double f_prev = phi_of_u_star_at(tree.position_at(node, a), t - a);
        for (int tick = static_cast<int>(std::floor(a / dt)) + 1; tick * dt < b; ++tick) {
            const double r = tick * dt;
            if (r <= a) continue;
            const double f_here = phi_of_u_star_at(tree.position_at(node, r), t - r);
            integral += 0.5 * (f_prev + f_here) * (r - r_prev);
            r_prev = r;
            f_prev = f_here;
        }
        const double f_end = phi_of_u_star_at(tree.position_at(node, b), t - b);
        integral += 0.5 * (f_prev + f_end) * (b - r_prev);
    }
    out.branch_integral_factor = std::exp(-integral);

    // (c) branch-point factors for splits strictly inside [0, t]
    double branch_factor = 1.0;
    for (const auto& node : tree.nodes) {
        if (node.type == BranchType::alive_at_horizon || node.sigma > t) continue;
        const bool local = node.type == BranchType::local;
        const ImmigrationLaw& law = eta(local, node.n_offspring);
        const double s_rem = t - node.sigma;
        const double c = local ? u_star_at(node.death_pos, s_rem)
                               : pi_u_star_at(node.death_pos, s_rem);
        branch_factor *= law.laplace(c);
    }
    out.branch_point_factor = branch_factor;

    // (d) terminal h factor
    double exponent_h = 0.0;
    for (const auto& node : tree.nodes) {
        const bool alive = (node.tau <= t && t < node.sigma) ||
                           (node.type == BranchType::alive_at_horizon && node.tau <= t &&
                            t <= node.sigma);
        if (!alive) continue;
        if (h_scalar)
            exponent_h += *h_scalar;
        else
            exponent_h += h_grid->eval(tree.position_at(node, t).v[0]);
    }
    out.terminal_factor = std::exp(-exponent_h);

    out.value = out.initial_factor * out.branch_integral_factor * out.branch_point_factor *
                out.terminal_factor;
    return out;
}

namespace {

// Mass sampler for the discontinuous stream: density y e^{-ls y} Pi_L(dy)
// normalized; atoms plus a Gamma(2, ls+rho) component.
struct TiltedJumpSampler {
    std::vector<double> cum;
    std::vector<double> masses;  // atom jump sizes; one extra slot flags the exp component
    double exp_rate = 0.0;
    bool has_exp = false;
    double total_rate = 0.0;

    TiltedJumpSampler(const LevyMeasureSpec& pi, double ls) {
        double c = 0.0;
        for (const auto& a : pi.atoms) {
            c += a.weight * a.y * std::exp(-ls * a.y);
            cum.push_back(c);
            masses.push_back(a.y);
        }
        if (pi.exp_component && pi.exp_component->c > 0.0) {
            has_exp = true;
            exp_rate = ls + pi.exp_component->rho;
            c += pi.exp_component->c / (exp_rate * exp_rate);
            cum.push_back(c);
        }
        total_rate = c;
    }

    double sample(Rng& rng) const {
        const std::size_t idx = rng.pick_cumulative(cum);
        if (idx < masses.size()) return masses[idx];
        return rng.gamma(2.0, exp_rate);
    }
};

}  // namespace

std::vector<ImmigrationEvent> sample_immigration_events(const BackboneTree& tree, double t,
                                                        const MechanismSpec& mech,
                                                        const DerivedConstants& consts,
                                                        double mass_floor, Rng& rng) {
    if (!(mass_floor > 0.0)) throw ConfigError("mass_floor must be positive");
    std::vector<ImmigrationEvent> events;
    const double cont_rate = 2.0 * mech.beta / mass_floor;
    const TiltedJumpSampler jumps(mech.pi_L, consts.lambda_star);

    for (const auto& node : tree.nodes) {
        const double a = std::min(t, node.tau);
        const double b = std::min(t, node.sigma);
        if (b > a) {
            if (cont_rate > 0.0) {
                double r = a + rng.exponential(cont_rate);
                while (r <= b) {
                    events.push_back({ImmSource::continuous_N, node.id, r, mass_floor,
                                      tree.position_at(node, r)});
                    r += rng.exponential(cont_rate);
                }
            }
            if (jumps.total_rate > 0.0) {
                double r = a + rng.exponential(jumps.total_rate);
                while (r <= b) {
                    events.push_back({ImmSource::discontinuous_P, node.id, r, jumps.sample(rng),
                                      tree.position_at(node, r)});
                    r += rng.exponential(jumps.total_rate);
                }
            }
        }
        if (node.type != BranchType::alive_at_horizon && node.sigma <= t) {
            const bool local = node.type == BranchType::local;
            const ImmigrationLaw law = immigration_law(mech, consts, local, node.n_offspring);
            const double y = law.sample(rng);
            events.push_back({local ? ImmSource::branch_local : ImmSource::branch_nonlocal,
                              node.id, node.sigma, y, node.death_pos});
        }
    }
    return events;
}

namespace {

// Event rates of the epsilon-mass particle scheme for the conditioned
// superprocess: critical binary splitting carries the beta term, plain killing
// carries the linear decay q plus the jump compensator, and rare multi-spawn
// events carry the (tilted) jump measures.
struct ConditionedRates {
    double binary = 0.0;        // 0 or 2 local offspring, equal probability
    double kill = 0.0;
    double single_birth = 0.0;  // one displaced offspring, parent kept
    struct Jump {
        double rate = 0.0;
        int count = 0;        // fixed spawn count; 0 means sample from Exp(exp_rate)
        double exp_rate = 0.0;
        bool displaced = false;
    };
    std::vector<Jump> jumps;
    double total = 0.0;

    ConditionedRates(const MechanismSpec& mech, const DerivedConstants& consts, double eps) {
        const double ls = consts.lambda_star;
        binary = 2.0 * mech.beta / eps;
        kill = consts.q + mech.pi_L.u_exp(ls);
        single_birth = mech.gamma;
        auto add_levy = [&](const LevyMeasureSpec& pi, bool displaced) {
            for (const auto& a : pi.atoms) {
                Jump j;
                j.rate = eps * a.weight * std::exp(-ls * a.y);
                j.count = static_cast<int>(std::lround(a.y / eps));
                j.displaced = displaced;
                if (j.rate > 0.0 && j.count > 0) jumps.push_back(j);
            }
            if (pi.exp_component && pi.exp_component->c > 0.0) {
                Jump j;
                j.exp_rate = ls + pi.exp_component->rho;
                j.rate = eps * pi.exp_component->c / j.exp_rate;
                j.displaced = displaced;
                jumps.push_back(j);
            }
        };
        add_levy(mech.pi_L, false);
        add_levy(mech.pi_NL, true);
        total = binary + kill + single_birth;
        for (const auto& j : jumps) total += j.rate;
    }
};

}  // namespace

void evolve_conditioned_parcel(double mass, const Point& pos, double birth, double t,
                               const MechanismSpec& mech, const DerivedConstants& consts,
                               const MotionSpec& motion, const DisplacementKernel& kernel,
                               const ParticleParams& params, Rng& rng,
                               std::vector<Point>& survivors) {
    const double eps = params.epsilon;
    const int n0 = static_cast<int>(std::ceil(mass / eps - 1e-12));
    if (n0 <= 0) return;
    const ConditionedRates rates(mech, consts, eps);

    struct Live {
        double time;
        Point pos;
    };
    std::vector<Live> stack;
    stack.reserve(64);
    for (int i = 0; i < n0; ++i) stack.push_back({birth, pos});
    std::size_t spawned = static_cast<std::size_t>(n0);

    const double s_unit = std::sqrt(motion.sigma2);
    auto advance = [&](Point& p, double from, double to) {
        const double d = to - from;
        if (d <= 0.0) return;
        const double s = s_unit * std::sqrt(d);
        for (int i = 0; i < p.dim; ++i) p.v[i] += motion.drift_axis(i) * d + s * rng.normal();
    };

    while (!stack.empty()) {
        Live p = stack.back();
        stack.pop_back();
        for (;;) {
            const double wait = rng.exponential(rates.total);
            const double t_ev = p.time + wait;
            if (t_ev >= t) {
                advance(p.pos, p.time, t);
                survivors.push_back(p.pos);
                break;
            }
            advance(p.pos, p.time, t_ev);
            p.time = t_ev;
            double u = rng.uniform() * rates.total;
            if (u < rates.binary) {
                if (rng.uniform() < 0.5) break;  // dies childless
                stack.push_back(p);              // two copies in place
                ++spawned;
                continue;
            }
            u -= rates.binary;
            if (u < rates.kill) break;
            u -= rates.kill;
            if (u < rates.single_birth) {
                Live child = p;
                child.pos += sample_displacement(kernel, rng);
                stack.push_back(child);
                ++spawned;
                continue;
            }
            u -= rates.single_birth;
            for (const auto& j : rates.jumps) {
                if (u < j.rate) {
                    int count = j.count;
                    if (count == 0 && j.exp_rate > 0.0)
                        count = static_cast<int>(std::lround(rng.exponential(j.exp_rate) / eps));
                    for (int c = 0; c < count; ++c) {
                        Live child = p;
                        if (j.displaced) child.pos += sample_displacement(kernel, rng);
                        stack.push_back(child);
                    }
                    spawned += static_cast<std::size_t>(count);
                    break;
                }
                u -= j.rate;
            }
            if (spawned > params.population_cap)
                throw PopulationExplosion("conditioned particle system exceeded the cap");
        }
    }
}

DressedState particle_dressing(const BackboneTree& tree, const std::vector<ImmigrationEvent>& events,
                               double t, const AtomicMeasure& mu, const MechanismSpec& mech,
                               const DerivedConstants& consts, const MotionSpec& motion,
                               const DisplacementKernel& kernel, const ParticleParams& params,
                               Rng& rng) {
    (void)tree;
    DressedState state;
    state.epsilon = params.epsilon;
    state.mass_floor = params.mass_floor;
    std::vector<Point> survivors;

    // the initial independent copy under P*_mu
    for (const auto& a : mu.atoms)
        evolve_conditioned_parcel(a.mass, a.x, 0.0, t, mech, consts, motion, kernel, params, rng,
                                  survivors);

    for (const auto& ev : events) {
        if (ev.time > t || ev.mass <= 0.0) continue;
        switch (ev.source) {
            case ImmSource::continuous_N: ++state.n_continuous; break;
            case ImmSource::discontinuous_P: ++state.n_discontinuous; break;
            case ImmSource::branch_local: ++state.n_branch_local; break;
            case ImmSource::branch_nonlocal: ++state.n_branch_nonlocal; break;
        }
        if (ev.source == ImmSource::branch_nonlocal) {
            // diffuse entry measure y*pi(x,.): ceil(y/eps) particles displaced i.i.d.
            const int n = static_cast<int>(std::ceil(ev.mass / params.epsilon - 1e-12));
            for (int i = 0; i < n; ++i) {
                Point p = ev.location;
                p += sample_displacement(kernel, rng);
                evolve_conditioned_parcel(params.epsilon, p, ev.time, t, mech, consts, motion,
                                          kernel, params, rng, survivors);
            }
        } else {
            evolve_conditioned_parcel(ev.mass, ev.location, ev.time, t, mech, consts, motion,
                                      kernel, params, rng, survivors);
        }
    }
    state.atoms.atoms.reserve(survivors.size());
    for (const auto& p : survivors) state.atoms.atoms.push_back({params.epsilon, p});
    return state;
}

}  // namespace nlbb
