#pragma once

#include <map>
#include <optional>
#include <vector>

#include "nlbb/backbone.hpp"
#include "nlbb/mild_solver.hpp"

namespace nlbb {

enum class ImmSource { continuous_N, discontinuous_P, branch_local, branch_nonlocal };

struct ImmigrationEvent {
    ImmSource source = ImmSource::continuous_N;
    int node_id = -1;
    double time = 0.0;   // immigration time r
    double mass = 0.0;   // initial mass y
    Point location;      // entry point; branch-nonlocal clouds are sampled at instantiation
};

struct ConditionalLaplace {
    double value = 1.0;
    double initial_factor = 1.0;          // e^{-<u*(.,t), mu>}
    double branch_integral_factor = 1.0;  // along-branch continuous+discontinuous streams
    double branch_point_factor = 1.0;     // eta-law factors at splitting times
    double terminal_factor = 1.0;         // e^{-<h, Z_t>}
};

struct DressedState {
    AtomicMeasure atoms;  // all masses equal epsilon
    double epsilon = 0.0;
    double mass_floor = 0.0;
    std::size_t n_continuous = 0, n_discontinuous = 0, n_branch_local = 0, n_branch_nonlocal = 0;

    double total_mass() const { return atoms.total_mass(); }
};

// Shared per-experiment state for dressing many trees against one solved u*:
// Phi levels, displacement-convolved u* levels (grid mode) and the eta-law
// cache are built once.
class DressingContext {
public:
    DressingContext(const MechanismSpec& mech, const DerivedConstants& consts,
                    const DisplacementKernel& kernel, const SolutionField& u_star, double t);

    // E[e^{-<f,Delta_t>-<h,Z_t>} | Z] for one tree; f is fixed through u_star.
    ConditionalLaplace conditional_laplace(const BackboneTree& tree, const AtomicMeasure& mu,
                                           double h_scalar) const;
    ConditionalLaplace conditional_laplace(const BackboneTree& tree, const AtomicMeasure& mu,
                                           const GridFunction& h) const;

    const ImmigrationLaw& eta(bool local, int n) const;
    double u_star_at(const Point& x, double s) const;          // u*(x, s)
    double pi_u_star_at(const Point& x, double s) const;       // pi(x, u*(., s))
    double phi_of_u_star_at(const Point& x, double s) const;   // Phi(u*(x, s))
    double horizon() const { return t_; }
    const SolutionField& field() const { return u_star_; }

private:
    ConditionalLaplace laplace_impl(const BackboneTree& tree, const AtomicMeasure& mu,
                                    const double* h_scalar, const GridFunction* h_grid) const;

    const MechanismSpec& mech_;
    const DerivedConstants& consts_;
    const DisplacementKernel& kernel_;
    SolutionField u_star_;
    double t_;
    std::vector<GridFunction> pi_u_levels_;  // grid mode only
    // prebuilt for every offspring count the truncated laws can produce, so
    // lookups are safe from concurrent replicates
    std::map<std::pair<bool, int>, ImmigrationLaw> etas_;
};

// The two Poissonian streams along every branch segment plus the branch-point
// masses; the continuous excursion stream is approximated by mass_floor-sized
// entries at rate 2*beta/mass_floor.
std::vector<ImmigrationEvent> sample_immigration_events(const BackboneTree& tree, double t,
                                                        const MechanismSpec& mech,
                                                        const DerivedConstants& consts,
                                                        double mass_floor, Rng& rng);

struct ParticleParams {
    double epsilon = 1e-3;
    std::size_t population_cap = 4000000;
    double mass_floor = 1e-3;  // recorded on the state as the disclosed O(eps+m) bias scale
};

// Branching-particle evolution of the extinction-conditioned superprocess for
// a single initial parcel of mass `mass` at `pos`, from `birth` to `t`.
// Appends surviving particle positions.
void evolve_conditioned_parcel(double mass, const Point& pos, double birth, double t,
                               const MechanismSpec& mech, const DerivedConstants& consts,
                               const MotionSpec& motion, const DisplacementKernel& kernel,
                               const ParticleParams& params, Rng& rng,
                               std::vector<Point>& survivors);

// Assembles the atomic-measure approximation of Delta_t: the initial copy
// under P*_mu plus every immigration event instantiated at ceil(y/eps)
// particles of mass eps and evolved to t.
DressedState particle_dressing(const BackboneTree& tree, const std::vector<ImmigrationEvent>& events,
                               double t, const AtomicMeasure& mu, const MechanismSpec& mech,
                               const DerivedConstants& consts, const MotionSpec& motion,
                               const DisplacementKernel& kernel, const ParticleParams& params,
                               Rng& rng);

}  // namespace nlbb
