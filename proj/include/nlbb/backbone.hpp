#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlbb/mechanism.hpp"
#include "nlbb/motion.hpp"

namespace nlbb {

struct AtomicMeasure {
    struct Atom {
        double mass = 0.0;
        Point x;
    };
    std::vector<Atom> atoms;

    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.mass;
        return s;
    }
    std::size_t size() const { return atoms.size(); }
    bool empty() const { return atoms.empty(); }
    void validate() const {
        for (const auto& a : atoms)
            if (!(a.mass > 0.0)) throw ConfigError("atomic measure masses must be positive");
    }
    static AtomicMeasure unit_atom(const Point& x) { return AtomicMeasure{{{1.0, x}}}; }
};

enum class BranchType { local, nonlocal, alive_at_horizon };

struct BackboneNode {
    int id = -1;
    int parent = -1;                  // -1 for initial particles
    std::vector<int> label;           // Ulam-Harris: initial-atom index, then child indices
    double tau = 0.0;                 // birth time
    double sigma = 0.0;               // death time (== horizon for alive particles)
    double lifetime_draw = 0.0;       // the uncensored Exp(q) draw
    BranchType type = BranchType::alive_at_horizon;
    int n_offspring = 0;
    Point birth_pos, death_pos;
    std::vector<Point> path;          // positions at grid times, see first_tick
    int first_tick = 0;               // path[j] is the position at (first_tick + j)*dt
    std::vector<Point> child_positions;
};

struct BackboneTree {
    std::vector<BackboneNode> nodes;
    double horizon = 0.0;
    double dt = 0.0;
    AtomicMeasure nu;

    // position of node at time t in [tau, sigma], linearly interpolated
    // between the stored grid-time samples
    Point position_at(const BackboneNode& node, double t) const;
    std::string label_string(const BackboneNode& node) const;
};

struct TreeParams {
    double dt = 1e-3;
    std::size_t population_cap = 1000000;
};

// Samples the backbone branching diffusion up to the horizon. Throws
// PopulationExplosion when the cap is hit.
BackboneTree sample_tree(const AtomicMeasure& nu, double horizon, const MechanismSpec& mech,
                         const DerivedConstants& consts, const OffspringLaws& laws,
                         const MotionSpec& motion, const DisplacementKernel& kernel,
                         const TreeParams& params, Rng& rng);

// Poisson random measure with intensity lambda_star * mu: a Poisson number of
// unit atoms at locations drawn i.i.d. from mu normalized.
AtomicMeasure poissonize(const AtomicMeasure& mu, double lambda_star, Rng& rng);

// Z_t read off the tree: unit atoms at the positions of particles alive at t.
AtomicMeasure evaluate_Z(const BackboneTree& tree, double t);

// Structural audit: label uniqueness, genealogical consistency, path anchoring.
void audit_tree(const BackboneTree& tree);

// Line-oriented dump: label parent tau sigma type n x(tick)...
void serialize_tree(const BackboneTree& tree, std::ostream& os);

}  // namespace nlbb
