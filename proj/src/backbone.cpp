#include "nlbb/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <ostream>
#include <set>
#include <sstream>

namespace nlbb {

Point BackboneTree::position_at(const BackboneNode& node, double t) const {
    if (t < node.tau - 1e-12 || t > node.sigma + 1e-12)
        throw OutOfHorizon("position requested outside the particle lifetime");
    t = std::min(std::max(t, node.tau), node.sigma);
    // sample times: tau, grid ticks in (tau, sigma), sigma
    const int n_ticks = static_cast<int>(node.path.size());
    auto time_of = [&](int j) { return (node.first_tick + j) * dt; };
    if (n_ticks == 0 || t <= time_of(0)) {
        // between tau and the first tick (or no ticks at all)
        const double t1 = n_ticks == 0 ? node.sigma : time_of(0);
        const Point& p1 = n_ticks == 0 ? node.death_pos : node.path[0];
        const double span = t1 - node.tau;
        const double w = span > 0.0 ? (t - node.tau) / span : 0.0;
        Point out = node.birth_pos;
        for (int i = 0; i < out.dim; ++i) out.v[i] += w * (p1.v[i] - node.birth_pos.v[i]);
        return out;
    }
    if (t >= time_of(n_ticks - 1)) {
        const double t0 = time_of(n_ticks - 1);
        const double span = node.sigma - t0;
        const double w = span > 0.0 ? (t - t0) / span : 0.0;
        Point out = node.path[n_ticks - 1];
        for (int i = 0; i < out.dim; ++i)
            out.v[i] += w * (node.death_pos.v[i] - node.path[n_ticks - 1].v[i]);
        return out;
    }
    const double s = t / dt - node.first_tick;
    const int j = static_cast<int>(s);
    const double w = s - j;
    Point out = node.path[j];
    for (int i = 0; i < out.dim; ++i) out.v[i] += w * (node.path[j + 1].v[i] - node.path[j].v[i]);
    return out;
}

std::string BackboneTree::label_string(const BackboneNode& node) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < node.label.size(); ++i) {
        if (i) os << '/';
        os << node.label[i];
    }
    return os.str();
}

namespace {

struct PendingBirth {
    int parent;
    std::vector<int> label;
    double tau;
    Point pos;
};

}  // namespace

BackboneTree sample_tree(const AtomicMeasure& nu, double horizon, const MechanismSpec& mech,
                         const DerivedConstants& consts, const OffspringLaws& laws,
                         const MotionSpec& motion, const DisplacementKernel& kernel,
                         const TreeParams& params, Rng& rng) {
    (void)mech;
    nu.validate();
    BackboneTree tree;
    tree.horizon = horizon;
    tree.dt = params.dt;
    tree.nu = nu;

    std::deque<PendingBirth> queue;
    for (std::size_t i = 0; i < nu.atoms.size(); ++i)
        queue.push_back({-1, {static_cast<int>(i) + 1}, 0.0, nu.atoms[i].x});

    const double q = consts.q;
    while (!queue.empty()) {
        if (tree.nodes.size() >= params.population_cap) {
            std::ostringstream os;
            os << "backbone population cap " << params.population_cap << " hit at "
               << tree.nodes.size() << " nodes";
            throw PopulationExplosion(os.str());
        }
        PendingBirth b = std::move(queue.front());
        queue.pop_front();

        BackboneNode node;
        node.id = static_cast<int>(tree.nodes.size());
        node.parent = b.parent;
        node.label = std::move(b.label);
        node.tau = b.tau;
        node.birth_pos = b.pos;
        node.lifetime_draw = rng.exponential(q);

        const double death = b.tau + node.lifetime_draw;
        const bool survives = death >= horizon;
        node.sigma = survives ? horizon : death;
        node.type = BranchType::alive_at_horizon;

        // walk the motion over the stored grid ticks
        node.first_tick = static_cast<int>(std::floor(node.tau / params.dt)) + 1;
        while (node.first_tick * params.dt <= node.tau) ++node.first_tick;
        Point pos = node.birth_pos;
        double t_now = node.tau;
        for (int tick = node.first_tick; tick * params.dt < node.sigma; ++tick) {
            const double t_next = tick * params.dt;
            if (t_next > t_now) pos += sample_path_increment(motion, t_next - t_now, rng);
            node.path.push_back(pos);
            t_now = t_next;
        }
        if (node.sigma > t_now) pos += sample_path_increment(motion, node.sigma - t_now, rng);
        node.death_pos = pos;

        if (!survives) {
            const OffspringLaws::Draw d = laws.sample(rng);
            node.type = d.local ? BranchType::local : BranchType::nonlocal;
            node.n_offspring = d.n;
            for (int c = 0; c < d.n; ++c) {
                Point child_pos = node.death_pos;
                if (!d.local) child_pos += sample_displacement(kernel, rng);
                node.child_positions.push_back(child_pos);
                std::vector<int> child_label = node.label;
                child_label.push_back(c + 1);
                queue.push_back({node.id, std::move(child_label), node.sigma, child_pos});
            }
        }
        tree.nodes.push_back(std::move(node));
    }
    return tree;
}

AtomicMeasure poissonize(const AtomicMeasure& mu, double lambda_star, Rng& rng) {
    mu.validate();
    AtomicMeasure nu;
    const double total = mu.total_mass();
    if (total <= 0.0) return nu;
    const std::uint64_t count = rng.poisson(lambda_star * total);
    std::vector<double> cum;
    cum.reserve(mu.atoms.size());
    double c = 0.0;
    for (const auto& a : mu.atoms) {
        c += a.mass;
        cum.push_back(c);
    }
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t idx = rng.pick_cumulative(cum);
        nu.atoms.push_back({1.0, mu.atoms[idx].x});
    }
    return nu;
}

AtomicMeasure evaluate_Z(const BackboneTree& tree, double t) {
    if (t < 0.0 || t > tree.horizon + 1e-12) throw OutOfHorizon("evaluate_Z time outside [0, T]");
    AtomicMeasure z;
    for (const auto& node : tree.nodes) {
        const bool alive = (node.tau <= t && t < node.sigma) ||
                           (node.type == BranchType::alive_at_horizon && node.tau <= t &&
                            t <= node.sigma);
        if (alive) z.atoms.push_back({1.0, tree.position_at(node, t)});
    }
    return z;
}

void audit_tree(const BackboneTree& tree) {
    std::set<std::string> seen;
    for (const auto& node : tree.nodes) {
        const std::string label = tree.label_string(node);
        if (!seen.insert(label).second) throw Error("duplicate Ulam-Harris label " + label);
        if (!(node.tau <= node.sigma)) throw Error("node " + label + " has tau > sigma");
        if (node.type != BranchType::alive_at_horizon && node.sigma >= tree.horizon)
            throw Error("dead node " + label + " at or beyond the horizon");
        if (node.parent >= 0) {
            const auto& p = tree.nodes[node.parent];
            if (std::abs(node.tau - p.sigma) > 1e-12)
                throw Error("node " + label + " birth time differs from parent death time");
            if (p.type == BranchType::local) {
                for (int i = 0; i < node.birth_pos.dim; ++i)
                    if (node.birth_pos.v[i] != p.death_pos.v[i])
                        throw Error("local child " + label + " not colocated with parent death");
            }
        }
        if (node.type == BranchType::local && node.n_offspring < 2)
            throw Error("local branch " + label + " has fewer than 2 offspring");
        if (node.type == BranchType::nonlocal && node.n_offspring < 1)
            throw Error("nonlocal branch " + label + " has no offspring");
    }
}

void serialize_tree(const BackboneTree& tree, std::ostream& os) {
    os << "# label\tparent\ttau\tsigma\ttype\tn\tpath\n";
    char buf[64];
    for (const auto& node : tree.nodes) {
        os << tree.label_string(node) << '\t';
        os << (node.parent >= 0 ? tree.label_string(tree.nodes[node.parent]) : std::string("-"));
        std::snprintf(buf, sizeof buf, "\t%.12g\t%.12g\t", node.tau, node.sigma);
        os << buf;
        switch (node.type) {
            case BranchType::local: os << "local"; break;
            case BranchType::nonlocal: os << "nonlocal"; break;
            case BranchType::alive_at_horizon: os << "alive"; break;
        }
        os << '\t' << node.n_offspring << '\t';
        for (std::size_t j = 0; j < node.path.size(); ++j) {
            if (j) os << ' ';
            for (int i = 0; i < node.path[j].dim; ++i) {
                std::snprintf(buf, sizeof buf, i ? ",%.9g" : "%.9g", node.path[j].v[i]);
                os << buf;
            }
        }
        os << '\n';
    }
}

}  // namespace nlbb
