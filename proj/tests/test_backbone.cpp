#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nlbb/backbone.hpp"
#include "nlbb/config.hpp"
#include "nlbb/mild_solver.hpp"
#include "nlbb/stats.hpp"

using namespace nlbb;

namespace {

struct Setup {
    MechanismSpec mech = mechanism_m0();
    DerivedConstants consts = derive_constants(mech);
    OffspringLaws laws = offspring_laws(mech, consts);
    MotionSpec motion{};
    DisplacementKernel kernel = DisplacementKernel::standard_normal();
    TreeParams params{1e-3, 1000000};
};

}  // namespace

TEST_SUITE_BEGIN("backbone");

TEST_CASE("a horizon shorter than the first lifetime leaves one live particle") {
    Setup s;
    Rng rng(1, 0);
    const AtomicMeasure nu = AtomicMeasure::unit_atom(make_point(0.3));
    const BackboneTree tree = sample_tree(nu, 1e-6, s.mech, s.consts, s.laws, s.motion, s.kernel,
                                          s.params, rng);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].type == BranchType::alive_at_horizon);
    CHECK(tree.nodes[0].sigma == doctest::Approx(1e-6));
    CHECK(evaluate_Z(tree, 0.0).size() == 1);
    CHECK(evaluate_Z(tree, 1e-6).size() == 1);
}

TEST_CASE("sampled trees pass the structural audit") {
    Setup s;
    for (int i = 0; i < 200; ++i) {
        Rng rng(42, i);
        const BackboneTree tree = sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), 1.5,
                                              s.mech, s.consts, s.laws, s.motion, s.kernel,
                                              s.params, rng);
        audit_tree(tree);
        const AtomicMeasure z0 = evaluate_Z(tree, 0.0);
        CHECK(z0.size() == 1);
        CHECK(z0.atoms[0].x.x() == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS([&] {
        Rng rng(42, 0);
        const BackboneTree tree = sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), 1.0,
                                              s.mech, s.consts, s.laws, s.motion, s.kernel,
                                              s.params, rng);
        evaluate_Z(tree, 2.0);
    }(), OutOfHorizon);
}

TEST_CASE("branch statistics match the offspring law") {
    Setup s;
    const int n_trees = 60000;
    std::uint64_t deaths = 0, locals = 0, nodes = 0;
    double life_sum = 0.0, life_sq = 0.0;
    std::vector<double> z1(n_trees);
    for (int i = 0; i < n_trees; ++i) {
        Rng rng(2718, i);
        const BackboneTree tree = sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), 1.0,
                                              s.mech, s.consts, s.laws, s.motion, s.kernel,
                                              s.params, rng);
        for (const auto& node : tree.nodes) {
            ++nodes;
            life_sum += node.lifetime_draw;
            life_sq += node.lifetime_draw * node.lifetime_draw;
            if (node.type == BranchType::alive_at_horizon) continue;
            ++deaths;
            if (node.type == BranchType::local) ++locals;
        }
        z1[i] = double(evaluate_Z(tree, 1.0).size());
    }
    // uncensored lifetime draws are Exp(q)
    const double life_mean = life_sum / double(nodes);
    const double life_se =
        std::sqrt((life_sq / double(nodes) - life_mean * life_mean) / double(nodes));
    CHECK(std::abs(life_mean - 1.0 / s.consts.q) <= 3.0 * life_se);

    const double frac = double(locals) / double(deaths);
    const double se = std::sqrt(frac * (1.0 - frac) / double(deaths));
    CHECK(std::abs(frac - 1.0 / 3.0) <= 3.0 * se);

    // mean growth at the Malthusian rate
    const MeanSE growth = mean_se(z1);
    CHECK(std::abs(growth.mean - std::exp(0.5)) <= 3.0 * growth.se);
}

TEST_CASE("terminal Laplace functional matches the backbone semigroup solver") {
    Setup s;
    const double h = 0.2, T = 1.0;
    const int n_trees = 40000;
    std::vector<double> vals(n_trees);
    for (int i = 0; i < n_trees; ++i) {
        Rng rng(31415, i);
        const BackboneTree tree = sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), T,
                                              s.mech, s.consts, s.laws, s.motion, s.kernel,
                                              s.params, rng);
        vals[i] = std::exp(-h * double(evaluate_Z(tree, T).size()));
    }
    const MeanSE ms = mean_se(vals);
    SolverConfig cfg;
    const SolutionField v = solve_backbone_scalar(s.laws, s.consts.q, h, T, cfg);
    CHECK(std::abs(ms.mean - v.scalar_levels.back()) <= 3.0 * ms.se);
}

TEST_CASE("poissonize") {
    Setup s;
    AtomicMeasure empty;
    Rng rng(9, 9);
    CHECK(poissonize(empty, s.consts.lambda_star, rng).empty());

    // mu = 2*delta_0, lambda* = 0.5: count ~ Poisson(1)
    AtomicMeasure mu;
    mu.atoms = {{2.0, make_point(0.0)}};
    const int n = 100000;
    double sum = 0.0;
    std::uint64_t voids = 0;
    for (int i = 0; i < n; ++i) {
        Rng r(1234, i);
        const AtomicMeasure nu = poissonize(mu, s.consts.lambda_star, r);
        sum += double(nu.size());
        if (nu.empty()) ++voids;
        for (const auto& a : nu.atoms) CHECK(a.mass == 1.0);
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 1.0) <= 3.0 / std::sqrt(double(n)));
    // void probability e^{-lambda* ||mu||} = e^{-1}
    const double pv = double(voids) / n;
    const double se = std::sqrt(pv * (1.0 - pv) / n);
    CHECK(std::abs(pv - std::exp(-1.0)) <= 3.0 * se);
}

TEST_CASE("population cap raises PopulationExplosion") {
    Setup s;
    s.params.population_cap = 8;
    bool hit = false;
    for (int i = 0; i < 200 && !hit; ++i) {
        Rng rng(5, i);
        try {
            sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), 6.0, s.mech, s.consts, s.laws,
                        s.motion, s.kernel, s.params, rng);
        } catch (const PopulationExplosion&) {
            hit = true;
        }
    }
    CHECK(hit);
}

TEST_CASE("two-dimensional simulation smoke test") {
    Setup s;
    s.motion.dimension = 2;
    s.motion.sigma2 = 0.5;
    s.motion.drift = {0.1, -0.2};
    s.kernel = DisplacementKernel::standard_normal(2);
    Rng rng(77, 0);
    const AtomicMeasure nu{{{1.0, Point{{0.0, 0.0, 0, 0}, 2}}}};
    const BackboneTree tree =
        sample_tree(nu, 1.0, s.mech, s.consts, s.laws, s.motion, s.kernel, s.params, rng);
    audit_tree(tree);
    for (const auto& node : tree.nodes) CHECK(node.birth_pos.dim == 2);
}

TEST_CASE("tree serialization is line oriented") {
    Setup s;
    Rng rng(11, 3);
    const BackboneTree tree = sample_tree(AtomicMeasure::unit_atom(make_point(0.0)), 1.0, s.mech,
                                          s.consts, s.laws, s.motion, s.kernel, s.params, rng);
    std::ostringstream os;
    serialize_tree(tree, os);
    std::istringstream is(os.str());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == tree.nodes.size() + 1);
}

TEST_SUITE_END();
