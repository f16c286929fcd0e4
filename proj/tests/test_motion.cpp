#include <doctest.h>

#include <cmath>

#include "nlbb/motion.hpp"

using namespace nlbb;

namespace {

GridFunction smooth_bump(const GridSpec& g) {
    return GridFunction::from(g, [](double x) { return std::exp(-x * x) + 0.2 * std::exp(-(x - 1.5) * (x - 1.5) / 0.3); });
}

}  // namespace

TEST_SUITE_BEGIN("motion");

TEST_CASE("semigroup identity at t = 0 and conservativity") {
    const GridSpec g = GridSpec::make(6.0, 0.02);
    const MotionSpec motion{};
    const GridFunction f = smooth_bump(g);
    const GridFunction same = semigroup_apply(motion, 0.0, f);
    for (int i = 0; i < g.n; ++i) CHECK(same.values[i] == f.values[i]);

    const GridFunction c = GridFunction::constant(g, 0.37);
    const GridFunction pc = semigroup_apply(motion, 0.8, c);
    for (int i = 0; i < g.n; ++i) CHECK(pc.values[i] == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("heat kernel at an indicator: symmetry point") {
    const GridSpec g = GridSpec::make(8.0, 0.01);
    const MotionSpec motion{};
    const GridFunction ind = GridFunction::from(g, [](double x) { return x >= 0.0 ? 1.0 : 0.0; });
    const GridFunction out = semigroup_apply(motion, 1.0, ind);
    const int mid = (g.n - 1) / 2;
    CHECK(g.x(mid) == doctest::Approx(0.0));
    CHECK(out.values[mid] == doctest::Approx(0.5).epsilon(2e-2));

    // Monte Carlo oracle: P(x + N(0,1) >= 0) at x = 0
    Rng rng(2024, 0);
    double hits = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i)
        if (rng.normal() >= 0.0) hits += 1.0;
    CHECK(hits / n == doctest::Approx(0.5).epsilon(4.0 / std::sqrt(double(n)) / 0.5));
}

TEST_CASE("semigroup property and monotonicity") {
    const GridSpec g = GridSpec::make(8.0, 0.02);
    const MotionSpec motion{1, 1.0, {0.1}};
    const GridFunction f = smooth_bump(g);
    const GridFunction two_step = semigroup_apply(motion, 0.35, semigroup_apply(motion, 0.15, f));
    const GridFunction one_step = semigroup_apply(motion, 0.5, f);
    double gap = 0.0;
    for (int i = 0; i < g.n; ++i)
        gap = std::max(gap, std::abs(two_step.values[i] - one_step.values[i]));
    CHECK(gap < 1e-4);

    GridFunction fg = f;
    for (double& v : fg.values) v += 0.05;
    const GridFunction pf = semigroup_apply(motion, 0.4, f);
    const GridFunction pg = semigroup_apply(motion, 0.4, fg);
    for (int i = 0; i < g.n; ++i) CHECK(pf.values[i] <= pg.values[i] + 1e-14);
}

TEST_CASE("displacement apply: identity, conservativity, point shift") {
    const GridSpec g = GridSpec::make(6.0, 0.02);
    DisplacementKernel ident;
    ident.point_masses = {{1.0, make_point(0.0)}};
    const GridFunction f = smooth_bump(g);
    const GridFunction same = displacement_apply(ident, f);
    for (int i = 0; i < g.n; ++i) CHECK(same.values[i] == f.values[i]);

    const DisplacementKernel normal = DisplacementKernel::standard_normal();
    const GridFunction c = GridFunction::constant(g, 1.3);
    const GridFunction pc = displacement_apply(normal, c);
    for (int i = 0; i < g.n; ++i) CHECK(pc.values[i] == doctest::Approx(1.3).epsilon(1e-14));

    // Theta = point mass at +1 applied to the indicator of [0, inf):
    // pi(x, f) = f(x + 1), so x = -0.5 sees 1
    DisplacementKernel shift;
    shift.point_masses = {{1.0, make_point(1.0)}};
    const GridFunction ind = GridFunction::from(g, [](double x) { return x >= 0.0 ? 1.0 : 0.0; });
    const GridFunction out = displacement_apply(shift, ind);
    CHECK(out.eval(-0.5) == doctest::Approx(1.0));
    CHECK(out.eval(-1.5) == doctest::Approx(0.0));
}

TEST_CASE("path increments have the right mean and variance") {
    const MotionSpec motion{1, 0.7, {0.3}};
    Rng rng(5150, 2);
    const double dt = 0.37;
    const int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double inc = sample_path_increment(motion, dt, rng).x();
        sum += inc;
        sq += inc * inc;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double se_mean = std::sqrt(motion.sigma2 * dt / n);
    CHECK(std::abs(mean - 0.3 * dt) <= 4.0 * se_mean);
    CHECK(var == doctest::Approx(motion.sigma2 * dt).epsilon(0.01));
}

TEST_CASE("degenerate diffusion coefficient is rejected") {
    MotionSpec motion;
    motion.sigma2 = 0.0;
    CHECK_THROWS_AS(motion.validate(), ConfigError);
}

TEST_CASE("mixture displacement variance follows the law of total variance") {
    DisplacementKernel mix;
    mix.point_masses = {{0.5, make_point(0.0)}};
    mix.normal_weight = 0.5;
    mix.normal_var = 1.0;
    mix.validate();
    CHECK(mix.variance_x() == doctest::Approx(0.5));
    Rng rng(630, 7);
    const int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = sample_displacement(mix, rng).x();
        sum += v;
        sq += v * v;
    }
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("narrow grids report escaped kernel mass") {
    const GridSpec g = GridSpec::make(1.0, 0.02);
    const MotionSpec motion{};
    const GridFunction f = GridFunction::constant(g, 1.0);
    CHECK_THROWS_AS(semigroup_apply(motion, 25.0, f), GridTooNarrow);
    CHECK(semigroup_escaped_mass(motion, g, 25.0) > 0.5);
}

TEST_CASE("displacement kernel weight validation") {
    DisplacementKernel bad;
    bad.point_masses = {{0.6, make_point(0.0)}};
    bad.normal_weight = 0.2;
    bad.normal_var = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_SUITE_END();
