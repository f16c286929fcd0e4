#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "nlbb/config.hpp"
#include "nlbb/mechanism.hpp"
#include "nlbb/stats.hpp"

using namespace nlbb;

namespace {

// Simpson quadrature oracle for the Levy integrals; independent of the
// closed forms in LevyMeasureSpec.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double quad_compensated(const LevyMeasureSpec& pi, double lam) {
    double s = 0.0;
    for (const auto& a : pi.atoms) s += a.weight * (std::exp(-lam * a.y) - 1.0 + lam * a.y);
    if (pi.exp_component && pi.exp_component->c > 0.0) {
        const double c = pi.exp_component->c, rho = pi.exp_component->rho;
        s += simpson([&](double y) {
            return (std::exp(-lam * y) - 1.0 + lam * y) * c * std::exp(-rho * y);
        }, 1e-9, 80.0 / rho, 20000);
    }
    return s;
}

double quad_one_minus_exp(const LevyMeasureSpec& pi, double lam) {
    double s = 0.0;
    for (const auto& a : pi.atoms) s += a.weight * (1.0 - std::exp(-lam * a.y));
    if (pi.exp_component && pi.exp_component->c > 0.0) {
        const double c = pi.exp_component->c, rho = pi.exp_component->rho;
        s += simpson([&](double y) {
            return (1.0 - std::exp(-lam * y)) * c * std::exp(-rho * y);
        }, 1e-9, 80.0 / rho, 20000);
    }
    return s;
}

MechanismSpec atom_only_mech() {
    MechanismSpec m;  // beta = 0, single unit atom in Pi_L; upper Grey fails
    m.alpha = -1.5;
    m.pi_L.atoms = {{1.0, 1.0}};
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("mechanism");

TEST_CASE("psi_bar closed form on M0") {
    const MechanismSpec m = mechanism_m0();
    CHECK(m.psi_bar(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m.psi_bar(1.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m.psi_bar(0.5) == doctest::Approx(0.0).epsilon(1e-14));

    // bisection oracle for the root of lambda^2 - lambda/2
    double lo = 0.1, hi = 4.0;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (m.psi_bar(mid) > 0.0 ? hi : lo) = mid;
    }
    CHECK(0.5 * (lo + hi) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("levy closed forms match quadrature") {
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        for (double lam : {0.3, 1.0, 2.7}) {
            CHECK(mech.pi_L.compensated(lam) ==
                  doctest::Approx(quad_compensated(mech.pi_L, lam)).epsilon(1e-7));
            CHECK(mech.pi_NL.one_minus_exp(lam) ==
                  doctest::Approx(quad_one_minus_exp(mech.pi_NL, lam)).epsilon(1e-7));
        }
    }
}

TEST_CASE("psi_bar decomposes as phi_L minus zeta") {
    Rng rng(11, 0);
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        for (int i = 0; i < 100; ++i) {
            const double lam = rng.uniform(0.0, 5.0);
            const double lhs = mech.psi_bar(lam);
            const double rhs = mech.phi_L(lam) - mech.zeta(lam);
            CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(mech.phi_L(lam))));
        }
    }
}

TEST_CASE("derive_constants on M0") {
    const MechanismSpec m = mechanism_m0();
    const DerivedConstants c = derive_constants(m);
    CHECK(c.lambda_star == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.q == doctest::Approx(1.5).epsilon(1e-13));
    CHECK(c.mean_rate == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(c.backbone_rate == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(c.supercritical_ok);
    CHECK(c.grey_lower_ok);
    CHECK(c.grey_upper_ok);

    // finite-difference oracles for the derivative-based constants
    const double eps = 1e-6;
    const double q_fd = (m.phi_L(c.lambda_star + eps) - m.phi_L(c.lambda_star - eps)) / (2 * eps);
    CHECK(c.q == doctest::Approx(q_fd).epsilon(1e-8));
    const double rate_fd =
        (m.psi_bar(c.lambda_star + eps) - m.psi_bar(c.lambda_star - eps)) / (2 * eps);
    CHECK(c.backbone_rate == doctest::Approx(rate_fd).epsilon(1e-8));
}

TEST_CASE("critical mechanism is rejected") {
    MechanismSpec m;
    m.alpha = 0.0;
    m.beta = 1.0;
    m.gamma = 1.0;  // psi_bar(lam) = lam^2
    CHECK_THROWS_AS(derive_constants(m), NotSupercritical);
}

TEST_CASE("upper Grey violation and opt-out") {
    const MechanismSpec m = atom_only_mech();
    CHECK_THROWS_AS(derive_constants(m), GreyViolation);
    DeriveOptions opts;
    opts.require_grey_upper = false;
    const DerivedConstants c = derive_constants(m, opts);
    CHECK_FALSE(c.grey_upper_ok);
    CHECK(m.psi_bar(c.lambda_star) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("no root when psi_bar stays negative") {
    MechanismSpec m;
    m.alpha = -1.5;  // psi_bar(lam) = -0.5*lam
    DeriveOptions opts;
    opts.require_grey_upper = false;
    CHECK_THROWS_AS(derive_constants(m, opts), NoRoot);
}

TEST_CASE("offspring laws on M0") {
    const MechanismSpec m = mechanism_m0();
    const DerivedConstants c = derive_constants(m);
    const OffspringLaws laws = offspring_laws(m, c);
    CHECK(laws.p_local[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(laws.p_nonlocal[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(laws.p_local[0] == 0.0);
    CHECK(laws.p_local[1] == 0.0);
    CHECK(laws.p_nonlocal[0] == 0.0);
    CHECK(laws.local_total() + laws.nonlocal_total() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(laws.tail_mass < 1e-12);
}

TEST_CASE("offspring law has truncated Poisson shape for a pure atom") {
    const MechanismSpec m = atom_only_mech();
    DeriveOptions opts;
    opts.require_grey_upper = false;
    const DerivedConstants c = derive_constants(m, opts);
    const OffspringLaws laws = offspring_laws(m, c);
    // p_L_n proportional to lambda*^n/n! for the unit atom
    for (int n = 2; n + 1 <= laws.n_max; ++n) {
        if (laws.p_local[n + 1] < 1e-14) break;
        CHECK(laws.p_local[n + 1] / laws.p_local[n] ==
              doctest::Approx(c.lambda_star / (n + 1)).epsilon(1e-10));
    }
    CHECK(laws.local_total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(laws.nonlocal_total() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("offspring mean identity: q*(mean-1) equals the Malthusian rate") {
    // brute-force sum over the truncated law against the analytic growth rate
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        const DerivedConstants c = derive_constants(mech);
        const OffspringLaws laws = offspring_laws(mech, c);
        CHECK(std::abs(c.q * (laws.mean_offspring() - 1.0) - c.mean_rate) < 1e-8);
    }
}

TEST_CASE("offspring truncation cap raises TailTooHeavy") {
    const auto battery = mechanism_battery();
    const MechanismSpec& j1 = battery[1].second;
    const DerivedConstants c = derive_constants(j1);
    CHECK_THROWS_AS(offspring_laws(j1, c, 1e-12, 3), TailTooHeavy);
}

TEST_CASE("offspring sampling reproduces the law") {
    const auto battery = mechanism_battery();
    const MechanismSpec& j3 = battery[3].second;
    const DerivedConstants c = derive_constants(j3);
    const OffspringLaws laws = offspring_laws(j3, c);
    Rng rng(77, 1);
    std::vector<std::pair<bool, int>> cells;
    std::vector<double> probs;
    for (int n = 2; n <= laws.n_max; ++n)
        if (laws.p_local[n] > 0) {
            cells.emplace_back(true, n);
            probs.push_back(laws.p_local[n]);
        }
    for (int n = 1; n <= laws.n_max; ++n)
        if (laws.p_nonlocal[n] > 0) {
            cells.emplace_back(false, n);
            probs.push_back(laws.p_nonlocal[n]);
        }
    std::vector<std::uint64_t> counts(cells.size(), 0);
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
        const auto d = laws.sample(rng);
        for (std::size_t k = 0; k < cells.size(); ++k)
            if (cells[k].first == d.local && cells[k].second == d.n) ++counts[k];
    }
    const Chi2Result chi = chi2_gof(counts, probs);
    CHECK(chi.p_value > 0.001);
}

TEST_CASE("immigration laws on M0 are point masses at zero") {
    const MechanismSpec m = mechanism_m0();
    const DerivedConstants c = derive_constants(m);
    const ImmigrationLaw local2 = immigration_law(m, c, true, 2);
    CHECK(local2.atom_at_zero == doctest::Approx(1.0));
    CHECK(local2.laplace(3.7) == doctest::Approx(1.0));
    const ImmigrationLaw nl1 = immigration_law(m, c, false, 1);
    CHECK(nl1.atom_at_zero == doctest::Approx(1.0));
    CHECK_THROWS_AS(immigration_law(m, c, true, 3), ZeroProbabilityBranch);
    CHECK_THROWS_AS(immigration_law(m, c, true, 1), ZeroProbabilityBranch);
}

TEST_CASE("immigration mixture weights for an atom at y = 2") {
    MechanismSpec m;
    m.alpha = -0.6;
    m.beta = 0.5;
    m.pi_L.atoms = {{0.4, 2.0}};
    m.gamma = 0.3;
    m.pi_NL.atoms = {{0.25, 0.8}};
    const DerivedConstants c = derive_constants(m);
    const double ls = c.lambda_star;
    const ImmigrationLaw law = immigration_law(m, c, true, 2);
    const double beta_term = m.beta * ls * ls;
    const double atom_term = 0.4 * (2.0 * ls) * (2.0 * ls) / 2.0 * std::exp(-2.0 * ls);
    CHECK(law.atom_at_zero == doctest::Approx(beta_term / (beta_term + atom_term)).epsilon(1e-12));
    REQUIRE(law.point_atoms.size() == 1);
    CHECK(law.point_atoms[0].y == doctest::Approx(2.0));
    CHECK(law.total() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("immigration sampling reproduces the mixture") {
    const auto battery = mechanism_battery();
    const MechanismSpec& j3 = battery[3].second;  // atoms plus exponential component
    const DerivedConstants c = derive_constants(j3);
    const ImmigrationLaw law = immigration_law(j3, c, true, 2);
    REQUIRE(law.gamma_weight > 0.0);

    Rng rng(99, 5);
    const int N = 100000;
    // cells: exact zero, each point atom, then gamma quartile bins
    std::vector<double> probs = {law.atom_at_zero};
    for (const auto& a : law.point_atoms) probs.push_back(a.weight);
    const int gamma_bins = 4;
    for (int b = 0; b < gamma_bins; ++b) probs.push_back(law.gamma_weight / gamma_bins);
    std::vector<double> edges;  // gamma quantile edges by bisection on the CDF
    for (int b = 1; b < gamma_bins; ++b) {
        double lo = 0.0, hi = 200.0;
        const double want = double(b) / gamma_bins;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (gamma_cdf(law.gamma_shape, law.gamma_rate, mid) < want ? lo : hi) = mid;
        }
        edges.push_back(0.5 * (lo + hi));
    }
    std::vector<std::uint64_t> counts(probs.size(), 0);
    for (int i = 0; i < N; ++i) {
        const double y = law.sample(rng);
        if (y == 0.0) {
            ++counts[0];
            continue;
        }
        bool matched = false;
        for (std::size_t a = 0; a < law.point_atoms.size(); ++a) {
            if (y == law.point_atoms[a].y) {
                ++counts[1 + a];
                matched = true;
                break;
            }
        }
        if (matched) continue;
        std::size_t bin = 0;
        while (bin < edges.size() && y > edges[bin]) ++bin;
        ++counts[1 + law.point_atoms.size() + bin];
    }
    const Chi2Result chi = chi2_gof(counts, probs);
    CHECK(chi.p_value > 0.001);
}

TEST_CASE("subordinator exponent closed forms") {
    const MechanismSpec m0 = mechanism_m0();
    const DerivedConstants c0 = derive_constants(m0);
    CHECK(subordinator_exponent(m0, c0, 1.0) == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(subordinator_exponent(m0, c0, 0.0) == doctest::Approx(0.0));

    const MechanismSpec atom = atom_only_mech();
    DeriveOptions opts;
    opts.require_grey_upper = false;
    const DerivedConstants ca = derive_constants(atom, opts);
    for (double lam : {0.2, 1.0, 3.0}) {
        const double expected = (1.0 - std::exp(-lam)) * std::exp(-ca.lambda_star);
        CHECK(subordinator_exponent(atom, ca, lam) == doctest::Approx(expected).epsilon(1e-12));
    }

    Rng rng(5, 3);
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        const DerivedConstants c = derive_constants(mech);
        for (int i = 0; i < 100; ++i) {
            const auto [f1, f2] = subordinator_forms(mech, c, rng.uniform(0.0, 10.0));
            CHECK(std::abs(f1 - f2) <= 1e-10 * (1.0 + std::abs(f1)));
        }
    }
}

TEST_CASE("chi derivative bound") {
    const MechanismSpec m0 = mechanism_m0();
    const DerivedConstants c0 = derive_constants(m0);
    // |q - 2 beta v| peaks at v = 0; the gamma term contributes 1
    CHECK(chi_derivative_bound(m0, c0, 1.0) == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(chi_derivative_bound(m0, c0, 0.0) <= chi_derivative_bound(m0, c0, 1.0) + 1e-12);

    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        const DerivedConstants c = derive_constants(mech);
        const double k0 = chi_derivative_bound(mech, c, 0.0);
        const double k1 = chi_derivative_bound(mech, c, 2.0);
        CHECK(std::isfinite(k1));
        CHECK(k0 <= k1 + 1e-12);
    }

    // degenerate mechanism: no quadratic or jump activity in chi1
    MechanismSpec degen;
    degen.gamma = 1.0;
    DerivedConstants synth;
    synth.lambda_star = 0.5;
    synth.q = 1.0;
    CHECK(chi_derivative_bound(degen, synth, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("conditioned mechanism is subcritical at the origin") {
    // psi_bar*(0) = 0 and psi_bar*'(0) = psi_bar'(lambda*) > 0; the shifted
    // local part satisfies phi_L*(0) = phi_L(lambda*)
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        const DerivedConstants c = derive_constants(mech);
        CHECK(std::abs(c.psi_bar_star(mech, 0.0)) < 1e-12);
        const double eps = 1e-6;
        const double slope =
            (c.psi_bar_star(mech, eps) - c.psi_bar_star(mech, -eps)) / (2.0 * eps);
        CHECK(slope == doctest::Approx(c.backbone_rate).epsilon(1e-6));
        CHECK(slope > 0.0);
        CHECK(mech.phi_L(0.0 + c.lambda_star) ==
              doctest::Approx(mech.phi_L(c.lambda_star)));
    }
}

TEST_CASE("H collapses to the shifted-mechanism difference") {
    // H(x, -ls e^{-w}) - ls Phi(u*) e^{-w} == psi_bar*(u* - ls E) - psi_bar*(u*)
    // pointwise in the spatially constant case, for every mechanism.
    Rng rng(31, 9);
    for (const auto& [name, mech] : mechanism_battery()) {
        CAPTURE(name);
        const DerivedConstants c = derive_constants(mech);
        const double ls = c.lambda_star;
        for (int i = 0; i < 200; ++i) {
            const double E = rng.uniform();
            const double U = rng.uniform(0.0, 1.5);
            const double lhs = H_eval(mech, c, E, U, E, U) -
                               ls * phi_subordinator(mech, c, U) * E;
            const double rhs = mech.psi_bar(U + ls - ls * E) - mech.psi_bar(U + ls);
            CHECK(std::abs(lhs - rhs) <= 1e-11 * (1.0 + std::abs(rhs)));
        }
    }
}

TEST_SUITE_END();
