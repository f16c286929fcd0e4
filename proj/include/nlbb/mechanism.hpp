#pragma once

#include <cstdint>
#include <vector>

#include "nlbb/levy.hpp"
#include "nlbb/rng.hpp"

namespace nlbb {

// Branching mechanism (alpha, beta, Pi_L, gamma, Pi_NL). Spatial displacement
// of non-local offspring lives in the motion module; everything here is the
// scalar algebra shared by the solvers and the simulators.
struct MechanismSpec {
    double alpha = 0.0;
    double beta = 0.0;
    LevyMeasureSpec pi_L;
    double gamma = 0.0;
    LevyMeasureSpec pi_NL;

    void validate() const;

    // psi_L(z) = alpha z + beta z^2 + int (e^{-zu} - 1 + zu) Pi_L(du)
    double psi_L(double z) const;
    // phi_L(z) = psi_L(z) + z
    double phi_L(double z) const;
    double phi_L_prime(double z) const;
    // zeta(lam) = gamma lam + int (1 - e^{-lam u}) Pi_NL(du)
    double zeta(double lam) const;
    double zeta_prime(double lam) const;
    // psi_bar = phi_L - zeta; the total-mass CSBP mechanism
    double psi_bar(double lam) const;
    double psi_bar_prime(double lam) const;
};

struct DerivedConstants {
    double lambda_star = 0.0;   // unique positive root of psi_bar
    double q = 0.0;             // branching rate (phi_L)'(lambda_star)
    double mean_rate = 0.0;     // -psi_bar'(0+), Malthusian growth rate
    double backbone_rate = 0.0; // psi_bar'(lambda_star)
    bool grey_lower_ok = false;
    bool grey_upper_ok = false;
    bool supercritical_ok = false;

    // psi_bar_star(lam) = psi_bar(lam + lambda_star), the conditioned total-mass mechanism
    double psi_bar_star(const MechanismSpec& m, double lam) const {
        return m.psi_bar(lam + lambda_star);
    }
};

struct DeriveOptions {
    double root_tol = 1e-12;       // relative tolerance on lambda_star
    bool require_grey_upper = true;
    double grey_probe = 1e6;       // where the tail-growth exponent is probed
};

DerivedConstants derive_constants(const MechanismSpec& mech, const DeriveOptions& opts = {});

struct OffspringLaws {
    std::vector<double> p_local;     // index n; entries 0 and 1 are zero
    std::vector<double> p_nonlocal;  // index n; entry 0 is zero
    double tail_mass = 0.0;
    int n_max = 0;

    double local_total() const;
    double nonlocal_total() const;
    double mean_offspring() const;  // sum over n of n*(p_L_n + p_NL_n)

    struct Draw {
        bool local = false;
        int n = 0;
    };
    Draw sample(Rng& rng) const;

private:
    friend OffspringLaws offspring_laws(const MechanismSpec&, const DerivedConstants&, double, int);
    std::vector<double> cumulative_;  // over (local n=2..) then (nonlocal n=1..)
};

OffspringLaws offspring_laws(const MechanismSpec& mech, const DerivedConstants& consts,
                             double tail_tol = 1e-12, int n_cap = 4096);

// Branch-point mass law eta^{type}_n: mixture of a point mass at zero, point
// masses at the Pi atoms, and a Gamma(n+1, lambda_star+rho) density from the
// exponential component.
struct ImmigrationLaw {
    bool local = true;
    int n = 0;
    double atom_at_zero = 0.0;
    std::vector<LevyMeasureSpec::Atom> point_atoms;  // weight = probability, y = location
    double gamma_weight = 0.0;
    double gamma_shape = 0.0;  // n+1
    double gamma_rate = 0.0;   // lambda_star + rho

    double total() const;
    // E[e^{-c Y}] for Y ~ eta; closed form.
    double laplace(double c) const;
    double mean() const;
    double sample(Rng& rng) const;
};

ImmigrationLaw immigration_law(const MechanismSpec& mech, const DerivedConstants& consts,
                               bool local, int n);

// The two closed forms of the subordinator exponent: the (phi_L)' difference
// and the explicit 2*beta*lam + tilted-jump integral.
std::pair<double, double> subordinator_forms(const MechanismSpec& mech,
                                             const DerivedConstants& consts, double lam);

// Phi(lam) of the immigration subordinator, evaluated through both closed
// forms with a cross-check (RepresentationMismatch on disagreement).
double subordinator_exponent(const MechanismSpec& mech, const DerivedConstants& consts,
                             double lam, double rel_tol = 1e-10);

// Unchecked single-form Phi for hot loops; agreement with the dual-form
// evaluation is asserted by subordinator_exponent's own tests.
inline double phi_subordinator(const MechanismSpec& mech, const DerivedConstants& consts,
                               double lam) {
    return mech.phi_L_prime(lam + consts.lambda_star) - consts.q;
}

// K = sup over u in [0,u_bar], v in [0,lambda_star] of |chi1_u'(-v)| + |chi2_u'(-v)|.
double chi_derivative_bound(const MechanismSpec& mech, const DerivedConstants& consts,
                            double u_bar, int grid_points = 65);

// The H function of the along-backbone semigroup equation, evaluated at one
// spatial point. E = e^{-w}(x), U = u*(x), pi_E = pi(x, e^{-w}), pi_U = pi(x, u*).
double H_eval(const MechanismSpec& mech, const DerivedConstants& consts,
              double E, double U, double pi_E, double pi_U);

}  // namespace nlbb
