#include "nlbb/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nlbb {

void MechanismSpec::validate() const {
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    pi_L.validate();
    pi_NL.validate();
    const double nl_mean = gamma + pi_NL.mean();
    if (nl_mean > 1.0 + 1e-12) throw ConfigError("gamma + int u Pi_NL(du) must be <= 1");
}

double MechanismSpec::psi_L(double z) const {
    return alpha * z + beta * z * z + pi_L.compensated(z);
}

double MechanismSpec::phi_L(double z) const { return psi_L(z) + z; }

double MechanismSpec::phi_L_prime(double z) const {
    return (alpha + 1.0) + 2.0 * beta * z + pi_L.u_one_minus_exp(z);
}

double MechanismSpec::zeta(double lam) const {
    return gamma * lam + pi_NL.one_minus_exp(lam);
}

double MechanismSpec::zeta_prime(double lam) const {
    return gamma + pi_NL.u_exp(lam);
}

double MechanismSpec::psi_bar(double lam) const { return phi_L(lam) - zeta(lam); }

double MechanismSpec::psi_bar_prime(double lam) const {
    return phi_L_prime(lam) - zeta_prime(lam);
}

DerivedConstants derive_constants(const MechanismSpec& mech, const DeriveOptions& opts) {
    mech.validate();
    DerivedConstants out;

    const double slope0 = mech.psi_bar_prime(0.0);
    out.mean_rate = -slope0;
    out.supercritical_ok = std::isfinite(slope0) && slope0 < 0.0;
    if (!out.supercritical_ok) {
        std::ostringstream os;
        os << "psi_bar'(0+) = " << slope0 << " is not negative and finite";
        throw NotSupercritical(os.str());
    }

    // Lower Grey condition holds structurally on this family: psi_bar(0) = 0
    // with finite slope at 0+ makes int_{0+} 1/|psi_bar| diverge.
    out.grey_lower_ok = true;

    // Upper Grey condition needs superlinear growth of psi_bar at infinity;
    // probe the tail-growth exponent numerically.
    {
        const double big = opts.grey_probe;
        const double v1 = mech.psi_bar(big);
        const double v2 = mech.psi_bar(2.0 * big);
        const double p = (v1 > 0.0 && v2 > 0.0) ? std::log(v2 / v1) / std::log(2.0) : 0.0;
        out.grey_upper_ok = p > 1.2;
        if (!out.grey_upper_ok && opts.require_grey_upper) {
            std::ostringstream os;
            os << "upper Grey condition fails: psi_bar tail growth exponent " << p
               << " (beta = " << mech.beta << ", insufficient Levy activity)";
            throw GreyViolation(os.str());
        }
    }

    // Bracket the positive root: psi_bar is convex, negative just right of 0.
    double hi = 1.0;
    int doublings = 0;
    while (mech.psi_bar(hi) <= 0.0) {
        hi *= 2.0;
        if (++doublings > 200) throw NoRoot("failed to bracket the root of psi_bar");
    }
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mech.psi_bar(mid) > 0.0) hi = mid; else lo = mid;
        if (hi - lo <= opts.root_tol * hi) break;
    }
    double root = 0.5 * (lo + hi);
    // Newton polish; the root is simple so two steps reach machine precision.
    for (int i = 0; i < 3; ++i) {
        const double fp = mech.psi_bar_prime(root);
        if (fp == 0.0) break;
        root -= mech.psi_bar(root) / fp;
    }
    if (!(root > 0.0) || !std::isfinite(root)) throw NoRoot("root polish left psi_bar rootless");
    out.lambda_star = root;
    out.q = mech.phi_L_prime(root);
    out.backbone_rate = mech.psi_bar_prime(root);
    if (!(out.q > 0.0)) throw NoRoot("(phi_L)'(lambda_star) must be positive");
    return out;
}

OffspringLaws offspring_laws(const MechanismSpec& mech, const DerivedConstants& consts,
                             double tail_tol, int n_cap) {
    const double ls = consts.lambda_star;
    const double norm = ls * consts.q;

    // Closed-form totals of the two Poisson-tilted series.
    const double total_local = (mech.beta * ls * ls + mech.pi_L.poisson_tail(2, ls)) / norm;
    const double total_nonlocal = (mech.gamma * ls + mech.pi_NL.poisson_tail(1, ls)) / norm;

    OffspringLaws laws;
    laws.p_local.assign(3, 0.0);
    laws.p_nonlocal.assign(2, 0.0);

    double acc_local = 0.0, acc_nonlocal = 0.0;
    int n = 1;
    laws.p_nonlocal[1] = (mech.gamma * ls + mech.pi_NL.poisson_weight(1, ls)) / norm;
    acc_nonlocal += laws.p_nonlocal[1];
    n = 2;
    laws.p_local[2] = (mech.beta * ls * ls + mech.pi_L.poisson_weight(2, ls)) / norm;
    laws.p_nonlocal.push_back(mech.pi_NL.poisson_weight(2, ls) / norm);
    acc_local += laws.p_local[2];
    acc_nonlocal += laws.p_nonlocal[2];

    while ((total_local - acc_local) + (total_nonlocal - acc_nonlocal) > tail_tol) {
        ++n;
        if (n > n_cap) {
            std::ostringstream os;
            os << "offspring tail still " << (total_local - acc_local) + (total_nonlocal - acc_nonlocal)
               << " after n = " << n_cap;
            throw TailTooHeavy(os.str());
        }
        laws.p_local.push_back(mech.pi_L.poisson_weight(n, ls) / norm);
        laws.p_nonlocal.push_back(mech.pi_NL.poisson_weight(n, ls) / norm);
        acc_local += laws.p_local[n];
        acc_nonlocal += laws.p_nonlocal[n];
    }
    laws.n_max = n;
    laws.tail_mass = std::max(0.0, (total_local - acc_local) + (total_nonlocal - acc_nonlocal));

    // Cumulative table for inverse-CDF sampling: local entries first.
    laws.cumulative_.clear();
    double c = 0.0;
    for (int k = 2; k <= laws.n_max; ++k) {
        c += laws.p_local[k];
        laws.cumulative_.push_back(c);
    }
    for (int k = 1; k <= laws.n_max; ++k) {
        c += laws.p_nonlocal[k];
        laws.cumulative_.push_back(c);
    }
    return laws;
}

double OffspringLaws::local_total() const {
    double s = 0.0;
    for (double p : p_local) s += p;
    return s;
}

double OffspringLaws::nonlocal_total() const {
    double s = 0.0;
    for (double p : p_nonlocal) s += p;
    return s;
}

double OffspringLaws::mean_offspring() const {
    double s = 0.0;
    for (std::size_t k = 0; k < p_local.size(); ++k) s += double(k) * p_local[k];
    for (std::size_t k = 0; k < p_nonlocal.size(); ++k) s += double(k) * p_nonlocal[k];
    return s;
}

OffspringLaws::Draw OffspringLaws::sample(Rng& rng) const {
    const std::size_t idx = rng.pick_cumulative(cumulative_);
    const std::size_t n_local = p_local.size() - 2;  // entries n = 2 .. n_max
    Draw d;
    if (idx < n_local) {
        d.local = true;
        d.n = static_cast<int>(idx) + 2;
    } else {
        d.local = false;
        d.n = static_cast<int>(idx - n_local) + 1;
    }
    return d;
}

ImmigrationLaw immigration_law(const MechanismSpec& mech, const DerivedConstants& consts,
                               bool local, int n) {
    if (local && n < 2) throw ZeroProbabilityBranch("local branch needs n >= 2");
    if (!local && n < 1) throw ZeroProbabilityBranch("nonlocal branch needs n >= 1");

    const double ls = consts.lambda_star;
    const LevyMeasureSpec& pi = local ? mech.pi_L : mech.pi_NL;

    double zero_mass = 0.0;
    if (local && n == 2) zero_mass = mech.beta * ls * ls;
    if (!local && n == 1) zero_mass = mech.gamma * ls;

    ImmigrationLaw law;
    law.local = local;
    law.n = n;
    double total = zero_mass;
    for (const auto& a : pi.atoms) {
        const double x = ls * a.y;
        const double w = a.weight * std::exp(n * std::log(x) - std::lgamma(n + 1.0) - x);
        law.point_atoms.push_back({w, a.y});
        total += w;
    }
    if (pi.exp_component && pi.exp_component->c > 0.0) {
        const double c = pi.exp_component->c, rho = pi.exp_component->rho;
        const double r = ls / (ls + rho);
        law.gamma_weight = c / (ls + rho) * std::pow(r, n);
        law.gamma_shape = n + 1.0;
        law.gamma_rate = ls + rho;
        total += law.gamma_weight;
    }
    if (!(total > 0.0)) {
        std::ostringstream os;
        os << (local ? "local" : "nonlocal") << " branch-point law undefined: p_n = 0 at n = " << n;
        throw ZeroProbabilityBranch(os.str());
    }
    law.atom_at_zero = zero_mass / total;
    for (auto& a : law.point_atoms) a.weight /= total;
    law.gamma_weight /= total;
    return law;
}

double ImmigrationLaw::total() const {
    double s = atom_at_zero + gamma_weight;
    for (const auto& a : point_atoms) s += a.weight;
    return s;
}

double ImmigrationLaw::laplace(double c) const {
    double s = atom_at_zero;
    for (const auto& a : point_atoms) s += a.weight * std::exp(-c * a.y);
    if (gamma_weight > 0.0)
        s += gamma_weight * std::pow(gamma_rate / (gamma_rate + c), gamma_shape);
    return s;
}

double ImmigrationLaw::mean() const {
    double s = 0.0;
    for (const auto& a : point_atoms) s += a.weight * a.y;
    if (gamma_weight > 0.0) s += gamma_weight * gamma_shape / gamma_rate;
    return s;
}

double ImmigrationLaw::sample(Rng& rng) const {
    double u = rng.uniform();
    if (u < atom_at_zero) return 0.0;
    u -= atom_at_zero;
    for (const auto& a : point_atoms) {
        if (u < a.weight) return a.y;
        u -= a.weight;
    }
    return rng.gamma(gamma_shape, gamma_rate);
}

std::pair<double, double> subordinator_forms(const MechanismSpec& mech,
                                             const DerivedConstants& consts, double lam) {
    const double ls = consts.lambda_star;
    const double form1 = mech.phi_L_prime(lam + ls) - mech.phi_L_prime(ls);
    // 2 beta lam + int (1 - e^{-lam y}) y e^{-ls y} Pi_L(dy)
    double jump = 0.0;
    for (const auto& a : mech.pi_L.atoms)
        jump += a.weight * a.y * std::exp(-ls * a.y) * (-std::expm1(-lam * a.y));
    if (mech.pi_L.exp_component && mech.pi_L.exp_component->c > 0.0) {
        const double c = mech.pi_L.exp_component->c, rho = mech.pi_L.exp_component->rho;
        const double b = ls + rho;
        jump += c * (1.0 / (b * b) - 1.0 / ((b + lam) * (b + lam)));
    }
    return {form1, 2.0 * mech.beta * lam + jump};
}

double subordinator_exponent(const MechanismSpec& mech, const DerivedConstants& consts,
                             double lam, double rel_tol) {
    const auto [form1, form2] = subordinator_forms(mech, consts, lam);
    if (std::abs(form1 - form2) > rel_tol * (1.0 + std::abs(form1))) {
        std::ostringstream os;
        os << "subordinator exponent forms disagree at lam = " << lam << ": " << form1
           << " vs " << form2;
        throw RepresentationMismatch(os.str());
    }
    return form1;
}

double chi_derivative_bound(const MechanismSpec& mech, const DerivedConstants& consts,
                            double u_bar, int grid_points) {
    const double ls = consts.lambda_star;
    auto value = [&](double u, double v) {
        // (chi1_u)'(-v) = q - 2 beta v + int y (1 - e^{v y}) e^{-(ls+u) y} Pi_L(dy)
        const double d1 = consts.q - 2.0 * mech.beta * v + mech.pi_L.u_exp(ls + u)
                          - mech.pi_L.u_exp(ls + u - v);
        // (chi2_u)'(-v) = gamma - int z e^{-(ls+u-v) z} Pi_NL(dz)
        const double d2 = mech.gamma - mech.pi_NL.u_exp(ls + u - v);
        return std::abs(d1) + std::abs(d2);
    };
    double best = 0.0;
    for (int i = 0; i < grid_points; ++i) {
        const double u = u_bar * double(i) / double(grid_points - 1);
        for (int j = 0; j < grid_points; ++j) {
            const double v = ls * double(j) / double(grid_points - 1);
            best = std::max(best, value(u, v));
        }
    }
    if (!std::isfinite(best)) throw NotFinite("chi derivative bound diverged");
    return best;
}

double H_eval(const MechanismSpec& mech, const DerivedConstants& consts,
              double E, double U, double pi_E, double pi_U) {
    const double ls = consts.lambda_star;
    double h = -ls * consts.q * E + mech.beta * ls * ls * E * E + mech.gamma * ls * pi_E;
    // int (e^{ls y E} - 1 - ls y E) e^{-(ls+U) y} Pi_L(dy)
    for (const auto& a : mech.pi_L.atoms) {
        const double x = ls * a.y * E;
        h += a.weight * (std::expm1(x) - x) * std::exp(-(ls + U) * a.y);
    }
    if (mech.pi_L.exp_component && mech.pi_L.exp_component->c > 0.0) {
        const double c = mech.pi_L.exp_component->c, rho = mech.pi_L.exp_component->rho;
        const double A = ls + U + rho;
        h += c * (1.0 / (A - ls * E) - 1.0 / A - ls * E / (A * A));
    }
    // int (e^{ls y pi_E} - 1) e^{-y (ls + pi_U)} Pi_NL(dy)
    for (const auto& a : mech.pi_NL.atoms) {
        h += a.weight * std::expm1(ls * a.y * pi_E) * std::exp(-a.y * (ls + pi_U));
    }
    if (mech.pi_NL.exp_component && mech.pi_NL.exp_component->c > 0.0) {
        const double c = mech.pi_NL.exp_component->c, rho = mech.pi_NL.exp_component->rho;
        const double A = ls + pi_U + rho;
        h += c * (1.0 / (A - ls * pi_E) - 1.0 / A);
    }
    return h;
}

}  // namespace nlbb
