#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "nlbb/errors.hpp"

namespace nlbb {

// Levy measure on (0,inf) restricted to finitely many atoms plus an optional
// exponential density c*exp(-rho*y)dy. Every integral the branching algebra
// needs has a closed form on this family.
struct LevyMeasureSpec {
    struct Atom {
        double weight = 0.0;  // rate mass w > 0
        double y = 0.0;       // jump size y > 0
    };
    struct ExpComponent {
        double c = 0.0;    // density coefficient, c >= 0
        double rho = 0.0;  // decay rate, rho > 0 whenever c > 0
    };

    std::vector<Atom> atoms;
    std::optional<ExpComponent> exp_component;

    bool is_zero() const {
        return atoms.empty() && (!exp_component || exp_component->c == 0.0);
    }

    void validate() const {
        for (const auto& a : atoms) {
            if (!(a.weight > 0.0)) throw ConfigError("levy atom weight must be positive");
            if (!(a.y > 0.0)) throw ConfigError("levy atom location must be positive");
        }
        if (exp_component) {
            if (exp_component->c < 0.0) throw ConfigError("levy exp coefficient must be >= 0");
            if (exp_component->c > 0.0 && !(exp_component->rho > 0.0))
                throw ConfigError("levy exp rate must be positive");
        }
        if (!std::isfinite(mean()) || !std::isfinite(compensated(1.0)))
            throw NotFinite("levy integrability check failed");
    }

    // integral of (e^{-lam*u} - 1 + lam*u)
    double compensated(double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * (std::expm1(-lam * a.y) + lam * a.y);
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            s += c * (1.0 / (lam + rho) - 1.0 / rho + lam / (rho * rho));
        }
        return s;
    }

    // integral of (1 - e^{-lam*u})
    double one_minus_exp(double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * (-std::expm1(-lam * a.y));
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            s += c * (1.0 / rho - 1.0 / (lam + rho));
        }
        return s;
    }

    // integral of u*(1 - e^{-lam*u})
    double u_one_minus_exp(double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * a.y * (-std::expm1(-lam * a.y));
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            s += c * (1.0 / (rho * rho) - 1.0 / ((lam + rho) * (lam + rho)));
        }
        return s;
    }

    // integral of u*e^{-lam*u}; lam may be zero (gives the mean).
    double u_exp(double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * a.y * std::exp(-lam * a.y);
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            s += c / ((lam + rho) * (lam + rho));
        }
        return s;
    }

    // integral of u
    double mean() const { return u_exp(0.0); }

    // integral of (y*lam)^n/n! * e^{-lam*y}; the Poisson-tilted weight of order n.
    double poisson_weight(int n, double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) {
            const double x = lam * a.y;
            // log-space to keep large n stable
            double logw = n * std::log(x) - std::lgamma(n + 1.0) - x;
            s += a.weight * std::exp(logw);
        }
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            const double r = lam / (lam + rho);
            s += c / (lam + rho) * std::pow(r, n);
        }
        return s;
    }

    // sum over n >= n0 of poisson_weight(n, lam), n0 in {1, 2}; closed form.
    double poisson_tail(int n0, double lam) const {
        double s = 0.0;
        for (const auto& a : atoms) {
            const double x = lam * a.y;
            if (n0 <= 1)
                s += a.weight * (-std::expm1(-x));
            else
                s += a.weight * (-std::expm1(-x) - x * std::exp(-x));
        }
        if (exp_component && exp_component->c > 0.0) {
            const double c = exp_component->c, rho = exp_component->rho;
            const double r = lam / (lam + rho);
            const double geom = (n0 <= 1) ? r / (1.0 - r) : r * r / (1.0 - r);
            s += c / (lam + rho) * geom;
        }
        return s;
    }
};

}  // namespace nlbb
