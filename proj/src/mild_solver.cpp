#include "nlbb/mild_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>

namespace nlbb {

namespace {

int level_count(double T, double dt) {
    return std::max(1, static_cast<int>(std::lround(T / dt))) + 1;
}

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

[[noreturn]] void picard_failed(const char* what, double contraction_hint) {
    std::ostringstream os;
    os << what << ": Picard iteration did not reach tolerance; Lipschitz*dt = "
       << contraction_hint;
    throw PicardDivergence(os.str());
}

// One-step trapezoidal marching for a scalar equation
//   y_k = y_{k-1} + sgn * dt/2 * [N(y_k) + N(y_{k-1})]
std::vector<double> march_scalar(double y0, int levels, double dt, double sgn,
                                 const std::function<double(double)>& N,
                                 const SolverConfig& cfg, const char* what,
                                 bool clamp_unit = false) {
    std::vector<double> out(levels);
    out[0] = y0;
    double n_prev = N(y0);
    for (int k = 1; k < levels; ++k) {
        double y = out[k - 1];
        const double base = out[k - 1] + sgn * 0.5 * dt * n_prev;
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            double y_next = base + sgn * 0.5 * dt * N(y);
            if (clamp_unit) y_next = clamp01(y_next);
            const double diff = std::abs(y_next - y);
            y = y_next;
            if (diff <= cfg.picard_tol * (1.0 + std::abs(y))) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed(what, dt);
        out[k] = y;
        n_prev = N(y);
    }
    return out;
}

// Same scheme on the grid with the semigroup applied once per step:
//   U_k = P_dt U_{k-1} + sgn * dt/2 * [N(U_k) + P_dt N(U_{k-1})]
std::vector<GridFunction> march_grid(const GridFunction& u0, int levels, double dt, double sgn,
                                     const ConvOperator& P,
                                     const std::function<GridFunction(const GridFunction&, int)>& N,
                                     const SolverConfig& cfg, const char* what,
                                     bool clamp_unit = false) {
    std::vector<GridFunction> out;
    out.reserve(levels);
    out.push_back(u0);
    GridFunction n_prev = N(u0, 0);
    const int n = u0.grid.n;
    for (int k = 1; k < levels; ++k) {
        GridFunction base = P.apply(out[k - 1]);
        {
            GridFunction pn = P.apply(n_prev);
            for (int i = 0; i < n; ++i) base.values[i] += sgn * 0.5 * dt * pn.values[i];
        }
        GridFunction y = out[k - 1];
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            GridFunction ny = N(y, k);
            double diff = 0.0, scale = 0.0;
            for (int i = 0; i < n; ++i) {
                double v = base.values[i] + sgn * 0.5 * dt * ny.values[i];
                if (clamp_unit) v = clamp01(v);
                diff = std::max(diff, std::abs(v - y.values[i]));
                scale = std::max(scale, std::abs(v));
                y.values[i] = v;
            }
            if (diff <= cfg.picard_tol * (1.0 + scale)) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed(what, dt);
        // one unclamped pass: detects a binding clamp and feeds the history term
        GridFunction ny = N(y, k);
        if (clamp_unit) {
            double excess = 0.0;
            for (int i = 0; i < n; ++i) {
                const double v = base.values[i] + sgn * 0.5 * dt * ny.values[i];
                excess = std::max(excess, std::max(v - 1.0, -v));
            }
            if (excess > 64.0 * cfg.picard_tol + 1e-12)
                throw RangeViolation(std::string(what) +
                                     ": converged value exits [0,1] by " + std::to_string(excess));
        }
        y.time_tag = k * dt;
        out.push_back(y);
        n_prev = std::move(ny);
    }
    return out;
}

void check_compatible(const SolutionField& u_star, bool scalar, const GridSpec& grid, double dt) {
    if (u_star.kind != FieldKind::u_star) throw FieldMismatch("field is not a u* solution");
    if (u_star.scalar != scalar) throw FieldMismatch("u* field mode does not match solve mode");
    if (std::abs(u_star.dt - dt) > 0.05 * (u_star.dt + dt))
        throw FieldMismatch("u* field dt does not match solver dt");
    if (!scalar && !(u_star.grid == grid)) throw FieldMismatch("u* field grid mismatch");
}

void guard_contraction(const MechanismSpec& mech, const DerivedConstants& consts, double u_bar,
                       double dt, const char* what) {
    const double K = chi_derivative_bound(mech, consts, std::max(0.0, u_bar));
    if (K * dt >= 1.0) {
        std::ostringstream os;
        os << what << ": step-size guard failed, chi_derivative_bound*dt = " << K * dt
           << " >= 1; reduce dt";
        throw PicardDivergence(os.str());
    }
}

}  // namespace

double SolutionField::eval(double x, double t) const {
    const int K = levels() - 1;
    double s = t / dt;
    if (s <= 0.0) s = 0.0;
    if (s >= K) s = K;
    const int k = std::min(static_cast<int>(s), K - 1 < 0 ? 0 : K - 1);
    const double w = (K == 0) ? 0.0 : s - k;
    if (scalar) {
        if (K == 0) return scalar_levels[0];
        return scalar_levels[k] * (1.0 - w) + scalar_levels[k + 1] * w;
    }
    if (K == 0) return grid_levels[0].eval(x);
    return grid_levels[k].eval(x) * (1.0 - w) + grid_levels[k + 1].eval(x) * w;
}

double SolutionField::max_value() const {
    double m = -1e300;
    if (scalar) {
        for (double v : scalar_levels) m = std::max(m, v);
    } else {
        for (const auto& g : grid_levels)
            for (double v : g.values) m = std::max(m, v);
    }
    return m;
}

double SolutionField::min_value() const {
    double m = 1e300;
    if (scalar) {
        for (double v : scalar_levels) m = std::min(m, v);
    } else {
        for (const auto& g : grid_levels)
            for (double v : g.values) m = std::min(m, v);
    }
    return m;
}

double ScalarPath::value_at(double t) const {
    if (times.empty()) throw Error("empty scalar path");
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t i = it - times.begin();
    const double w = (t - times[i - 1]) / (times[i] - times[i - 1]);
    return values[i - 1] * (1.0 - w) + values[i] * w;
}

// ---- scalar solvers ----

SolutionField solve_u_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             double f, double T, const SolverConfig& cfg) {
    (void)consts;
    cfg.validate();
    if (f < 0.0) throw ConfigError("solve_u needs f >= 0");
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    SolutionField out;
    out.kind = FieldKind::u;
    out.dt = dt;
    out.scalar = true;
    out.data_note = "u: f=" + std::to_string(f);
    auto N = [&](double u) { return mech.psi_bar(u); };
    out.scalar_levels = march_scalar(f, K, dt, -1.0, N, cfg, "solve_u");
    return out;
}

SolutionField solve_u_star_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                                  double f, double T, const SolverConfig& cfg) {
    cfg.validate();
    if (f < 0.0) throw ConfigError("solve_u_star needs f >= 0");
    const double ls = consts.lambda_star;
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    SolutionField out;
    out.kind = FieldKind::u_star;
    out.dt = dt;
    out.scalar = true;
    out.data_note = "u*: f=" + std::to_string(f);
    auto N = [&](double v) { return mech.psi_bar(v + ls); };
    out.scalar_levels = march_scalar(f, K, dt, -1.0, N, cfg, "solve_u_star");

    // dual route: the conditioned solve must equal u_{f+lambda*} - lambda*
    SolutionField shifted = solve_u_scalar(mech, consts, f + ls, T, cfg);
    double gap = 0.0;
    for (int k = 0; k < K; ++k)
        gap = std::max(gap, std::abs(out.scalar_levels[k] - (shifted.scalar_levels[k] - ls)));
    if (gap > 1e-6) {
        std::ostringstream os;
        os << "u* vs shifted-u routes disagree by " << gap;
        throw IdentityViolation(os.str());
    }
    return out;
}

SolutionField solve_v_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             double h, const SolutionField& u_star, const SolverConfig& cfg) {
    cfg.validate();
    if (h < 0.0) throw ConfigError("solve_v needs h >= 0");
    check_compatible(u_star, true, {}, cfg.dt);
    const double ls = consts.lambda_star;
    const int K = u_star.levels();
    guard_contraction(mech, consts, u_star.max_value(), u_star.dt, "solve_v");

    SolutionField out;
    out.kind = FieldKind::v;
    out.dt = u_star.dt;
    out.scalar = true;
    out.data_note = "v: h=" + std::to_string(h) + " against " + u_star.data_note;
    out.scalar_levels.resize(K);
    out.scalar_levels[0] = std::exp(-h);

    auto B = [&](double E, double U) {
        return mech.psi_bar(U + ls - ls * E) - mech.psi_bar(U + ls);
    };
    const double dt = u_star.dt;
    double b_prev = B(out.scalar_levels[0], u_star.scalar_levels[0]);
    for (int k = 1; k < K; ++k) {
        const double U = u_star.scalar_levels[k];
        const double base = out.scalar_levels[k - 1] + 0.5 * dt / ls * b_prev;
        double E = out.scalar_levels[k - 1];
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            const double En = clamp01(base + 0.5 * dt / ls * B(E, U));
            const double diff = std::abs(En - E);
            E = En;
            if (diff <= cfg.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed("solve_v", dt * chi_derivative_bound(mech, consts, u_star.max_value()));
        // residual of the unclamped update
        const double resid = std::abs(E - (base + 0.5 * dt / ls * B(E, U)));
        if (resid > 64.0 * cfg.picard_tol + 1e-12)
            throw RangeViolation("solve_v converged outside [0,1]: residual " + std::to_string(resid));
        out.scalar_levels[k] = E;
        b_prev = B(E, U);
    }
    return out;
}

SolutionField solve_w_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             const std::vector<double>& g_levels, double h,
                             const SolutionField& u_star, const SolverConfig& cfg) {
    cfg.validate();
    check_compatible(u_star, true, {}, cfg.dt);
    const int K = u_star.levels();
    if (static_cast<int>(g_levels.size()) != K)
        throw FieldMismatch("g levels do not match the u* horizon");
    const double ls = consts.lambda_star;
    guard_contraction(mech, consts, u_star.max_value(), u_star.dt, "solve_w");

    SolutionField out;
    out.kind = FieldKind::w;
    out.dt = u_star.dt;
    out.scalar = true;
    out.data_note = "w: h=" + std::to_string(h) + ", g levels, against " + u_star.data_note;
    out.scalar_levels.resize(K);
    out.scalar_levels[0] = std::exp(-h);

    auto rhs = [&](double E, double U, double g) {
        return (H_eval(mech, consts, E, U, E, U) - ls * E * g) / ls;
    };
    const double dt = u_star.dt;
    double r_prev = rhs(out.scalar_levels[0], u_star.scalar_levels[0], g_levels[0]);
    for (int k = 1; k < K; ++k) {
        const double U = u_star.scalar_levels[k];
        const double g = g_levels[k];
        const double base = out.scalar_levels[k - 1] + 0.5 * dt * r_prev;
        double E = out.scalar_levels[k - 1];
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            const double En = clamp01(base + 0.5 * dt * rhs(E, U, g));
            const double diff = std::abs(En - E);
            E = En;
            if (diff <= cfg.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed("solve_w", dt);
        out.scalar_levels[k] = E;
        r_prev = rhs(E, U, g);
    }
    return out;
}

SolutionField solve_backbone_scalar(const OffspringLaws& laws, double q, double h, double T,
                                    const SolverConfig& cfg) {
    cfg.validate();
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    SolutionField out;
    out.kind = FieldKind::v;
    out.dt = dt;
    out.scalar = true;
    out.data_note = "backbone renewal: h=" + std::to_string(h);
    out.scalar_levels.resize(K);
    out.scalar_levels[0] = std::exp(-h);

    auto A = [&](double E) {
        double s = 0.0, p = 1.0;
        const int nmax = laws.n_max;
        for (int n = 1; n <= nmax; ++n) {
            p *= E;  // E^n
            s += p * ((n < static_cast<int>(laws.p_local.size()) ? laws.p_local[n] : 0.0) +
                      (n < static_cast<int>(laws.p_nonlocal.size()) ? laws.p_nonlocal[n] : 0.0));
        }
        return s;
    };
    const double decay = std::exp(-q * dt);
    double a_prev = A(out.scalar_levels[0]);
    for (int k = 1; k < K; ++k) {
        const double base = decay * out.scalar_levels[k - 1] + 0.5 * dt * q * decay * a_prev;
        double E = out.scalar_levels[k - 1];
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            const double En = clamp01(base + 0.5 * dt * q * A(E));
            const double diff = std::abs(En - E);
            E = En;
            if (diff <= cfg.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed("solve_backbone", q * dt);
        out.scalar_levels[k] = E;
        a_prev = A(E);
    }
    return out;
}

// ---- grid solvers ----

SolutionField solve_u_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const GridFunction& f, double T, const SolverConfig& cfg) {
    (void)consts;
    cfg.validate();
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    const GridSpec grid = f.grid;
    if (semigroup_escaped_mass(motion, grid, T) > cfg.semigroup_tail_tol)
        throw GridTooNarrow("horizon kernel mass escapes the grid; enlarge grid_L");
    const ConvOperator P = make_semigroup_operator(motion, grid, dt);
    const ConvOperator D = make_displacement_operator(kernel, grid);

    auto N = [&](const GridFunction& u, int) {
        GridFunction pi_u = D.apply(u);
        GridFunction out_n{u.grid, std::vector<double>(u.grid.n), u.time_tag};
        for (int i = 0; i < u.grid.n; ++i)
            out_n.values[i] = mech.phi_L(u.values[i]) - mech.zeta(pi_u.values[i]);
        return out_n;
    };
    SolutionField out;
    out.kind = FieldKind::u;
    out.dt = dt;
    out.scalar = false;
    out.grid = grid;
    out.data_note = "u: grid f";
    out.grid_levels = march_grid(f, K, dt, -1.0, P, N, cfg, "solve_u");
    return out;
}

SolutionField solve_u_star_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                                const MotionSpec& motion, const DisplacementKernel& kernel,
                                const GridFunction& f, double T, const SolverConfig& cfg) {
    cfg.validate();
    const double ls = consts.lambda_star;
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    const GridSpec grid = f.grid;
    if (semigroup_escaped_mass(motion, grid, T) > cfg.semigroup_tail_tol)
        throw GridTooNarrow("horizon kernel mass escapes the grid; enlarge grid_L");
    const ConvOperator P = make_semigroup_operator(motion, grid, dt);
    const ConvOperator D = make_displacement_operator(kernel, grid);

    auto N = [&](const GridFunction& v, int) {
        GridFunction pi_v = D.apply(v);
        GridFunction out_n{v.grid, std::vector<double>(v.grid.n), v.time_tag};
        for (int i = 0; i < v.grid.n; ++i)
            out_n.values[i] = mech.phi_L(v.values[i] + ls) - mech.zeta(pi_v.values[i] + ls);
        return out_n;
    };
    SolutionField out;
    out.kind = FieldKind::u_star;
    out.dt = dt;
    out.scalar = false;
    out.grid = grid;
    out.data_note = "u*: grid f";
    out.grid_levels = march_grid(f, K, dt, -1.0, P, N, cfg, "solve_u_star");

    // dual route on the grid: u*_f against u_{f+lambda*} - lambda*
    GridFunction f_shift = f;
    for (double& v : f_shift.values) v += ls;
    SolutionField shifted = solve_u_grid(mech, consts, motion, kernel, f_shift, T, cfg);
    double gap = 0.0;
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < grid.n; ++i)
            gap = std::max(gap, std::abs(out.grid_levels[k].values[i] -
                                         (shifted.grid_levels[k].values[i] - ls)));
    if (gap > 1e-4) {
        std::ostringstream os;
        os << "grid u* vs shifted-u routes disagree by " << gap;
        throw IdentityViolation(os.str());
    }
    return out;
}

SolutionField solve_v_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const GridFunction& h, const SolutionField& u_star,
                           const SolverConfig& cfg) {
    cfg.validate();
    check_compatible(u_star, false, h.grid, cfg.dt);
    const double ls = consts.lambda_star;
    const int K = u_star.levels();
    const GridSpec grid = h.grid;
    guard_contraction(mech, consts, u_star.max_value(), u_star.dt, "solve_v");
    const ConvOperator P = make_semigroup_operator(motion, grid, u_star.dt);
    const ConvOperator D = make_displacement_operator(kernel, grid);

    // pi(x, u*) per level, computed once
    std::vector<GridFunction> pi_u(K, GridFunction{});
    for (int k = 0; k < K; ++k) pi_u[k] = D.apply(u_star.grid_levels[k]);

    auto B = [&](const GridFunction& E, int k) {
        GridFunction pi_E = D.apply(E);
        GridFunction out_b{E.grid, std::vector<double>(E.grid.n), E.time_tag};
        const auto& U = u_star.grid_levels[k].values;
        for (int i = 0; i < E.grid.n; ++i) {
            const double arg_l = U[i] + ls - ls * E.values[i];
            const double nl_new = ls + pi_u[k].values[i] - ls * pi_E.values[i];
            const double nl_old = ls + pi_u[k].values[i];
            out_b.values[i] = mech.phi_L(arg_l) - mech.phi_L(U[i] + ls)
                              - mech.zeta(nl_new) + mech.zeta(nl_old);
        }
        return out_b;
    };
    GridFunction E0{grid, std::vector<double>(grid.n), 0.0};
    for (int i = 0; i < grid.n; ++i) E0.values[i] = std::exp(-h.values[i]);

    SolutionField out;
    out.kind = FieldKind::v;
    out.dt = u_star.dt;
    out.scalar = false;
    out.grid = grid;
    out.data_note = "v: grid h, against " + u_star.data_note;
    out.grid_levels = march_grid(E0, K, u_star.dt, 1.0 / ls, P, B, cfg, "solve_v", true);
    return out;
}

SolutionField solve_w_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const std::vector<GridFunction>& g_levels, const GridFunction& h,
                           const SolutionField& u_star, const SolverConfig& cfg) {
    cfg.validate();
    check_compatible(u_star, false, h.grid, cfg.dt);
    const int K = u_star.levels();
    if (static_cast<int>(g_levels.size()) != K)
        throw FieldMismatch("g levels do not match the u* horizon");
    const double ls = consts.lambda_star;
    const GridSpec grid = h.grid;
    guard_contraction(mech, consts, u_star.max_value(), u_star.dt, "solve_w");
    const ConvOperator P = make_semigroup_operator(motion, grid, u_star.dt);
    const ConvOperator D = make_displacement_operator(kernel, grid);

    std::vector<GridFunction> pi_u(K, GridFunction{});
    for (int k = 0; k < K; ++k) pi_u[k] = D.apply(u_star.grid_levels[k]);

    auto rhs = [&](const GridFunction& E, int k) {
        GridFunction pi_E = D.apply(E);
        GridFunction out_r{E.grid, std::vector<double>(E.grid.n), E.time_tag};
        const auto& U = u_star.grid_levels[k].values;
        const auto& g = g_levels[k].values;
        for (int i = 0; i < E.grid.n; ++i) {
            const double H = H_eval(mech, consts, E.values[i], U[i], pi_E.values[i],
                                    pi_u[k].values[i]);
            out_r.values[i] = (H - ls * E.values[i] * g[i]) / ls;
        }
        return out_r;
    };
    GridFunction E0{grid, std::vector<double>(grid.n), 0.0};
    for (int i = 0; i < grid.n; ++i) E0.values[i] = std::exp(-h.values[i]);

    SolutionField out;
    out.kind = FieldKind::w;
    out.dt = u_star.dt;
    out.scalar = false;
    out.grid = grid;
    out.data_note = "w: grid h and g levels, against " + u_star.data_note;
    out.grid_levels = march_grid(E0, K, u_star.dt, 1.0, P, rhs, cfg, "solve_w", true);
    return out;
}

SolutionField solve_backbone_grid(const OffspringLaws& laws, double q, const MotionSpec& motion,
                                  const DisplacementKernel& kernel, const GridFunction& h,
                                  double T, const SolverConfig& cfg) {
    cfg.validate();
    const int K = level_count(T, cfg.dt);
    const double dt = (K > 1) ? T / (K - 1) : cfg.dt;
    const GridSpec grid = h.grid;
    const ConvOperator P = make_semigroup_operator(motion, grid, dt);
    const ConvOperator D = make_displacement_operator(kernel, grid);

    auto A = [&](const GridFunction& E) {
        GridFunction pi_E = D.apply(E);
        GridFunction out_a{E.grid, std::vector<double>(E.grid.n), E.time_tag};
        for (int i = 0; i < E.grid.n; ++i) {
            double s = 0.0, pl = 1.0, pn = 1.0;
            for (int n = 1; n <= laws.n_max; ++n) {
                pl *= E.values[i];
                pn *= pi_E.values[i];
                s += pl * (n < static_cast<int>(laws.p_local.size()) ? laws.p_local[n] : 0.0);
                s += pn * (n < static_cast<int>(laws.p_nonlocal.size()) ? laws.p_nonlocal[n] : 0.0);
            }
            out_a.values[i] = s;
        }
        return out_a;
    };
    GridFunction E0{grid, std::vector<double>(grid.n), 0.0};
    for (int i = 0; i < grid.n; ++i) E0.values[i] = std::exp(-h.values[i]);

    const double decay = std::exp(-q * dt);
    std::vector<GridFunction> levels;
    levels.reserve(K);
    levels.push_back(E0);
    GridFunction a_prev = A(E0);
    for (int k = 1; k < K; ++k) {
        GridFunction base = P.apply(levels[k - 1]);
        GridFunction pa = P.apply(a_prev);
        for (int i = 0; i < grid.n; ++i)
            base.values[i] = decay * base.values[i] + 0.5 * dt * q * decay * pa.values[i];
        GridFunction E = levels[k - 1];
        bool converged = false;
        for (int it = 0; it < cfg.picard_max_iters; ++it) {
            GridFunction aE = A(E);
            double diff = 0.0;
            for (int i = 0; i < grid.n; ++i) {
                const double v = clamp01(base.values[i] + 0.5 * dt * q * aE.values[i]);
                diff = std::max(diff, std::abs(v - E.values[i]));
                E.values[i] = v;
            }
            if (diff <= cfg.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) picard_failed("solve_backbone", q * dt);
        E.time_tag = k * dt;
        levels.push_back(E);
        a_prev = A(E);
    }
    SolutionField out;
    out.kind = FieldKind::v;
    out.dt = dt;
    out.scalar = false;
    out.grid = grid;
    out.data_note = "backbone renewal: grid h";
    out.grid_levels = std::move(levels);
    return out;
}

// ---- ODE oracle ----

namespace {

double rk4_step(const std::function<double(double)>& f, double y, double dt) {
    const double k1 = f(y);
    const double k2 = f(y + 0.5 * dt * k1);
    const double k3 = f(y + 0.5 * dt * k2);
    const double k4 = f(y + dt * k3);
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrate from t0 to t1 with step-doubling control; returns y(t1).
double integrate_adaptive(const std::function<double(double)>& f, double y, double t0, double t1,
                          double rel_tol, double& dt_hint) {
    double t = t0;
    double dt = dt_hint;
    const double span = t1 - t0;
    if (span <= 0.0) return y;
    dt = std::min(dt, span);
    int guard = 0;
    while (t < t1) {
        if (++guard > 20000000) throw StepSizeTooLarge("ode integration stalled");
        dt = std::min(dt, t1 - t);
        const double y_full = rk4_step(f, y, dt);
        const double y_half = rk4_step(f, rk4_step(f, y, 0.5 * dt), 0.5 * dt);
        const double err = std::abs(y_half - y_full) / 15.0;
        const double scale = rel_tol * (1.0 + std::abs(y_half));
        if (err <= scale) {
            t += dt;
            y = y_half + (y_half - y_full) / 15.0;
            const double grow = (err > 0.0) ? 0.9 * std::pow(scale / err, 0.2) : 5.0;
            dt *= std::min(5.0, std::max(1.0, grow));
        } else {
            dt *= std::max(0.1, 0.9 * std::pow(scale / err, 0.25));
            if (dt < 1e-15 * std::max(1.0, t1))
                throw StepSizeTooLarge("ode local error cannot be met");
        }
    }
    dt_hint = dt;
    return y;
}

}  // namespace

ScalarPath ode_csbp(const MechanismSpec& mech, const DerivedConstants& consts, double theta,
                    CsbpVariant variant, double T, double dt_out, double rel_tol) {
    if (theta < 0.0) throw ConfigError("ode_csbp needs theta >= 0");
    const double ls = consts.lambda_star;
    std::function<double(double)> f;
    if (variant == CsbpVariant::total_mass)
        f = [&mech](double u) { return -mech.psi_bar(u); };
    else
        f = [&mech, ls](double u) { return -mech.psi_bar(u + ls); };

    const int K = level_count(T, dt_out);
    const double dt = (K > 1) ? T / (K - 1) : dt_out;
    ScalarPath path;
    path.times.resize(K);
    path.values.resize(K);
    path.times[0] = 0.0;
    path.values[0] = theta;
    double y = theta;
    // start conservatively; the transient from very large theta is stiff
    double dt_hint = std::min(dt, 0.05 / (1.0 + std::abs(mech.psi_bar_prime(theta))));
    for (int k = 1; k < K; ++k) {
        y = integrate_adaptive(f, y, (k - 1) * dt, k * dt, rel_tol, dt_hint);
        path.times[k] = k * dt;
        path.values[k] = y;
    }
    return path;
}

double extinction_exponent(const MechanismSpec& mech, const DerivedConstants& consts, double T,
                           double theta_proxy, double check_tol) {
    const double w1 =
        ode_csbp(mech, consts, theta_proxy, CsbpVariant::total_mass, T, T).final_value();
    const double w2 =
        ode_csbp(mech, consts, 2.0 * theta_proxy, CsbpVariant::total_mass, T, T).final_value();
    if (std::abs(w2 - w1) > check_tol * (1.0 + std::abs(w1))) {
        std::ostringstream os;
        os << "extinction proxy not converged: w(" << theta_proxy << ") = " << w1 << ", w("
           << 2.0 * theta_proxy << ") = " << w2;
        throw IdentityViolation(os.str());
    }
    return w2;
}

void write_columnar(const SolutionField& field, std::ostream& os) {
    os << "time\tx\tvalue\n";
    char buf[96];
    const int K = field.levels();
    for (int k = 0; k < K; ++k) {
        const double t = k * field.dt;
        if (field.scalar) {
            std::snprintf(buf, sizeof buf, "%.12g\t%.12g\t%.17g\n", t, 0.0, field.scalar_levels[k]);
            os << buf;
        } else {
            for (int i = 0; i < field.grid.n; ++i) {
                std::snprintf(buf, sizeof buf, "%.12g\t%.12g\t%.17g\n", t, field.grid.x(i),
                              field.grid_levels[k].values[i]);
                os << buf;
            }
        }
    }
}

}  // namespace nlbb
