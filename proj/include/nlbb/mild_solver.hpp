#pragma once

#include <string>
#include <vector>

#include "nlbb/mechanism.hpp"
#include "nlbb/motion.hpp"

namespace nlbb {

struct SolverConfig {
    double dt = 1e-3;
    double picard_tol = 1e-12;
    int picard_max_iters = 60;
    double grid_L = 8.0;
    double grid_h = 0.02;
    double semigroup_tail_tol = 1e-6;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("solver dt must be positive");
        if (!(picard_tol > 0.0)) throw ConfigError("picard_tol must be positive");
        if (picard_max_iters < 1) throw ConfigError("picard_max_iters must be >= 1");
    }
    GridSpec grid() const { return GridSpec::make(grid_L, grid_h); }
};

enum class FieldKind { u, u_star, v, w };

// Time-indexed solution of one of the mild equations. For the v and w kinds
// the stored quantity is e^{-v} (resp. e^{-w}).
struct SolutionField {
    FieldKind kind = FieldKind::u;
    double dt = 0.0;
    bool scalar = true;
    std::vector<double> scalar_levels;
    std::vector<GridFunction> grid_levels;
    GridSpec grid;
    std::string data_note;  // the data (f, h, g) the field was solved against

    int levels() const {
        return scalar ? static_cast<int>(scalar_levels.size())
                      : static_cast<int>(grid_levels.size());
    }
    double horizon() const { return dt * (levels() - 1); }
    double at(int level, int ix = 0) const {
        return scalar ? scalar_levels[level] : grid_levels[level].values[ix];
    }
    // linear interpolation in time (and space for grid fields)
    double eval(double x, double t) const;
    double eval_scalar(double t) const { return eval(0.0, t); }
    double max_value() const;
    double min_value() const;
};

struct ScalarPath {
    std::vector<double> times;
    std::vector<double> values;
    double value_at(double t) const;
    double final_value() const { return values.back(); }
};

// ---- scalar mode (spatially constant data) ----

SolutionField solve_u_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             double f, double T, const SolverConfig& cfg);
// Solves the shifted-mechanism equation directly and cross-checks the
// data-shift route u_{f+lambda*} - lambda* (IdentityViolation on disagreement).
SolutionField solve_u_star_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                                  double f, double T, const SolverConfig& cfg);
SolutionField solve_v_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             double h, const SolutionField& u_star, const SolverConfig& cfg);
SolutionField solve_w_scalar(const MechanismSpec& mech, const DerivedConstants& consts,
                             const std::vector<double>& g_levels, double h,
                             const SolutionField& u_star, const SolverConfig& cfg);
// Renewal-form equation of the backbone semigroup; an independent
// discretization used as a cross-check of solve_v with f = 0.
SolutionField solve_backbone_scalar(const OffspringLaws& laws, double q, double h, double T,
                                    const SolverConfig& cfg);

// ---- grid mode ----

SolutionField solve_u_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const GridFunction& f, double T, const SolverConfig& cfg);
SolutionField solve_u_star_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                                const MotionSpec& motion, const DisplacementKernel& kernel,
                                const GridFunction& f, double T, const SolverConfig& cfg);
SolutionField solve_v_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const GridFunction& h, const SolutionField& u_star,
                           const SolverConfig& cfg);
SolutionField solve_w_grid(const MechanismSpec& mech, const DerivedConstants& consts,
                           const MotionSpec& motion, const DisplacementKernel& kernel,
                           const std::vector<GridFunction>& g_levels, const GridFunction& h,
                           const SolutionField& u_star, const SolverConfig& cfg);
SolutionField solve_backbone_grid(const OffspringLaws& laws, double q, const MotionSpec& motion,
                                  const DisplacementKernel& kernel, const GridFunction& h,
                                  double T, const SolverConfig& cfg);

// ---- scalar ODE oracle ----

enum class CsbpVariant { total_mass, conditioned };

// Adaptive 4th-order integration of u' = -psi_bar(u) (resp. -psi_bar_star),
// reported on the dt_out grid. The independent oracle for all constant-data
// solves.
ScalarPath ode_csbp(const MechanismSpec& mech, const DerivedConstants& consts, double theta,
                    CsbpVariant variant, double T, double dt_out, double rel_tol = 1e-12);

// w_T = lim_{theta->inf} u_T(theta) approximated at theta = theta_proxy with a
// doubling consistency check.
double extinction_exponent(const MechanismSpec& mech, const DerivedConstants& consts, double T,
                           double theta_proxy = 1e6, double check_tol = 1e-7);

// Serialize a field as columnar text: time <tab> x <tab> value.
void write_columnar(const SolutionField& field, std::ostream& os);

}  // namespace nlbb
