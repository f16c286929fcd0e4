#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "nlbb/errors.hpp"
#include "nlbb/rng.hpp"

namespace nlbb {

// Spatial point with a small inline capacity; d = 1 everywhere the grid solver
// runs, higher d is allowed for pure simulation.
struct Point {
    std::array<double, 4> v{};
    int dim = 1;

    static constexpr int max_dim = 4;
    double x() const { return v[0]; }
    Point& operator+=(const Point& o) {
        for (int i = 0; i < dim; ++i) v[i] += o.v[i];
        return *this;
    }
};

inline Point make_point(double x) { return Point{{x, 0, 0, 0}, 1}; }

struct MotionSpec {
    int dimension = 1;
    double sigma2 = 1.0;            // diffusion coefficient
    std::vector<double> drift;      // one entry per axis; empty means zero

    void validate() const {
        if (dimension < 1 || dimension > Point::max_dim)
            throw ConfigError("motion dimension must be between 1 and 4");
        if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
        if (!drift.empty() && static_cast<int>(drift.size()) != dimension)
            throw ConfigError("drift size must match dimension");
    }
    double drift_axis(int i) const { return drift.empty() ? 0.0 : drift[i]; }
};

// Law of the offspring displacement Theta; pi(x,.) is the law of x + Theta.
struct DisplacementKernel {
    struct PointMass {
        double weight = 0.0;
        Point shift;
    };
    std::vector<PointMass> point_masses;
    double normal_weight = 0.0;
    Point normal_mean;
    double normal_var = 0.0;
    int dimension = 1;

    void validate() const;
    bool is_identity() const;
    double total_weight() const;
    // mean and variance of the first axis, for diagnostics and tests
    double mean_x() const;
    double variance_x() const;

    static DisplacementKernel standard_normal(int dim = 1);
};

struct GridSpec {
    double L = 8.0;
    double h = 0.02;
    int n = 801;

    static GridSpec make(double L, double h) {
        GridSpec g;
        g.L = L;
        g.h = h;
        g.n = static_cast<int>(std::floor(2.0 * L / h)) + 1;
        return g;
    }
    double x(int i) const { return -L + h * i; }
    bool operator==(const GridSpec& o) const { return L == o.L && h == o.h && n == o.n; }
};

struct GridFunction {
    GridSpec grid;
    std::vector<double> values;
    double time_tag = 0.0;

    static GridFunction constant(const GridSpec& g, double c) {
        return GridFunction{g, std::vector<double>(g.n, c), 0.0};
    }
    template <typename F>
    static GridFunction from(const GridSpec& g, F&& f) {
        GridFunction out{g, std::vector<double>(g.n), 0.0};
        for (int i = 0; i < g.n; ++i) out.values[i] = f(g.x(i));
        return out;
    }
    // linear interpolation with constant extrapolation
    double eval(double x) const {
        const double t = (x + grid.L) / grid.h;
        if (t <= 0.0) return values.front();
        if (t >= grid.n - 1) return values.back();
        const int i = static_cast<int>(t);
        const double w = t - i;
        return values[i] * (1.0 - w) + values[i + 1] * w;
    }
    double max_abs() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
};

// Precomputed convolution stencil: out[i] = sum_k w_k * f[clamp(i + off_k)].
// Index clamping implements constant extrapolation beyond [-L, L]; weights are
// normalized so constants are exact fixed points.
struct ConvOperator {
    std::vector<int> offsets;
    std::vector<double> weights;
    bool identity = false;

    GridFunction apply(const GridFunction& f) const;
};

// Gaussian stencil with mean shift mu and standard deviation s on the grid.
// Narrow kernels use point-sampled taps (exact for smooth fields, no variance
// smear across marching steps); wide kernels use cell-mass weights unless
// decimation to a coarse tap stride is requested (smooth integrands only).
ConvOperator make_gaussian_operator(const GridSpec& grid, double mu, double s,
                                    bool decimate = false);

ConvOperator make_semigroup_operator(const MotionSpec& motion, const GridSpec& grid, double t);
ConvOperator make_displacement_operator(const DisplacementKernel& kernel, const GridSpec& grid);

// P_t[f]: heat-kernel convolution with drift; t = 0 returns f unchanged.
// Throws GridTooNarrow when the kernel mass escaping [-L, L] from the domain
// center exceeds tail_tol.
GridFunction semigroup_apply(const MotionSpec& motion, double t, const GridFunction& f,
                             double tail_tol = 1e-6);

GridFunction displacement_apply(const DisplacementKernel& kernel, const GridFunction& f);

Point sample_path_increment(const MotionSpec& motion, double dt, Rng& rng);
Point sample_displacement(const DisplacementKernel& kernel, Rng& rng);

// Escaped-mass diagnostic for P_t started at the domain center.
double semigroup_escaped_mass(const MotionSpec& motion, const GridSpec& grid, double t);

}  // namespace nlbb
