#include "nlbb/motion.hpp"

#include <algorithm>
#include <cmath>

namespace nlbb {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

void DisplacementKernel::validate() const {
    if (dimension < 1 || dimension > Point::max_dim)
        throw ConfigError("displacement dimension must be between 1 and 4");
    double w = normal_weight;
    if (normal_weight < 0.0) throw ConfigError("displacement normal weight must be >= 0");
    if (normal_weight > 0.0 && !(normal_var >= 0.0))
        throw ConfigError("displacement normal variance must be >= 0");
    for (const auto& pm : point_masses) {
        if (pm.weight < 0.0) throw ConfigError("displacement point-mass weight must be >= 0");
        w += pm.weight;
    }
    if (std::abs(w - 1.0) > 1e-9) throw ConfigError("displacement weights must sum to 1");
    if (!std::isfinite(variance_x())) throw ConfigError("displacement variance must be finite");
}

bool DisplacementKernel::is_identity() const {
    if (normal_weight > 0.0 && normal_var > 0.0) return false;
    double mass_at_zero = normal_weight;  // counts only if normal_var == 0 and mean == 0
    if (normal_weight > 0.0) {
        for (int i = 0; i < dimension; ++i)
            if (normal_mean.v[i] != 0.0) return false;
    }
    for (const auto& pm : point_masses) {
        bool zero = true;
        for (int i = 0; i < dimension; ++i)
            if (pm.shift.v[i] != 0.0) zero = false;
        if (!zero) return false;
        mass_at_zero += pm.weight;
    }
    return std::abs(mass_at_zero - 1.0) <= 1e-12;
}

double DisplacementKernel::total_weight() const {
    double w = normal_weight;
    for (const auto& pm : point_masses) w += pm.weight;
    return w;
}

double DisplacementKernel::mean_x() const {
    double m = normal_weight * normal_mean.v[0];
    for (const auto& pm : point_masses) m += pm.weight * pm.shift.v[0];
    return m;
}

double DisplacementKernel::variance_x() const {
    const double m = mean_x();
    double s = normal_weight * (normal_var + normal_mean.v[0] * normal_mean.v[0]);
    for (const auto& pm : point_masses) s += pm.weight * pm.shift.v[0] * pm.shift.v[0];
    return s - m * m;
}

DisplacementKernel DisplacementKernel::standard_normal(int dim) {
    DisplacementKernel k;
    k.normal_weight = 1.0;
    k.normal_var = 1.0;
    k.dimension = dim;
    k.normal_mean.dim = dim;
    return k;
}

GridFunction ConvOperator::apply(const GridFunction& f) const {
    if (identity) return f;
    GridFunction out{f.grid, std::vector<double>(f.grid.n), f.time_tag};
    const int n = f.grid.n;
    const int m = static_cast<int>(offsets.size());
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < m; ++k) {
            int j = i + offsets[k];
            j = j < 0 ? 0 : (j >= n ? n - 1 : j);
            acc += weights[k] * f.values[j];
        }
        out.values[i] = acc;
    }
    return out;
}

ConvOperator make_gaussian_operator(const GridSpec& grid, double mu, double s, bool decimate) {
    ConvOperator op;
    if (s <= 0.0 && mu == 0.0) {
        op.identity = true;
        return op;
    }
    const double h = grid.h;
    const bool cell_mass = s < 1.5 * h || (s >= 4.5 * h && !decimate);
    if (cell_mass) {
        // Cell-mass weights from CDF differences. Robust for discontinuous f
        // and for s -> 0, at the cost of an h^2/12 variance smear per apply;
        // used for one-shot applications, never in the marching loop.
        const int c0 = static_cast<int>(std::floor(mu / h));
        const int half = std::max(2, static_cast<int>(std::ceil((8.5 * s + 2.0 * h) / h)));
        double total = 0.0;
        for (int off = c0 - half; off <= c0 + half; ++off) {
            const double a = (off - 0.5) * h - mu;
            const double b = (off + 0.5) * h - mu;
            double w;
            if (s > 0.0)
                w = normal_cdf(b / s) - normal_cdf(a / s);
            else
                w = (a <= 0.0 && b > 0.0) ? 1.0 : 0.0;
            if (w > 0.0) {
                op.offsets.push_back(off);
                op.weights.push_back(w);
                total += w;
            }
        }
        for (double& w : op.weights) w /= total;
    } else {
        // Point-sampled taps, spectrally exact for smooth integrands once
        // s/stride >= 3. Wide kernels may be decimated to a coarser stride.
        const int stride =
            decimate ? std::max(1, static_cast<int>(std::floor(s / (3.0 * h)))) : 1;
        const double hs = stride * h;
        const int half = static_cast<int>(std::ceil(8.5 * s / hs)) + 1;
        const int center = static_cast<int>(std::lround(mu / hs));
        double total = 0.0;
        for (int k = -half; k <= half; ++k) {
            const int off = (center + k) * stride;
            const double x = off * h - mu;
            const double w = std::exp(-0.5 * x * x / (s * s));
            op.offsets.push_back(off);
            op.weights.push_back(w);
            total += w;
        }
        for (double& w : op.weights) w /= total;
    }
    return op;
}

ConvOperator make_semigroup_operator(const MotionSpec& motion, const GridSpec& grid, double t) {
    motion.validate();
    if (motion.dimension != 1) throw ConfigError("grid semigroup requires dimension 1");
    if (t < 0.0) throw ConfigError("semigroup time must be >= 0");
    if (t == 0.0) {
        ConvOperator op;
        op.identity = true;
        return op;
    }
    return make_gaussian_operator(grid, motion.drift_axis(0) * t, std::sqrt(motion.sigma2 * t));
}

ConvOperator make_displacement_operator(const DisplacementKernel& kernel, const GridSpec& grid) {
    kernel.validate();
    if (kernel.dimension != 1) throw ConfigError("grid displacement requires dimension 1");
    if (kernel.is_identity()) {
        ConvOperator op;
        op.identity = true;
        return op;
    }
    ConvOperator op;
    const double h = grid.h;
    // Point masses enter through two linear-interpolation taps each.
    for (const auto& pm : kernel.point_masses) {
        if (pm.weight == 0.0) continue;
        const double t = pm.shift.v[0] / h;
        const double fl = std::floor(t);
        const int j = static_cast<int>(fl);
        const double w_hi = t - fl;
        op.offsets.push_back(j);
        op.weights.push_back(pm.weight * (1.0 - w_hi));
        if (w_hi > 0.0) {
            op.offsets.push_back(j + 1);
            op.weights.push_back(pm.weight * w_hi);
        }
    }
    if (kernel.normal_weight > 0.0) {
        ConvOperator g = make_gaussian_operator(grid, kernel.normal_mean.v[0],
                                                std::sqrt(std::max(0.0, kernel.normal_var)),
                                                /*decimate=*/true);
        if (g.identity) {
            op.offsets.push_back(0);
            op.weights.push_back(kernel.normal_weight);
        } else {
            for (std::size_t k = 0; k < g.offsets.size(); ++k) {
                op.offsets.push_back(g.offsets[k]);
                op.weights.push_back(kernel.normal_weight * g.weights[k]);
            }
        }
    }
    double total = 0.0;
    for (double w : op.weights) total += w;
    for (double& w : op.weights) w /= total;
    return op;
}

double semigroup_escaped_mass(const MotionSpec& motion, const GridSpec& grid, double t) {
    if (t <= 0.0) return 0.0;
    const double s = std::sqrt(motion.sigma2 * t);
    const double mu = motion.drift_axis(0) * t;
    return normal_cdf((-grid.L - mu) / s) + (1.0 - normal_cdf((grid.L - mu) / s));
}

GridFunction semigroup_apply(const MotionSpec& motion, double t, const GridFunction& f,
                             double tail_tol) {
    if (t == 0.0) return f;
    const double escaped = semigroup_escaped_mass(motion, f.grid, t);
    if (escaped > tail_tol) {
        throw GridTooNarrow("kernel mass beyond the grid is " + std::to_string(escaped));
    }
    return make_semigroup_operator(motion, f.grid, t).apply(f);
}

GridFunction displacement_apply(const DisplacementKernel& kernel, const GridFunction& f) {
    return make_displacement_operator(kernel, f.grid).apply(f);
}

Point sample_path_increment(const MotionSpec& motion, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw ConfigError("path increment needs dt > 0");
    Point p;
    p.dim = motion.dimension;
    const double s = std::sqrt(motion.sigma2 * dt);
    for (int i = 0; i < motion.dimension; ++i)
        p.v[i] = motion.drift_axis(i) * dt + s * rng.normal();
    return p;
}

Point sample_displacement(const DisplacementKernel& kernel, Rng& rng) {
    Point p;
    p.dim = kernel.dimension;
    double u = rng.uniform() * kernel.total_weight();
    for (const auto& pm : kernel.point_masses) {
        if (u < pm.weight) return Point{pm.shift.v, kernel.dimension};
        u -= pm.weight;
    }
    const double s = std::sqrt(std::max(0.0, kernel.normal_var));
    for (int i = 0; i < kernel.dimension; ++i)
        p.v[i] = kernel.normal_mean.v[i] + s * rng.normal();
    return p;
}

}  // namespace nlbb
