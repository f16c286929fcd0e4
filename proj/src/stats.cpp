#include "nlbb/stats.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace nlbb {

MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE out;
    out.n = xs.size();
    if (xs.empty()) return out;
    // Welford, accumulated in index order for bit-stable parallel merges
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (double x : xs) {
        ++k;
        const double d = x - mean;
        mean += d / double(k);
        m2 += d * (x - mean);
    }
    out.mean = mean;
    if (xs.size() > 1) out.se = std::sqrt(m2 / double(xs.size() - 1) / double(xs.size()));
    return out;
}

namespace {

// series expansion of P(a,x)
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// continued fraction for Q(a,x), modified Lentz
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
    if (x == 0.0) return 0.0;
    return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
    if (x == 0.0) return 1.0;
    return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double gamma_cdf(double shape, double rate, double x) {
    if (x <= 0.0) return 0.0;
    return gamma_p(shape, rate * x);
}

double chi2_sf(double statistic, int dof) {
    if (dof <= 0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * statistic);
}

Chi2Result chi2_gof(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs,
                    double min_expected) {
    if (counts.size() != probs.size() || counts.empty())
        throw std::invalid_argument("chi2_gof: size mismatch");
    double n = 0.0;
    for (auto c : counts) n += double(c);

    // merge low-expectation cells left to right
    std::vector<double> obs, exp_counts;
    double acc_o = 0.0, acc_e = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        acc_o += double(counts[i]);
        acc_e += n * probs[i];
        if (acc_e >= min_expected) {
            obs.push_back(acc_o);
            exp_counts.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (!exp_counts.empty()) {
            obs.back() += acc_o;
            exp_counts.back() += acc_e;
        } else {
            obs.push_back(acc_o);
            exp_counts.push_back(acc_e);
        }
    }
    Chi2Result out;
    out.dof = static_cast<int>(obs.size()) - 1;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (exp_counts[i] <= 0.0) continue;
        const double d = obs[i] - exp_counts[i];
        out.statistic += d * d / exp_counts[i];
    }
    out.p_value = chi2_sf(out.statistic, out.dof);
    return out;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt_g(double v, int precision) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

}  // namespace nlbb
