#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nlbb {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

MeanSE mean_se(const std::vector<double>& xs);

struct Chi2Result {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Goodness-of-fit against given cell probabilities; cells with expected count
// below min_expected are merged into their neighbor.
Chi2Result chi2_gof(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs,
                    double min_expected = 5.0);

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);
// Gamma(shape, rate) CDF, for binning continuous mass laws in fit tests.
double gamma_cdf(double shape, double rate, double x);
double chi2_sf(double statistic, int dof);

std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

// Locale-independent shortest-ish formatting used by all report writers.
std::string fmt_g(double v, int precision = 12);

}  // namespace nlbb
