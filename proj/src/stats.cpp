#include "dprf/stats.hpp"

#include <cmath>

namespace dprf {

namespace {

// Lentz continued fraction for the incomplete beta (Numerical Recipes betacf).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double alpha, double beta, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta) +
                            alpha * std::log(x) + beta * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (alpha + 1.0) / (alpha + beta + 2.0))
        return front * beta_cf(alpha, beta, x) / alpha;
    return 1.0 - front * beta_cf(beta, alpha, 1.0 - x) / beta;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw StatsError("paired_t_test: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw StatsError("paired_t_test: need at least 2 pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);

    TTestResult result;
    result.df = n - 1;
    if (var == 0.0) {
        // Degenerate convention: constant differences are either a perfect
        // tie (p=1) or an exact systematic shift (p=0).
        result.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
        result.p = mean == 0.0 ? 1.0 : 0.0;
        result.significant_at_05 = mean != 0.0;
        return result;
    }

    const double se = std::sqrt(var / static_cast<double>(n));
    result.t = mean / se;
    const double df = static_cast<double>(result.df);
    const double x = df / (df + result.t * result.t);
    result.p = regularized_incomplete_beta(df / 2.0, 0.5, x);
    result.significant_at_05 = result.p <= 0.05;
    return result;
}

}  // namespace dprf
