#pragma once

#include <stdexcept>
#include <vector>

namespace dprf {

struct StatsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TTestResult {
    double t = 0.0;
    double p = 1.0;  // two-tailed
    std::size_t df = 0;
    bool significant_at_05 = false;
};

// Two-tailed paired t-test on aligned per-query values, df = n - 1; the
// p value comes from the regularized incomplete beta function. Zero variance
// of the differences degenerates to p = 1 (zero mean diff) or p = 0.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// I_x(alpha, beta), needed for the t distribution CDF; exposed for tests.
double regularized_incomplete_beta(double alpha, double beta, double x);

}  // namespace dprf
