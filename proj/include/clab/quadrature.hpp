#pragma once

#include <complex>
#include <functional>

namespace clab {

struct QuadratureResult {
    std::complex<double> value;
    double error_estimate = 0.0;
    int intervals = 0;
};

// Globally adaptive 7/15-point Gauss-Kronrod integration of a complex integrand.
// Stops when the summed |K15 - G7| estimate falls below max(abs_tol, rel_tol |I|);
// throws NumericalError when max_intervals is exhausted first.
QuadratureResult integrate_gk15(const std::function<std::complex<double>(double)>& f, double lo, double hi, double rel_tol = 1e-10,
                                double abs_tol = 0.0, int max_intervals = 4000, int initial_intervals = 8);

}  // namespace clab
