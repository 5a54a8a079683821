#include "clab/quadrature.hpp"

#include <array>
#include <cmath>
#include <queue>
#include <vector>

#include "clab/errors.hpp"

namespace clab {

namespace {

using cplx = std::complex<double>;

// Kronrod abscissae on [0, 1); odd indices are shared with the 7-point Gauss rule.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double lo, hi;
    cplx value;
    double error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

Segment rule(const std::function<cplx(double)>& f, double lo, double hi) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const cplx fc = f(center);
    cplx kronrod = fc * kWgk[7];
    cplx gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        const cplx sum = f(center - dx) + f(center + dx);
        kronrod += kWgk[j] * sum;
        if (j % 2 == 1) gauss += kWg[j / 2] * sum;
    }
    kronrod *= half;
    gauss *= half;
    if (!std::isfinite(kronrod.real()) || !std::isfinite(kronrod.imag())) throw NumericalError("quadrature integrand is not finite");
    return Segment{lo, hi, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace

QuadratureResult integrate_gk15(const std::function<cplx(double)>& f, double lo, double hi, double rel_tol, double abs_tol,
                                int max_intervals, int initial_intervals) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("quadrature bounds must be finite");
    if (lo == hi) return {};
    std::priority_queue<Segment> heap;
    cplx total = 0.0;
    double error = 0.0;
    const int n0 = std::max(1, initial_intervals);
    for (int i = 0; i < n0; ++i) {
        const double a = lo + (hi - lo) * i / n0;
        const double b = (i + 1 == n0) ? hi : lo + (hi - lo) * (i + 1) / n0;
        Segment s = rule(f, a, b);
        total += s.value;
        error += s.error;
        heap.push(s);
    }
    int intervals = n0;
    while (error > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (intervals >= max_intervals)
            throw NumericalError("quadrature did not converge: error estimate " + format_number(error) + " after " +
                                 std::to_string(intervals) + " intervals");
        const Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        const Segment left = rule(f, worst.lo, mid);
        const Segment right = rule(f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++intervals;
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    cplx exact_sum = 0.0;
    double exact_error = 0.0;
    while (!heap.empty()) {
        exact_sum += heap.top().value;
        exact_error += heap.top().error;
        heap.pop();
    }
    return {exact_sum, exact_error, intervals};
}

}  // namespace clab
