#pragma once

// Independent oracles used by the test suite. These deliberately avoid the
// library's Monte Carlo / projection machinery: 1-D quadratures for the
// two-well Hamiltonian H(p,q) = p^2/2 + F1(q), lattice flood fill for level
// component counts, and a 2-D quadrature for the 4-d separable volumes.

#include <cmath>
#include <functional>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"

namespace oracles {

inline double f1(double q, double c = 0.0) {
    return 0.25 * q * q * q * q - 0.5 * q * q + c * q;
}

/// Turning point of F1 = z by bisection within [a, b].
inline double turning_point(double z, double a, double b, double c = 0.0) {
    double fa = f1(a, c) - z;
    for (int i = 0; i < 200; ++i) {
        double m = 0.5 * (a + b);
        double fm = f1(m, c) - z;
        if ((fa < 0) == (fm < 0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

/// integral of g(q) * (2(z - F1(q)))^{pow} over the well [qa, qb] with
/// square-root endpoint behavior handled by the sine substitution.
inline double well_integral(double z, double qa, double qb, double pow_,
                            const std::function<double(double)>& g, double c = 0.0,
                            int n = 4096) {
    double mid = 0.5 * (qa + qb), half = 0.5 * (qb - qa);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double th = M_PI * (i + 0.5) / n - 0.5 * M_PI;
        double q = mid + half * std::sin(th);
        double w = half * std::cos(th) * M_PI / n;
        double arg = std::max(2.0 * (z - f1(q, c)), 0.0);
        acc += g(q) * std::pow(arg, pow_) * w;
    }
    return acc;
}

struct WellGeometry {
    double qa, qb;  // turning points of the well at level z
};

/// Well q > 0 or q < 0 of the symmetric two-well F1, for z in (-1/4, 0).
inline WellGeometry well(double z, bool positive_q) {
    double qa = turning_point(z, 1e-9, 1.0);         // inner turning point (q>0 side)
    double qb = turning_point(z, 1.0, 2.5);          // outer
    if (positive_q) return {qa, qb};
    return {-qb, -qa};
}

/// Orbit period = level density v(z) = closed-line integral of ds/|grad H|.
inline double period(double z, bool positive_q) {
    auto w = well(z, positive_q);
    return 2.0 * well_integral(z, w.qa, w.qb, -0.5, [](double) { return 1.0; });
}

/// Enclosed area V(z) of the well.
inline double area(double z, bool positive_q) {
    auto w = well(z, positive_q);
    return 2.0 * well_integral(z, w.qa, w.qb, 0.5, [](double) { return 1.0; });
}

/// h(z) = integral over the enclosed region of lap H = 1 + F1''(q).
inline double h_coef(double z, bool positive_q) {
    auto w = well(z, positive_q);
    return 2.0 * well_integral(z, w.qa, w.qb, 0.5,
                               [](double q) { return 1.0 + 3.0 * q * q - 1.0; });
}

/// Level average of g(q) with the 1/|grad H| density.
inline double level_average(double z, bool positive_q,
                            const std::function<double(double)>& g) {
    auto w = well(z, positive_q);
    double num = 2.0 * well_integral(z, w.qa, w.qb, -0.5, g);
    return num / period(z, positive_q);
}

/// Number of connected components of the level band {|H - z| < band} on a
/// lattice over the field's box: an implementation-independent check of the
/// level component counts entering the graph construction.
inline int level_component_count(const reebflow::ScalarField& f, double z, double band,
                                 int res = 300) {
    using reebflow::Vec;
    const auto& box = f.box();
    const int d = f.dim();
    if (d != 2) throw reebflow::Error("level_component_count: 2-d only");
    std::vector<char> in(static_cast<std::size_t>(res) * res, 0);
    auto at = [&](int i, int j) { return static_cast<std::size_t>(j) * res + i; };
    Vec x(2);
    for (int j = 0; j < res; ++j)
        for (int i = 0; i < res; ++i) {
            x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (res - 1);
            x[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * j / (res - 1);
            in[at(i, j)] = std::fabs(f.value(x) - z) < band;
        }
    std::vector<char> seen(in.size(), 0);
    int comps = 0;
    std::vector<std::pair<int, int>> stack;
    for (int j = 0; j < res; ++j)
        for (int i = 0; i < res; ++i) {
            if (!in[at(i, j)] || seen[at(i, j)]) continue;
            ++comps;
            stack.push_back({i, j});
            seen[at(i, j)] = 1;
            while (!stack.empty()) {
                auto [a, b] = stack.back();
                stack.pop_back();
                const int da[8] = {1, -1, 0, 0, 1, 1, -1, -1};
                const int db[8] = {0, 0, 1, -1, 1, -1, 1, -1};
                for (int k = 0; k < 8; ++k) {
                    int na = a + da[k], nb = b + db[k];
                    if (na < 0 || nb < 0 || na >= res || nb >= res) continue;
                    if (!in[at(na, nb)] || seen[at(na, nb)]) continue;
                    seen[at(na, nb)] = 1;
                    stack.push_back({na, nb});
                }
            }
        }
    return comps;
}

/// Volumes of the two wells of the 4-d separable field at level z, from the
/// momentum-fiber reduction: V = 2 pi * integral of (z - F(q))_+ over the well.
inline std::pair<double, double> sep4d_well_volumes(const reebflow::ScalarField& F, double z,
                                                    double q1_split, int res = 800) {
    using reebflow::Vec;
    const auto& box = F.box();
    double v0 = 0, v1 = 0;
    Vec q(2);
    double dx = (box.hi[0] - box.lo[0]) / res;
    double dy = (box.hi[1] - box.lo[1]) / res;
    for (int j = 0; j < res; ++j)
        for (int i = 0; i < res; ++i) {
            q[0] = box.lo[0] + (i + 0.5) * dx;
            q[1] = box.lo[1] + (j + 0.5) * dy;
            double e = z - F.value(q);
            if (e <= 0) continue;
            double cell = 2.0 * M_PI * e * dx * dy;
            (q[0] < q1_split ? v0 : v1) += cell;
        }
    return {v0, v1};
}

}  // namespace oracles
