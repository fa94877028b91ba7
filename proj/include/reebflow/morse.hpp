#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"

namespace reebflow {

struct CriticalPoint {
    Vec x;                  // location
    double z = 0.0;         // field value
    int index = 0;          // number of negative Hessian eigenvalues
    Vec eigenvalues;        // Hessian spectrum, ascending
};

struct NewtonFailure {
    Vec seed;
    std::string reason;
};

struct CriticalSearchOptions {
    int seeds_per_axis = 12;
    double newton_tol = 1e-10;
    double degenerate_tol = 1e-6;
    int max_iterations = 80;
    std::vector<NewtonFailure>* failures = nullptr;  // optional diagnostics sink
};

namespace detail {

inline bool newton_refine(const ScalarField& f, Vec& x, const CriticalSearchOptions& opt,
                          std::string* reason) {
    Vec g(f.dim()), step(f.dim());
    Mat h(f.dim(), f.dim());
    for (int it = 0; it < opt.max_iterations; ++it) {
        f.gradient(x, g);
        double gn = g.norm();
        if (gn <= opt.newton_tol) return true;
        f.hessian(x, h);
        Eigen::FullPivLU<Mat> lu(h);
        if (!lu.isInvertible()) {
            if (reason) *reason = "singular Hessian during refinement";
            return false;
        }
        step = lu.solve(g);
        // Damped update: backtrack while the gradient norm does not improve.
        double alpha = 1.0;
        Vec trial(f.dim());
        for (int bt = 0; bt < 30; ++bt) {
            trial = x - alpha * step;
            Vec gt(f.dim());
            f.gradient(trial, gt);
            if (gt.norm() < gn || alpha < 1e-6) break;
            alpha *= 0.5;
        }
        x = trial;
        if (!f.box().contains(x, 0.5)) {
            if (reason) *reason = "iterate left the bounding box";
            return false;
        }
    }
    if (reason) *reason = "no convergence within iteration budget";
    return false;
}

}  // namespace detail

/**
 * Finds the critical points of an analytic Morse field by damped Newton
 * refinement from a regular grid of seeds, classifies each by its Hessian
 * spectrum, and returns them sorted by field value.
 *
 * Throws DegenerateCritical when a converged point has a Hessian eigenvalue
 * below the degeneracy tolerance. Non-converging seeds are recorded in
 * opt.failures and are harmless as long as other seeds cover every basin.
 */
inline std::vector<CriticalPoint> find_critical_points(const ScalarField& f,
                                                       const CriticalSearchOptions& opt = {}) {
    if (opt.seeds_per_axis < 2) throw Error("find_critical_points: need at least 2 seeds per axis");
    const int d = f.dim();
    const Box& box = f.box();

    std::vector<CriticalPoint> found;
    std::vector<int> idx(d, 0);
    const int n = opt.seeds_per_axis;
    Vec x(d);
    for (;;) {
        for (int k = 0; k < d; ++k) {
            double t = (idx[k] + 0.5) / n;
            x[k] = box.lo[k] + t * (box.hi[k] - box.lo[k]);
        }
        Vec p = x;
        std::string reason;
        if (detail::newton_refine(f, p, opt, &reason)) {
            bool duplicate = false;
            for (const auto& c : found)
                if ((c.x - p).norm() <= 10.0 * opt.newton_tol) {
                    duplicate = true;
                    break;
                }
            if (!duplicate && f.box().contains(p, 1e-9)) {
                CriticalPoint c;
                c.x = p;
                c.z = f.value(p);
                Eigen::SelfAdjointEigenSolver<Mat> es(f.hess(p));
                c.eigenvalues = es.eigenvalues();
                double min_abs = c.eigenvalues.cwiseAbs().minCoeff();
                if (min_abs < opt.degenerate_tol)
                    throw DegenerateCritical("eigenvalue " + fmt_g17(min_abs) + " at z=" +
                                             fmt_g17(c.z) + " (field is not Morse)");
                c.index = 0;
                for (int k = 0; k < d; ++k)
                    if (c.eigenvalues[k] < 0.0) ++c.index;
                found.push_back(std::move(c));
            }
        } else if (opt.failures) {
            opt.failures->push_back({x, reason});
        }
        int k = 0;
        while (k < d && ++idx[k] == n) idx[k++] = 0;
        if (k == d) break;
    }
    std::sort(found.begin(), found.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
        if (a.z != b.z) return a.z < b.z;
        return std::lexicographical_compare(a.x.data(), a.x.data() + a.x.size(),
                                            b.x.data(), b.x.data() + b.x.size());
    });
    return found;
}

/**
 * Symplectic gradient for x = (p, q): (-dH/dq, dH/dp). Orthogonal to grad H
 * by construction.
 */
inline Vec symplectic_gradient(const ScalarField& f, const Vec& x) {
    const int d = f.dim();
    if (d % 2 != 0) throw OddDimension("symplectic gradient needs even dimension, got " + fmt_int(d));
    const int n = d / 2;
    Vec g(d), out(d);
    f.gradient(x, g);
    out.head(n) = -g.tail(n);  // dp/dt = -dH/dq
    out.tail(n) = g.head(n);   // dq/dt =  dH/dp
    return out;
}

/**
 * Report on the standing assumptions of the averaging setup: pairwise
 * separation of critical values, quadratic growth constants fitted on the box
 * boundary, the maximal Hessian eigenvalue over the critical set, and the
 * induced admissible bound on the energy-preserving noise intensity kappa.
 */
struct AssumptionReport {
    // Critical-value separation (conservative proxy; the definitive per-level
    // component check happens after the Reeb graph is built).
    double min_value_gap = 0.0;
    double level_sep_tol = 0.0;
    bool values_separated = false;

    // Growth constants on the box boundary: H >= c1 |x|^2, |grad H| >= c2 |x|,
    // |lap H| >= c3.
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    bool growth_ok = false;

    // Boundary confinement: min of H over boundary probes vs ceiling.
    double boundary_min = 0.0;
    bool ceiling_ok = false;

    double lambda_star = 0.0;   // max Hessian eigenvalue over critical points
    double noise_bound_K = 0.0; // max |grad H|^2 near the critical set
    double kappa_max = 0.0;     // admissible kappa < 1 / (K lambda_star)

    bool admissible_kappa(double kappa) const { return kappa < kappa_max; }
};

inline AssumptionReport check_assumptions(const ScalarField& f,
                                          const std::vector<CriticalPoint>& criticals,
                                          double level_sep_tol = 1e-9,
                                          int boundary_probes_per_axis = 24,
                                          double critical_ball_radius = 0.5) {
    if (criticals.empty()) throw Error("check_assumptions: empty critical set");
    AssumptionReport r;
    r.level_sep_tol = level_sep_tol;

    r.min_value_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < criticals.size(); ++i)
        r.min_value_gap = std::min(r.min_value_gap, criticals[i + 1].z - criticals[i].z);
    if (criticals.size() == 1) r.min_value_gap = std::numeric_limits<double>::infinity();
    r.values_separated = r.min_value_gap > level_sep_tol;

    // Probe every box face on a lattice.
    const int d = f.dim();
    const Box& box = f.box();
    double zmax_crit = criticals.back().z;
    r.c1 = r.c2 = r.c3 = std::numeric_limits<double>::infinity();
    r.boundary_min = std::numeric_limits<double>::infinity();
    const int m = boundary_probes_per_axis;
    Vec x(d);
    std::vector<int> idx(d, 0);
    for (int face_axis = 0; face_axis < d; ++face_axis) {
        for (int side = 0; side < 2; ++side) {
            std::fill(idx.begin(), idx.end(), 0);
            for (;;) {
                for (int k = 0; k < d; ++k) {
                    double t = (idx[k] + 0.5) / m;
                    x[k] = box.lo[k] + t * (box.hi[k] - box.lo[k]);
                }
                x[face_axis] = side ? box.hi[face_axis] : box.lo[face_axis];
                double h = f.value(x);
                double xs = x.squaredNorm();
                r.boundary_min = std::min(r.boundary_min, h);
                if (xs > 0.0) {
                    r.c1 = std::min(r.c1, h / xs);
                    r.c2 = std::min(r.c2, f.grad(x).norm() / std::sqrt(xs));
                }
                r.c3 = std::min(r.c3, std::fabs(f.laplacian(x)));
                int k = 0;
                while (k < d && (k == face_axis || ++idx[k] == m)) {
                    if (k != face_axis) idx[k] = 0;
                    ++k;
                }
                if (k == d) break;
            }
        }
    }
    r.growth_ok = r.c1 > 0.0 && r.c2 > 0.0 && r.c3 > 0.0;
    r.ceiling_ok = r.boundary_min > std::max(f.z_ceiling(), zmax_crit);

    r.lambda_star = 0.0;
    for (const auto& c : criticals)
        r.lambda_star = std::max(r.lambda_star, c.eigenvalues.maxCoeff());

    // K bounds the tangential noise amplitude |grad H|^2 on a neighborhood of
    // the critical set.
    r.noise_bound_K = 0.0;
    const int probes = 2048;
    std::uint64_t s = 0x51ab9ed81fe2a7d3ull;
    for (const auto& c : criticals) {
        for (int k = 0; k < probes; ++k) {
            Vec y(d);
            double norm2 = 0.0;
            for (int j = 0; j < d; ++j) {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                y[j] = static_cast<double>(static_cast<std::int64_t>(s)) / 9.22e18;
                norm2 += y[j] * y[j];
            }
            if (norm2 == 0.0) continue;
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            double rr = critical_ball_radius *
                        std::pow(static_cast<double>(s >> 11) * 0x1.0p-53, 1.0 / d);
            Vec p = c.x + (rr / std::sqrt(norm2)) * y;
            if (!box.contains(p)) continue;
            r.noise_bound_K = std::max(r.noise_bound_K, f.grad(p).squaredNorm());
        }
    }
    r.kappa_max = (r.noise_bound_K > 0.0 && r.lambda_star > 0.0)
                      ? 1.0 / (r.noise_bound_K * r.lambda_star)
                      : std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace reebflow
