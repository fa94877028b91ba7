#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"
#include "reebflow/mc.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/parallel.hpp"
#include "reebflow/reeb.hpp"
#include "reebflow/rng.hpp"
#include "reebflow/stats.hpp"

namespace reebflow {

/// sigma1(x) = |grad H| (I - n n^T): the simplest tangential noise matrix.
/// The induced a1 = |grad H|^2 (I - n n^T) annihilates grad H exactly and
/// vanishes quadratically at critical points.
inline Mat sigma1(const ScalarField& f, const Vec& x) {
    Vec g = f.grad(x);
    double gn = g.norm();
    Mat s = Mat::Zero(f.dim(), f.dim());
    if (gn == 0.0) return s;
    Vec n = g / gn;
    s.setIdentity(f.dim(), f.dim());
    s -= n * n.transpose();
    s *= gn;
    return s;
}

/// Row divergence of a1: btilde_k = sum_i d a1_ik / d x_i
///                               = (Hess H) grad H - (lap H) grad H.
inline Vec a1_row_divergence(const ScalarField& f, const Vec& x) {
    Vec g = f.grad(x);
    Mat h = f.hess(x);
    return h * g - h.trace() * g;
}

struct SdeConfig {
    double epsilon = 1e-2;
    double kappa = 0.05;
    double delta = 0.0;
    double T = 1.0;
    double dt = 1e-4;
    std::uint64_t seed = 0;
    Vec x0;
    std::shared_ptr<const ScalarField> field;
    std::shared_ptr<const MatrixModel> a2;
    std::shared_ptr<const VectorField> b;
    std::shared_ptr<const VectorField> beta;
    double fast_substep_cap = 0.02;   // fast-time leapfrog resolution
    double projection_tol = 1e-12;
    int subsample = 100;

    void validate() const {
        if (!field) throw ConfigInvalid("sde: no field");
        if (epsilon <= 0 || kappa < 0 || delta < 0) throw ConfigInvalid("sde: bad intensities");
        if (dt > epsilon / 50.0 + 1e-15)
            throw ConfigInvalid("sde: dt=" + fmt_g17(dt) + " must be <= epsilon/50 to resolve the fast flow");
        if (field->dim() % 2 != 0) throw OddDimension("sde: state dimension must be even");
        if (x0.size() != field->dim()) throw ConfigInvalid("sde: x0 has wrong dimension");
        if (!field->box().contains(x0)) throw ConfigInvalid("sde: x0 outside the box");
    }
};

/**
 * One trajectory of the fast-slow diffusion, advanced by Strang splitting:
 * half-step of the fast conservative flow, a stochastic step carrying the
 * energy-preserving noise (with its divergence drift and a level projection)
 * and the dissipative drift/noise, then the second fast half-step.
 *
 * The level projection removes the O(dt) discretization leakage of H in the
 * conservative substep; the continuous dynamics keeps H a martingale with
 * zero quadratic variation there, and the acceptance tolerance on energy
 * conservation is far tighter than plain Euler-Maruyama can reach.
 */
class SdeStepper {
public:
    SdeStepper(const SdeConfig& cfg)
        : cfg_(cfg), f_(*cfg.field), d_(cfg.field->dim()) {
        x_ = cfg.x0;
        t_ = 0.0;
        half_tau_ = cfg.dt / (2.0 * cfg.epsilon);
        n_sub_ = std::max(1, static_cast<int>(std::ceil(half_tau_ / cfg.fast_substep_cap)));
        sub_tau_ = half_tau_ / n_sub_;
        if (cfg.a2) {
            sigma2_.resize(d_, d_);
            cfg.a2->sqrt_value(cfg.x0, sigma2_);
            sigma2_const_ = true;  // catalog models are constant; re-query otherwise
        }
        g_.resize(d_);
        work_.resize(d_);
        drift_.resize(d_);
        hess_.resize(d_, d_);
    }

    const Vec& state() const { return x_; }
    double time() const { return t_; }
    double energy() const { return f_.value(x_); }
    long long rejected() const { return rejected_; }

    void step(Rng& rng) {
        fast_half();
        stochastic_step(rng);
        fast_half();
        t_ += cfg_.dt;
    }

    /// Deterministic fast flow only (kappa = delta = 0, b = beta = 0 runs).
    void fast_half() {
        if (f_.is_separable()) {
            const int np = f_.p_dim();
            const auto& F = *f_.potential();
            Vec q = x_.tail(d_ - np), gq(d_ - np);
            for (int s = 0; s < n_sub_; ++s) {
                F.gradient(q, gq);
                x_.head(np) -= 0.5 * sub_tau_ * gq;
                q += sub_tau_ * x_.head(np);
                F.gradient(q, gq);
                x_.head(np) -= 0.5 * sub_tau_ * gq;
            }
            x_.tail(d_ - np) = q;
        } else {
            // Implicit midpoint; symplectic, exact on quadratic Hamiltonians.
            for (int s = 0; s < n_sub_; ++s) {
                Vec xm = x_;
                for (int it = 0; it < 50; ++it) {
                    Vec mid = 0.5 * (x_ + xm);
                    Vec v = symplectic_gradient(f_, mid);
                    Vec xn = x_ + sub_tau_ * v;
                    double delta = (xn - xm).norm();
                    xm = xn;
                    if (delta < 1e-14 * std::max(1.0, xm.norm())) break;
                }
                x_ = xm;
            }
        }
    }

private:
    void stochastic_step(Rng& rng) {
        const double dt = cfg_.dt;
        Vec x_entry = x_;

        // Energy-preserving component.
        if (cfg_.kappa > 0) {
            double h0 = f_.value(x_);
            f_.gradient(x_, g_);
            double gn2 = g_.squaredNorm();
            f_.hessian(x_, hess_);
            // divergence drift of a1
            work_ = hess_ * g_ - hess_.trace() * g_;
            x_ += (cfg_.kappa / (2.0 * cfg_.epsilon)) * dt * work_;
            if (gn2 > 0) {
                double gn = std::sqrt(gn2);
                for (int i = 0; i < d_; ++i) work_[i] = rng.normal();
                double along = g_.dot(work_) / gn2;
                work_ -= along * g_;  // tangential projection
                x_ += std::sqrt(cfg_.kappa * dt / cfg_.epsilon) * gn * work_;
            }
            // Project back to the level set of h0.
            for (int it = 0; it < 8; ++it) {
                double dh = f_.value(x_) - h0;
                if (std::fabs(dh) <= cfg_.projection_tol * std::max(1.0, std::fabs(h0))) break;
                f_.gradient(x_, g_);
                double gg = g_.squaredNorm();
                if (gg < 1e-28) break;
                x_ -= (dh / gg) * g_;
            }
        }

        // Dissipative drift and noise.
        if (cfg_.b) {
            cfg_.b->value(x_, drift_);
            x_ += dt * drift_;
        }
        if (cfg_.delta > 0) {
            if (cfg_.beta) {
                cfg_.beta->value(x_, drift_);
                x_ += cfg_.delta * dt * drift_;
            }
            if (cfg_.a2) {
                cfg_.a2->row_divergence(x_, drift_);
                x_ += 0.5 * cfg_.delta * dt * drift_;
                if (!sigma2_const_) cfg_.a2->sqrt_value(x_, sigma2_);
                for (int i = 0; i < d_; ++i) work_[i] = rng.normal();
                x_ += std::sqrt(cfg_.delta * dt) * (sigma2_ * work_);
            }
        }

        // Ceiling reflection by rejection of the stochastic move; box guard.
        if (f_.value(x_) > f_.z_ceiling()) {
            x_ = x_entry;
            ++rejected_;
        }
        if (!f_.box().contains(x_, 0.0))
            throw BoxExit("state left the box at t=" + fmt_g17(t_));
    }

    SdeConfig cfg_;
    const ScalarField& f_;
    int d_;
    Vec x_;
    double t_ = 0.0;
    double half_tau_, sub_tau_;
    int n_sub_;
    Vec g_, work_, drift_;
    Mat hess_, sigma2_;
    bool sigma2_const_ = false;
    long long rejected_ = 0;
};

struct PathSample {
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<double> H;
    std::vector<GraphPoint> y;  // only when a graph is attached
    struct Crossing {
        double t;
        double level;
        int edge_before = -1, edge_after = -1;
    };
    std::vector<Crossing> crossings;
    long long rejected_steps = 0;
};

/**
 * Full trajectory with subsampled storage and vertex-level crossing events
 * (detected by the sign change of H - z_vertex, refined by bisection on the
 * interpolated segment).
 */
inline PathSample simulate_full(const SdeConfig& cfg, const ReebGraph* graph = nullptr,
                                std::uint64_t traj_index = 0) {
    cfg.validate();
    SdeStepper st(cfg);
    Rng rng(cfg.seed, "sde", traj_index);
    PathSample out;
    std::vector<double> levels;
    if (graph)
        for (const auto& v : graph->vertices)
            if (std::find(levels.begin(), levels.end(), v.z) == levels.end())
                levels.push_back(v.z);

    long long n_steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
    auto record = [&](double tt) {
        out.t.push_back(tt);
        out.x.push_back(st.state());
        out.H.push_back(st.energy());
        if (graph) out.y.push_back(graph->project(st.state()));
    };
    record(0.0);
    double h_prev = st.energy();
    Vec x_prev = st.state();
    for (long long k = 1; k <= n_steps; ++k) {
        st.step(rng);
        double h_now = st.energy();
        for (double zv : levels) {
            if ((h_prev - zv) * (h_now - zv) < 0) {
                // Bisection on the linearly interpolated segment.
                double lo = 0, hi = 1;
                Vec xs(st.state().size());
                for (int it = 0; it < 12; ++it) {
                    double mid = 0.5 * (lo + hi);
                    xs = x_prev + mid * (st.state() - x_prev);
                    double hm = cfg.field->value(xs);
                    if ((h_prev - zv) * (hm - zv) < 0) hi = mid;
                    else lo = mid;
                }
                PathSample::Crossing c;
                c.t = st.time() - cfg.dt * (1.0 - 0.5 * (lo + hi));
                c.level = zv;
                if (graph) {
                    c.edge_before = graph->project(x_prev).edge;
                    c.edge_after = graph->project(st.state()).edge;
                }
                out.crossings.push_back(c);
            }
        }
        if (k % cfg.subsample == 0 || k == n_steps) record(st.time());
        h_prev = h_now;
        x_prev = st.state();
    }
    out.rejected_steps = st.rejected();
    return out;
}

/// Time average of f along the energy-preserving process (delta = 0, no
/// drift). Throws LevelDrift when H leaks beyond the tolerance.
inline double ergodic_average(const SdeConfig& cfg, const std::function<double(const Vec&)>& f,
                              double level_tol = 1e-3, std::uint64_t traj_index = 0) {
    cfg.validate();
    if (cfg.delta != 0 || cfg.b || cfg.beta)
        throw ConfigInvalid("ergodic_average: requires delta=0 and no drift");
    SdeStepper st(cfg);
    Rng rng(cfg.seed, "sde", traj_index);
    double h0 = st.energy();
    double tol = level_tol * std::max(1.0, std::fabs(h0));
    long long n_steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
    double acc = 0.0;
    for (long long k = 0; k < n_steps; ++k) {
        st.step(rng);
        acc += f(st.state());
        if (std::fabs(st.energy() - h0) > tol)
            throw LevelDrift("|H - H0| = " + fmt_g17(std::fabs(st.energy() - h0)) + " at t=" +
                             fmt_g17(st.time()));
    }
    return acc / static_cast<double>(n_steps);
}

// ---------------------------------------------------------------------------
// Exit statistics at a vertex.

struct ExitRecord {
    int exit_edge = -1;
    double time = 0.0;
    GraphPoint final_point;
    bool timeout = false;
};

struct ExitStats {
    std::vector<ExitRecord> records;
    std::map<int, long long> counts;
    long long timeouts = 0;
    long long n = 0;

    double frequency(int edge) const {
        auto it = counts.find(edge);
        long long c = it == counts.end() ? 0 : it->second;
        long long done = n - timeouts;
        return done > 0 ? static_cast<double>(c) / done : 0.0;
    }
    Interval wilson(int edge) const {
        auto it = counts.find(edge);
        long long c = it == counts.end() ? 0 : it->second;
        return wilson_interval(c, n - timeouts);
    }
    double mean_time() const {
        double s = 0;
        long long c = 0;
        for (const auto& r : records)
            if (!r.timeout) { s += r.time; ++c; }
        return c ? s / c : 0.0;
    }
};

/**
 * First exit of the projected trajectory from the h-neighborhood of a vertex:
 * trajectories start on the entrance level component at z_O + sign * h_start
 * and run until |H - z_O| >= h. Exit edges are identified by projection.
 */
inline ExitStats first_exit_stats(const SdeConfig& base, const ReebGraph& graph, int vertex,
                                  int entrance_edge, double h, double h_start, long long n_traj,
                                  int threads = 0, double shell_width = 1e-3) {
    const ReebVertex& vx = graph.vertices[vertex];
    if (!vx.interior()) throw Error("first_exit_stats: vertex is exterior");
    const ReebEdge& ee = graph.edges[entrance_edge];
    double side = (ee.lower == vertex) ? +1.0 : -1.0;  // entrance from above or below
    double z_start = vx.z + side * h_start;

    ExitStats out;
    out.records.resize(n_traj);
    out.n = n_traj;
    parallel_for(n_traj, threads, [&](long long i) {
        SdeConfig cfg = base;
        cfg.seed = base.seed;
        Rng rng(cfg.seed, "exit", static_cast<std::uint64_t>(i));
        ShellSampler shell(graph, entrance_edge, z_start, shell_width);
        cfg.x0 = shell.draw(rng);
        cfg.validate();
        SdeStepper st(cfg);
        ExitRecord rec;
        rec.timeout = true;
        long long n_steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
        for (long long k = 0; k < n_steps; ++k) {
            st.step(rng);
            if (std::fabs(st.energy() - vx.z) >= h) {
                GraphPoint gp = graph.project(st.state());
                rec.exit_edge = gp.edge;
                rec.time = st.time();
                rec.final_point = gp;
                rec.timeout = false;
                break;
            }
        }
        out.records[i] = rec;
    });
    for (const auto& r : out.records) {
        if (r.timeout) ++out.timeouts;
        else ++out.counts[r.exit_edge];
    }
    return out;
}

/// Generator of the full process applied to a C^2 observable, for weak
/// consistency checks against one-step empirical averages.
inline double apply_generator(const SdeConfig& cfg, const Vec& x,
                              const std::function<double(const Vec&)>& /*u*/,
                              const std::function<Vec(const Vec&)>& grad_u,
                              const std::function<Mat(const Vec&)>& hess_u) {
    const ScalarField& f = *cfg.field;
    Vec gu = grad_u(x);
    Mat hu = hess_u(x);
    Vec g = f.grad(x);
    double gn2 = g.squaredNorm();
    double out = symplectic_gradient(f, x).dot(gu) / cfg.epsilon;
    // kappa part: a1 : hess u + btilde . grad u
    double a1_h = gn2 * hu.trace();
    if (gn2 > 0) a1_h -= (g.transpose() * hu * g)(0, 0);
    Vec btilde = a1_row_divergence(f, x);
    out += cfg.kappa / (2.0 * cfg.epsilon) * (a1_h + btilde.dot(gu));
    if (cfg.b) {
        Vec bv(f.dim());
        cfg.b->value(x, bv);
        out += bv.dot(gu);
    }
    if (cfg.delta > 0 && cfg.a2) {
        Mat a(f.dim(), f.dim());
        cfg.a2->value(x, a);
        Vec rd(f.dim());
        cfg.a2->row_divergence(x, rd);
        out += 0.5 * cfg.delta * (a.cwiseProduct(hu).sum() + rd.dot(gu));
    }
    if (cfg.delta > 0 && cfg.beta) {
        Vec bv(f.dim());
        cfg.beta->value(x, bv);
        out += cfg.delta * bv.dot(gu);
    }
    return out;
}

}  // namespace reebflow
