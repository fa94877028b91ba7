#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "reebflow/coeffs.hpp"
#include "reebflow/common.hpp"
#include "reebflow/parallel.hpp"
#include "reebflow/reeb.hpp"
#include "reebflow/rng.hpp"

namespace reebflow {

/**
 * Local Dirichlet problems on the star of an interior vertex.
 *
 * On each leg (coordinate s = distance from the vertex in z, s in [0, h]) the
 * generator is A(s) u'' + B(s) u' with A = delta h / (2v) > 0. Solutions are
 * represented through the integrating factor psi = exp(-Phi),
 * Phi' = B/A = (ln|h|)' + 2(betahat + bhat/delta)/h, which involves only the
 * smooth flux quantities; the log-singular density v cancels. All
 * exponentials are handled in log space, so the solver stays stable deep into
 * the small-delta regime where psi varies over hundreds of orders of
 * magnitude.
 */
class StarProblem {
public:
    struct Leg {
        int edge = -1;
        double sigma = +1;  // z = z_vertex + sigma * s
        double gamma = 0;
        std::vector<double> s;       // mesh, ascending from 0
        std::vector<double> phi;     // Phi on the mesh
        std::vector<double> logS;    // log of S(s) = int_0^s e^{-Phi}
        // Green-function pieces of the interval exit-time problem:
        //   I1(y) = int_0^y S(t) m(t) dt,  I2(y) = int_y^h (S(h)-S(t)) m(t) dt,
        // with the speed density m = 1/(A psi). Both integrands are bounded
        // even when psi spans hundreds of orders of magnitude.
        std::vector<double> I1, I2;
        double logW = 0;             // log(gamma / S(h))
    };

    StarProblem(const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables,
                const GluingWeights& gw, double delta, int vertex, double h)
        : vertex_(vertex), h_(h), delta_(delta) {
        const ReebVertex& vx = g.vertices[vertex];
        if (!vx.interior()) throw Error("StarProblem: exterior vertex");
        std::map<int, const EdgeCoefficientTable*> by_edge;
        for (const auto& t : tables) by_edge[t.edge] = &t;

        auto add_leg = [&](int eid, double sigma) {
            const EdgeCoefficientTable& t = *by_edge.at(eid);
            if (h > t.length() - 1e-12)
                throw SolverSingular("star radius " + fmt_g17(h) + " exceeds edge " +
                                     fmt_int(eid) + " span");
            Leg leg;
            leg.edge = eid;
            leg.sigma = sigma;
            leg.gamma = gw.at(vertex, eid);
            if (!(leg.gamma > 0))
                throw SolverSingular("nonpositive gluing weight at vertex " + fmt_int(vertex));
            TableView view(t);

            // Leg mesh: geometric refinement toward the vertex plus uniform
            // cover to the boundary.
            std::vector<double>& s = leg.s;
            s.push_back(0.0);
            for (int j = 60; j >= 1; --j) {
                double d = h * std::pow(0.82, j);
                if (d > 1e-13) s.push_back(d);
            }
            for (int i = 1; i <= 24; ++i) s.push_back(h * i / 24.0);
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end(),
                                [](double a, double b) { return std::fabs(a - b) < 1e-15; }),
                    s.end());
            const int m = static_cast<int>(s.size());

            double z0 = vx.z;
            auto zat = [&](double ss) { return z0 + sigma * ss; };
            // Phi via the exact log part plus quadrature of the smooth flux ratio.
            leg.phi.resize(m);
            const double eref = std::max(std::fabs(view.h(z0)), 1e-300);
            if (!(eref > 1e-300)) throw SolverSingular("vanishing h at vertex " + fmt_int(vertex));
            auto ratio = [&](double ss) {
                double hh = view.h(zat(ss));
                double flux = view.betahat(zat(ss)) + view.bhat(zat(ss)) / delta;
                return 2.0 * flux / hh;
            };
            leg.phi[0] = 0.0;
            double acc = 0.0;
            for (int i = 1; i < m; ++i) {
                acc += 0.5 * (ratio(s[i - 1]) + ratio(s[i])) * (s[i] - s[i - 1]) * sigma;
                double e = std::max(std::fabs(view.h(zat(s[i]))), 1e-300);
                leg.phi[i] = std::log(e / eref) + acc;
            }

            // S(s) = int e^{-Phi}: prefix log-sum-exp with trapezoid weights.
            leg.logS.assign(m, -std::numeric_limits<double>::infinity());
            double mx = -std::numeric_limits<double>::infinity();
            double sum = 0.0;  // sum of exp(-phi - mx) * w
            for (int i = 1; i < m; ++i) {
                double lw = std::log(0.5 * (s[i] - s[i - 1]));
                double t1 = -leg.phi[i - 1] + lw, t2 = -leg.phi[i] + lw;
                for (double term : {t1, t2}) {
                    if (term > mx) {
                        sum = sum * std::exp(mx - term) + 1.0;
                        mx = term;
                    } else {
                        sum += std::exp(term - mx);
                    }
                }
                leg.logS[i] = mx + std::log(sum);
            }
            leg.logW = std::log(leg.gamma) - leg.logS[m - 1];

            // Speed density in log space: log m(t) = log(2|v| / (delta |h|)) + Phi.
            auto log_m = [&](int i) {
                double vv = std::fabs(view.v(zat(s[i] > 0 ? s[i] : s[1] * 0.25)));
                double hh = std::max(std::fabs(view.h(zat(s[i]))), 1e-300);
                return std::log(std::max(2.0 * vv / (delta * hh), 1e-300)) + leg.phi[i];
            };
            const double logSh = leg.logS[m - 1];
            // log(S(h) - S(t)) evaluated stably from the log ratios.
            auto log_Stail = [&](int i) {
                if (!std::isfinite(leg.logS[i])) return logSh;
                double r = leg.logS[i] - logSh;  // <= 0
                if (r > -1e-14) return -std::numeric_limits<double>::infinity();
                return logSh + std::log1p(-std::exp(r));
            };
            leg.I1.assign(m, 0.0);
            leg.I2.assign(m, 0.0);
            auto f1 = [&](int i) {
                double lg = leg.logS[i] + log_m(i);
                return std::isfinite(lg) ? std::exp(lg) : 0.0;
            };
            auto f2 = [&](int i) {
                double lg = log_Stail(i) + log_m(i);
                return std::isfinite(lg) ? std::exp(lg) : 0.0;
            };
            for (int i = 1; i < m; ++i)
                leg.I1[i] = leg.I1[i - 1] + 0.5 * (f1(i - 1) + f1(i)) * (s[i] - s[i - 1]);
            for (int i = m - 2; i >= 0; --i)
                leg.I2[i] = leg.I2[i + 1] + 0.5 * (f2(i) + f2(i + 1)) * (s[i + 1] - s[i]);
            legs_.push_back(std::move(leg));
        };
        for (int eid : vx.edges_above) add_leg(eid, +1.0);
        for (int eid : vx.edges_below) add_leg(eid, -1.0);

        // log-normalized weights w_k = gamma_k / S_k(h).
        double wmax = -std::numeric_limits<double>::infinity();
        for (const auto& l : legs_) wmax = std::max(wmax, l.logW);
        double tot = 0;
        for (const auto& l : legs_) tot += std::exp(l.logW - wmax);
        for (auto& l : legs_) weights_.push_back(std::exp(l.logW - wmax) / tot);
        if (!std::isfinite(tot) || tot <= 0) throw SolverSingular("weight normalization failed");

        // Mean exit time at the vertex: the gluing condition applied to the
        // per-leg representation w = w0 (1 - rho) + w_int gives
        //   w0 = sum_k (gamma_k / S_k) I2_k(0) / sum_k (gamma_k / S_k).
        double num = 0;
        for (std::size_t k = 0; k < legs_.size(); ++k)
            num += std::exp(legs_[k].logW - wmax) * legs_[k].I2[0];
        w0_ = num / tot;
        if (!std::isfinite(w0_) || w0_ < 0) throw ClockStall("mean exit time did not converge");
    }

    int vertex() const { return vertex_; }
    double radius() const { return h_; }
    const std::vector<Leg>& legs() const { return legs_; }

    /// Exit probabilities from the vertex itself, one per attached leg.
    std::map<int, double> exit_probabilities() const {
        std::map<int, double> out;
        for (std::size_t k = 0; k < legs_.size(); ++k) out[legs_[k].edge] = weights_[k];
        return out;
    }

    /// Harmonic interpolation of the exit probabilities from a point at
    /// distance s on leg `on_edge`.
    std::map<int, double> exit_probabilities_from(int on_edge, double s) const {
        int j = leg_index(on_edge);
        double rho = ratio_S(j, s);
        std::map<int, double> out;
        for (std::size_t k = 0; k < legs_.size(); ++k) {
            double u0 = weights_[k];
            double gj = (static_cast<int>(k) == j) ? 1.0 : 0.0;
            out[legs_[k].edge] = u0 + (gj - u0) * rho;
        }
        return out;
    }

    /// Mean exit time from a point at distance s on leg `on_edge` (s = 0 gives
    /// the vertex value): interval exit time plus the vertex-return branch,
    ///   w(y) = (1 - rho) I1(y) + rho I2(y) + (1 - rho) w0.
    double mean_exit_time_from(int on_edge, double s) const {
        if (s <= 0) return w0_;
        int j = leg_index(on_edge);
        const Leg& l = legs_[j];
        double rho = ratio_S(j, s);
        double i1 = interp(l.s, l.I1, s);
        double i2 = interp(l.s, l.I2, s);
        double w = (1 - rho) * i1 + rho * i2 + (1 - rho) * w0_;
        return std::max(w, 0.0);
    }

    double mean_exit_time_vertex() const { return w0_; }

    /// Discrete residual of the gluing condition sum_k gamma_k D_k u(O) for
    /// the harmonic solution with boundary data e_target, normalized.
    double gluing_residual(int target_edge) const {
        double num = 0, den = 0;
        for (std::size_t k = 0; k < legs_.size(); ++k) {
            const Leg& l = legs_[k];
            double u0 = weights_[k];
            double g = (l.edge == target_edge) ? 1.0 : 0.0;
            // D_k u(O) = (g - u0) * psi(0) / S(h); psi(0) = 1 by normalization.
            double der = (g - u0) / std::exp(l.logS.back());
            num += l.gamma * der;
            den += std::fabs(l.gamma * der);
        }
        return den > 0 ? std::fabs(num) / den : 0.0;
    }

private:
    int leg_index(int edge) const {
        for (std::size_t k = 0; k < legs_.size(); ++k)
            if (legs_[k].edge == edge) return static_cast<int>(k);
        throw Error("StarProblem: edge " + fmt_int(edge) + " not attached");
    }

    /// rho = S(s) / S(h), evaluated through the log representation.
    double ratio_S(int leg_idx, double s) const {
        const Leg& l = legs_[leg_idx];
        if (s <= l.s.front()) return 0.0;
        if (s >= l.s.back()) return 1.0;
        auto it = std::lower_bound(l.s.begin(), l.s.end(), s);
        std::size_t i = it - l.s.begin();
        double a = l.logS[i - 1], b = l.logS[i];
        double t = (s - l.s[i - 1]) / (l.s[i] - l.s[i - 1]);
        double lg = std::isfinite(a) ? a + t * (b - a) : (t > 1.0 - 1e-12 ? b : a);
        if (!std::isfinite(lg)) return 0.0;
        return std::exp(std::min(lg - l.logS.back(), 0.0));
    }

    static double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
        auto it = std::lower_bound(xs.begin(), xs.end(), x);
        if (it == xs.begin()) return ys.front();
        if (it == xs.end()) return ys.back();
        std::size_t i = it - xs.begin();
        double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        return ys[i - 1] + t * (ys[i] - ys[i - 1]);
    }

    int vertex_;
    double h_, delta_;
    std::vector<Leg> legs_;
    std::vector<double> weights_;
    double w0_ = 0;
};

/// Exit-edge distribution from an interior vertex at the given star radius.
inline std::map<int, double> vertex_exit_distribution(
    const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables, const GluingWeights& gw,
    double delta, int vertex, double h) {
    return StarProblem(g, tables, gw, delta, vertex, h).exit_probabilities();
}

/// Mean exit time from a point y in the star of the vertex (y at the vertex
/// when y.edge < 0).
inline double mean_exit_time(const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables,
                             const GluingWeights& gw, double delta, int vertex, double h,
                             const GraphPoint& y) {
    StarProblem star(g, tables, gw, delta, vertex, h);
    if (y.edge < 0) return star.mean_exit_time_vertex();
    return star.mean_exit_time_from(y.edge, std::fabs(y.z - g.vertices[vertex].z));
}

// ---------------------------------------------------------------------------

struct GraphDiffusionConfig {
    double delta = 1e-3;
    double T = 10.0;
    double dt = 1e-4;
    double h_v = 0.04;       // star radius for vertex excursions
    GraphPoint start;
    std::uint64_t seed = 0;
    int subsample = 100;

    void validate(const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables) const {
        double min_len = 1e300, max_drift = 0, max_diff = 0;
        for (const auto& t : tables) {
            min_len = std::min(min_len, t.length());
            for (const auto& r : t.rows) {
                max_drift = std::max(max_drift,
                                     std::fabs(delta * r.betabar + r.bbar));
                max_diff = std::max(max_diff, delta * std::fabs(r.a2bar));
            }
        }
        if (h_v >= 0.5 * min_len)
            throw ConfigInvalid("graphdiff: h_v >= half the shortest edge length");
        if (dt * max_drift + std::sqrt(dt * max_diff) >= h_v / 5.0)
            throw ConfigInvalid("graphdiff: step too coarse for the vertex radius (dt*drift + sqrt(dt*diff) must stay below h_v/5)");
        (void)g;
    }
};

struct GraphPath {
    std::vector<double> t;
    std::vector<GraphPoint> y;
    long long excursions = 0;
    long long clamped = 0;
};

/**
 * The limiting slow diffusion on the graph: Euler-Maruyama inside edges with
 * the tabulated averaged coefficients, and one-shot excursion resampling from
 * the local star problem whenever the path enters the h_v-ball of an interior
 * vertex. Exterior vertices need no special casing (the coefficients vanish
 * there); a reflecting clamp guards the discrete scheme.
 */
class GraphDiffusionSimulator {
public:
    GraphDiffusionSimulator(const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables,
                            const GluingWeights& gw, const GraphDiffusionConfig& cfg)
        : g_(g), gw_(gw), cfg_(cfg) {
        cfg.validate(g, tables);
        for (const auto& t : tables) views_.emplace(t.edge, TableView(t));
        for (const auto& vx : g.vertices)
            if (vx.interior())
                stars_.emplace(vx.id, StarProblem(g, tables, gw, cfg.delta, vx.id, cfg.h_v));
    }

    using StopPredicate = std::function<bool(const GraphPoint&, double)>;

    GraphPath run(std::uint64_t traj_index = 0, const StopPredicate* stop = nullptr) const {
        Rng rng(cfg_.seed, "graphdiff", traj_index);
        GraphPath out;
        GraphPoint y = cfg_.start;
        double t = 0;
        long long k = 0;
        auto record = [&]() {
            out.t.push_back(t);
            out.y.push_back(y);
        };
        record();
        while (t < cfg_.T) {
            if (stop && (*stop)(y, t)) break;
            // Excursion when inside the trigger ball of an interior vertex.
            const ReebEdge& e = g_.edges[y.edge];
            int near_vertex = -1;
            if (e.lower >= 0 && g_.vertices[e.lower].interior() &&
                y.z - e.z_lo < 0.5 * cfg_.h_v)
                near_vertex = e.lower;
            else if (e.upper >= 0 && g_.vertices[e.upper].interior() &&
                     e.z_hi - y.z < 0.5 * cfg_.h_v)
                near_vertex = e.upper;
            if (near_vertex >= 0) {
                const StarProblem& star = stars_.at(near_vertex);
                double s = std::fabs(y.z - g_.vertices[near_vertex].z);
                auto probs = star.exit_probabilities_from(y.edge, s);
                double tau = star.mean_exit_time_from(y.edge, s);
                double u = rng.uniform();
                int chosen = -1;
                double accum = 0;
                for (const auto& [eid, p] : probs) {
                    accum += p;
                    chosen = eid;
                    if (u <= accum) break;
                }
                const ReebEdge& ce = g_.edges[chosen];
                bool above = ce.lower == near_vertex;
                y.edge = chosen;
                y.z = g_.vertices[near_vertex].z + (above ? cfg_.h_v : -cfg_.h_v);
                t += rng.exponential(std::max(tau, 1e-300));
                ++out.excursions;
                if (++k % cfg_.subsample == 0) record();
                continue;
            }

            const TableView& view = views_.at(y.edge);
            double drift = cfg_.delta * hprime(view, y.z) / (2.0 * view.v(y.z)) +
                           cfg_.delta * view.betabar(y.z) + view.bbar(y.z);
            double diff = std::max(cfg_.delta * view.a2bar(y.z), 0.0);
            y.z += drift * cfg_.dt + std::sqrt(diff * cfg_.dt) * rng.normal();
            t += cfg_.dt;

            // Reflect at exterior ends and at the ceiling.
            if (y.z < e.z_lo && (e.lower < 0 || !g_.vertices[e.lower].interior())) {
                y.z = 2 * e.z_lo - y.z;
                ++out.clamped;
            }
            if (y.z > e.z_hi) {
                if (e.open || e.upper < 0 || !g_.vertices[e.upper].interior()) {
                    y.z = 2 * e.z_hi - y.z;
                    ++out.clamped;
                }
            }
            if (y.z < e.z_lo - cfg_.h_v || y.z > e.z_hi + cfg_.h_v)
                throw CoefficientGap("z=" + fmt_g17(y.z) + " left edge " + fmt_int(y.edge));
            y.z = std::clamp(y.z, e.z_lo, e.z_hi);
            if (++k % cfg_.subsample == 0) record();
        }
        record();
        return out;
    }

    const StarProblem& star(int vertex) const { return stars_.at(vertex); }

private:
    static double hprime(const TableView& view, double z) {
        double w = 1e-4 * (view.t->z_hi - view.t->z_lo);
        return (view.h(z + w) - view.h(z - w)) / (2 * w);
    }

    const ReebGraph& g_;
    GluingWeights gw_;
    GraphDiffusionConfig cfg_;
    std::map<int, TableView> views_;
    std::map<int, StarProblem> stars_;
};

inline GraphPath simulate_graph_diffusion(const ReebGraph& g,
                                          const std::vector<EdgeCoefficientTable>& tables,
                                          const GluingWeights& gw,
                                          const GraphDiffusionConfig& cfg,
                                          std::uint64_t traj_index = 0) {
    return GraphDiffusionSimulator(g, tables, gw, cfg).run(traj_index);
}

}  // namespace reebflow
