#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "reebflow/coeffs.hpp"
#include "reebflow/common.hpp"
#include "reebflow/mc.hpp"
#include "reebflow/reeb.hpp"
#include "reebflow/rng.hpp"

namespace reebflow {

struct LimitSegment {
    int edge = -1;
    std::vector<double> t, z;  // dense samples along the segment
};

struct BranchEvent {
    int vertex = -1;
    int chosen_edge = -1;
    double draw = 0.0;
};

struct LimitPath {
    std::vector<LimitSegment> segments;
    std::vector<BranchEvent> branchings;
    bool converged = false;        // reached an asymptotic target (within 1e-10)
    bool asymptotic = false;       // target approached but never hit
    int target_vertex = -1;        // exterior vertex target
    int target_edge = -1;          // edge of an interior stable root
    double target_z = 0.0;
    double time_to_band = -1.0;    // first time within 1e-3 of the target
    double final_time = 0.0;
    double final_z = 0.0;
    int final_edge = -1;
};

struct LimitOptions {
    double T = 100.0;
    double vertex_hit_tol = 1e-8;     // interior vertices are reached in finite time
    double asymptotic_tol = 1e-10;    // truncation distance at asymptotic targets
    double band_tol = 1e-3;           // transit-time bookkeeping
    int mesh_per_segment = 400;
};

/**
 * The zero-noise limit process: deterministic motion dz/dt = bbar(z) inside
 * edges (time obtained by quadrature of dz / bbar on a refined mesh, with the
 * fitted log-asymptotics near interior vertices), instantaneous branching at
 * essential vertices, and exponential approach to exterior vertices or
 * interior drift roots, truncated at the asymptotic tolerance.
 */
inline LimitPath simulate_limit(const ReebGraph& g,
                                const std::vector<EdgeCoefficientTable>& tables,
                                const std::vector<VertexClassification>& cls, GraphPoint y0,
                                const LimitOptions& opt = {}, std::uint64_t seed = 0,
                                std::uint64_t traj_index = 0) {
    std::map<int, const EdgeCoefficientTable*> by_edge;
    for (const auto& t : tables) by_edge[t.edge] = &t;
    std::map<int, const VertexClassification*> by_vertex;
    for (const auto& c : cls) by_vertex[c.vertex] = &c;
    auto roots = drift_roots(g, tables);
    Rng rng(seed, "limit", traj_index);

    LimitPath out;
    double t = 0.0;
    GraphPoint y = y0;
    int guard = 0;
    while (t < opt.T) {
        if (++guard > 1000) throw CycleDetected("limit path did not settle");
        const EdgeCoefficientTable& tab = *by_edge.at(y.edge);
        const ReebEdge& e = g.edges[y.edge];
        TableView view(tab);
        double dzdt0 = view.bbar(y.z);
        if (dzdt0 == 0.0) throw StuckAtZero("zero drift at z=" + fmt_g17(y.z));
        int dir = dzdt0 > 0 ? +1 : -1;

        // Stop: nearest attracting root in direction, else the edge end.
        double stop_z = dir > 0 ? e.z_hi : e.z_lo;
        bool stop_is_root = false;
        for (const auto& r : roots) {
            if (r.edge != y.edge) continue;
            if (dir > 0 && r.z > y.z + 1e-14 && r.z < stop_z) {
                stop_z = r.z;
                stop_is_root = true;
            } else if (dir < 0 && r.z < y.z - 1e-14 && r.z > stop_z) {
                stop_z = r.z;
                stop_is_root = true;
            }
        }
        int stop_vertex = stop_is_root ? -1 : (dir > 0 ? e.upper : e.lower);
        if (!stop_is_root && stop_vertex < 0)
            throw AssumptionA8Violated("limit flow escapes through the open edge");
        bool stop_interior = !stop_is_root && g.vertices[stop_vertex].interior();
        bool stop_asymptotic = stop_is_root || !stop_interior;
        double cutoff = stop_asymptotic ? opt.asymptotic_tol : opt.vertex_hit_tol;

        // Mesh from y.z toward the stop, geometric near the stop.
        double span = std::fabs(stop_z - y.z);
        if (span <= cutoff) {
            // Already at the stop: handled below as an arrival.
            span = 0;
        }
        LimitSegment seg;
        seg.edge = y.edge;
        seg.t.push_back(t);
        seg.z.push_back(y.z);
        bool hit_T = false;
        if (span > 0) {
            std::vector<double> offs;  // distances from the stop, descending
            offs.push_back(span);
            double o = span;
            int n_lin = opt.mesh_per_segment / 2;
            for (int i = 1; i < n_lin; ++i) offs.push_back(span * (1.0 - static_cast<double>(i) / n_lin));
            while (o > cutoff) {
                o *= 0.85;
                offs.push_back(std::max(o, cutoff));
            }
            offs.push_back(cutoff);
            std::sort(offs.begin(), offs.end(), std::greater<double>());
            offs.erase(std::unique(offs.begin(), offs.end()), offs.end());
            double prev_z = y.z;
            double prev_inv = 1.0 / std::fabs(view.bbar(prev_z));
            for (std::size_t i = 1; i < offs.size() && !hit_T; ++i) {
                double zz = stop_z - dir * offs[i];
                double bb = std::fabs(view.bbar(zz));
                if (bb <= 0) throw StuckAtZero("drift vanished inside a segment");
                double inv = 1.0 / bb;
                double dt_step = 0.5 * (prev_inv + inv) * std::fabs(zz - prev_z);
                if (t + dt_step >= opt.T) {
                    // Linear interpolation of the final position in time.
                    double frac = (opt.T - t) / dt_step;
                    double zf = prev_z + frac * (zz - prev_z);
                    t = opt.T;
                    seg.t.push_back(t);
                    seg.z.push_back(zf);
                    y.z = zf;
                    hit_T = true;
                    break;
                }
                t += dt_step;
                prev_z = zz;
                prev_inv = inv;
                seg.t.push_back(t);
                seg.z.push_back(zz);
                if (out.time_to_band < 0 && std::fabs(zz - stop_z) <= opt.band_tol &&
                    stop_asymptotic)
                    out.time_to_band = t;
            }
            if (!hit_T) y.z = stop_z - dir * cutoff;
        }
        out.segments.push_back(std::move(seg));
        if (hit_T) break;

        if (stop_asymptotic) {
            out.converged = true;
            out.asymptotic = true;
            if (stop_is_root) {
                out.target_edge = y.edge;
                out.target_z = stop_z;
            } else {
                out.target_vertex = stop_vertex;
                out.target_z = stop_z;
            }
            break;
        }

        // Interior vertex: continue or branch without delay.
        const ReebVertex& vx = g.vertices[stop_vertex];
        auto itc = by_vertex.find(stop_vertex);
        if (itc == by_vertex.end())
            throw Error("simulate_limit: vertex " + fmt_int(stop_vertex) + " unclassified");
        const VertexClassification& c = *itc->second;
        if (c.exit.size() == 1) {
            y.edge = c.exit[0];
            y.z = vx.z;
        } else if (c.exit.size() == 2 && c.essential) {
            double u = rng.uniform();
            double accum = 0;
            int chosen = c.branch.back().first;
            for (const auto& [eid, p] : c.branch) {
                accum += p;
                if (u <= accum) {
                    chosen = eid;
                    break;
                }
            }
            out.branchings.push_back({stop_vertex, chosen, u});
            y.edge = chosen;
            y.z = vx.z;
        } else {
            throw AmbiguousSign("vertex " + fmt_int(stop_vertex) +
                                " has an unusable exit structure for the limit flow");
        }
        // Nudge off the vertex so the next segment starts inside the edge.
        const ReebEdge& ne = g.edges[y.edge];
        double nudge = 1e-12 * std::max(1.0, std::fabs(vx.z));
        y.z += (ne.lower == stop_vertex) ? nudge : -nudge;
    }
    out.final_time = t;
    out.final_z = y.z;
    out.final_edge = y.edge;
    return out;
}

/// Exact distribution over the stable set; the simulation-free counterpart of
/// simulate_limit.
using LimitDistribution = StableSet;

inline LimitDistribution limit_distribution(const ReebGraph& g,
                                            const std::vector<EdgeCoefficientTable>& tables,
                                            const std::vector<VertexClassification>& cls,
                                            GraphPoint y0) {
    return stable_set(g, tables, cls, y0);
}

struct ObservableResult {
    double value = 0.0;
    double se = 0.0;
};

/**
 * Long-time expectation of f under the limiting distribution: point masses at
 * exterior-vertex targets (evaluated at the critical point), level averages
 * with the 1/|grad H| density at interior stable roots (thin-shell Monte
 * Carlo).
 */
inline ObservableResult expected_observable(const ReebGraph& g, const LimitDistribution& dist,
                                            const std::function<double(const Vec&)>& f,
                                            long long mc_samples = 200000,
                                            double shell_halfwidth = 1e-3, std::uint64_t seed = 0,
                                            int threads = 0) {
    ObservableResult out;
    double var = 0.0;
    for (const auto& tg : dist.targets) {
        if (tg.is_vertex) {
            const ReebVertex& vx = g.vertices[tg.vertex];
            if (vx.critical < 0)
                throw Error("expected_observable: vertex " + fmt_int(tg.vertex) +
                            " has no critical point data");
            out.value += tg.probability * f(g.criticals[vx.critical].x);
        } else {
            auto m = shell_average(g, tg.edge, tg.z, shell_halfwidth, f, mc_samples, seed, threads);
            out.value += tg.probability * m.mean;
            var += tg.probability * tg.probability * m.se * m.se;
        }
    }
    out.se = std::sqrt(var);
    return out;
}

}  // namespace reebflow
