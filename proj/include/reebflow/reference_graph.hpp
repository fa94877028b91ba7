#pragma once

#include <functional>
#include <map>
#include <vector>

#include "reebflow/coeffs.hpp"
#include "reebflow/reeb.hpp"

namespace reebflow {

/**
 * Hand-built benchmark tree with all five vertex types: six minima, one
 * maximum inside a crater, five forks, one join and two order-2 passes
 * (15 vertices, 14 closed edges plus the open edge). Used as a fixture for
 * validation, classification and stable-set tests on a topology richer than
 * the analytic catalog provides.
 */
struct ReferenceTree {
    ReebGraph graph;
    // vertices
    int top_fork, upper_fork, left_pass, deep_fork, min_deep_a, min_deep_b;
    int crater_join, crater_max, right_pass, mid_fork, min_mid_a, min_mid_b;
    int low_fork, min_low_a, min_low_b;
    // selected edges
    int open_edge, start_edge;          // start_edge: top_fork -> upper_fork
    int mid_branch_edge;                // upper_fork -> mid_fork
    int left_branch_edge;               // upper_fork -> left_pass
    int edge_to_min_mid_a;              // mid_fork -> min_mid_a
};

inline ReferenceTree make_reference_tree() {
    ReferenceTree r;
    ReebGraph& g = r.graph;
    g.z_ceiling = 12.0;
    auto add_vertex = [&](double z) {
        ReebVertex v;
        v.id = static_cast<int>(g.vertices.size());
        v.z = z;
        g.vertices.push_back(v);
        return v.id;
    };
    auto add_edge = [&](int lower, int upper, double z_hi_if_open = 0.0) {
        ReebEdge e;
        e.id = static_cast<int>(g.edges.size());
        e.lower = lower;
        e.upper = upper;
        e.z_lo = g.vertices[lower].z;
        if (upper >= 0) {
            e.z_hi = g.vertices[upper].z;
        } else {
            e.z_hi = z_hi_if_open;
            e.open = true;
        }
        g.edges.push_back(e);
        return e.id;
    };

    r.top_fork = add_vertex(10.0);
    r.upper_fork = add_vertex(8.0);
    r.left_pass = add_vertex(6.0);
    r.deep_fork = add_vertex(5.0);
    r.min_deep_a = add_vertex(1.0);
    r.min_deep_b = add_vertex(1.5);
    r.crater_join = add_vertex(7.0);
    r.crater_max = add_vertex(9.0);
    r.right_pass = add_vertex(3.0);
    r.mid_fork = add_vertex(4.0);
    r.min_mid_a = add_vertex(0.5);
    r.min_mid_b = add_vertex(0.8);
    r.low_fork = add_vertex(2.0);
    r.min_low_a = add_vertex(0.3);
    r.min_low_b = add_vertex(0.6);

    r.open_edge = add_edge(r.top_fork, -1, g.z_ceiling);
    r.start_edge = add_edge(r.upper_fork, r.top_fork);
    int e_crater_up = add_edge(r.crater_join, r.top_fork);
    r.left_branch_edge = add_edge(r.left_pass, r.upper_fork);
    r.mid_branch_edge = add_edge(r.mid_fork, r.upper_fork);
    int e_pass_down = add_edge(r.deep_fork, r.left_pass);
    add_edge(r.min_deep_a, r.deep_fork);
    add_edge(r.min_deep_b, r.deep_fork);
    add_edge(r.crater_join, r.crater_max);  // dome: lower end at the join
    int e_right_down = add_edge(r.right_pass, r.crater_join);
    r.edge_to_min_mid_a = add_edge(r.min_mid_a, r.mid_fork);
    add_edge(r.min_mid_b, r.mid_fork);
    int e_low = add_edge(r.low_fork, r.right_pass);
    add_edge(r.min_low_a, r.low_fork);
    add_edge(r.min_low_b, r.low_fork);
    (void)e_crater_up;
    (void)e_pass_down;
    (void)e_right_down;
    (void)e_low;

    g.rebuild_adjacency();
    g.finalize();
    return r;
}

/**
 * Analytic tables for the reference tree mimicking a uniformly contracting
 * drift div b = -lambda: enclosed volumes grow linearly along each edge and
 * add up across vertices, bhat = -lambda V, and h is a positive additive
 * profile so gluing weights are consistent. Monte Carlo errors are zero.
 */
inline std::vector<EdgeCoefficientTable> make_reference_tables(const ReebGraph& g,
                                                               double lambda = 0.5,
                                                               int rows_per_edge = 120) {
    // Per-edge volume rate; deterministic spread of values.
    auto rate = [](int eid) { return 0.35 + 0.06 * (eid % 7); };

    // Enclosed volume and leaf count at the inner (away-from-root) end of
    // each edge, accumulated from the rooted structure.
    std::vector<double> v_inner(g.edges.size(), 0.0);
    std::vector<int> leaves(g.edges.size(), 0);
    std::vector<char> done(g.edges.size(), 0);
    std::function<void(int)> eval = [&](int eid) {
        if (done[eid]) return;
        done[eid] = 1;
        const ReebEdge& e = g.edges[eid];
        int inner_vertex = e.orientation() > 0 ? e.lower : e.upper;
        double acc = 0.0;
        int lf = 0;
        const ReebVertex& vx = g.vertices[inner_vertex];
        std::vector<int> kids;
        for (int c : vx.edges_above)
            if (c != eid) kids.push_back(c);
        for (int c : vx.edges_below)
            if (c != eid) kids.push_back(c);
        if (kids.empty()) lf = 1;  // extremum
        for (int c : kids) {
            eval(c);
            const ReebEdge& ce = g.edges[c];
            double len = ce.length();
            acc += v_inner[c] + rate(c) * len;  // child volume at the shared vertex
            lf += leaves[c];
        }
        v_inner[eid] = acc;
        leaves[eid] = lf;
    };
    for (const auto& e : g.edges) eval(e.id);

    std::vector<EdgeCoefficientTable> tables;
    for (const auto& e : g.edges) {
        EdgeCoefficientTable t;
        t.edge = e.id;
        t.orientation = e.orientation();
        t.z_lo = e.z_lo;
        t.z_hi = e.z_hi;
        double inner_z = e.orientation() > 0 ? e.z_lo : e.z_hi;
        TabulateOptions gopt;
        gopt.z_points_interior = rows_per_edge;
        gopt.refine_levels = 14;
        auto grid = coefdetail::edge_grid(e, gopt);
        for (double z : grid) {
            EdgeTableRow r;
            r.z = z;
            double fill = std::fabs(z - inner_z);
            r.V = v_inner[e.id] + rate(e.id) * fill;
            r.v = t.orientation * rate(e.id);
            r.h = t.orientation * (0.3 * leaves[e.id] + 0.25 * r.V);
            r.bhat = -lambda * r.V;
            r.betahat = 0.0;
            r.a2bar = r.h / r.v;
            r.bbar = r.bhat / r.v;
            r.betabar = 0.0;
            t.rows.push_back(r);
        }
        fit_table_ends(t, g, 2);
        tables.push_back(std::move(t));
    }
    return tables;
}

}  // namespace reebflow
