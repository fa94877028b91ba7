#pragma once

#include <algorithm>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"
#include "reebflow/morse.hpp"

namespace reebflow {

/// Point on the graph: an edge id plus a level, or a vertex when the level is
/// within vertex tolerance of a critical value (flagged, not an error).
struct GraphPoint {
    int edge = -1;
    int vertex = -1;
    double z = 0.0;

    bool at_vertex() const { return vertex >= 0; }
};

struct ReebVertex {
    int id = -1;
    double z = 0.0;
    int critical = -1;  // index into ReebGraph::criticals, -1 for synthetic graphs
    std::vector<int> edges_above;  // edges extending to larger H
    std::vector<int> edges_below;

    int order() const { return static_cast<int>(edges_above.size() + edges_below.size()); }

    std::string type_string() const {
        return fmt_int(static_cast<long long>(edges_above.size())) + "/" +
               fmt_int(static_cast<long long>(edges_below.size()));
    }
    bool is_min() const { return edges_above.size() == 1 && edges_below.empty(); }
    bool is_max() const { return edges_above.empty() && edges_below.size() == 1; }
    bool is_pass() const { return edges_above.size() == 1 && edges_below.size() == 1; }
    bool is_fork() const { return edges_above.size() == 1 && edges_below.size() == 2; }
    bool is_join() const { return edges_above.size() == 2 && edges_below.size() == 1; }
    bool interior() const { return order() >= 2; }
};

struct ReebEdge {
    int id = -1;
    int lower = -1;        // vertex id at z_lo (-1 only for synthetic stubs)
    int upper = -1;        // vertex id at z_hi; -1 for the open edge
    double z_lo = 0.0, z_hi = 0.0;
    bool open = false;

    // Rooted-tree data (root = open edge), filled by finalize().
    int parent = -1;
    bool parent_via_upper = true;
    int tin = 0, tout = 0;

    /// +1 when the compact side of a level component on this edge is the
    /// sublevel side (grad H points out of it), -1 for superlevel pockets
    /// around maxima.
    int orientation() const { return parent_via_upper ? +1 : -1; }

    double length() const { return z_hi - z_lo; }
    bool contains_z(double z) const { return z >= z_lo && z <= z_hi; }
};

class ReebGraph;

/// Spatial component lookup underlying Y(x); built by the grid and separable
/// constructors, absent on fixture graphs loaded from JSON.
class ProjectionIndex {
public:
    virtual ~ProjectionIndex() = default;
    /// Edge containing the level-set component of x at level z, or -1.
    virtual int edge_at(const Vec& x, double z) const = 0;
};

struct ValidationReport {
    bool is_tree = false;
    bool one_open_edge = false;
    bool orders_ok = false;        // every vertex has order 1, 2 or 3 with a legal type
    bool vertex_index_ok = true;   // Hessian index consistent with the vertex type
    int n_min = 0, n_max = 0, n_pass = 0, n_fork = 0, n_join = 0;
    bool fork_count_ok = false;    // #(1/2) == #(1/0) - 1
    bool join_count_ok = false;    // #(2/1) == #(0/1)
    bool a2_component_ok = true;   // each critical level component held <= 1 critical point
    std::vector<std::string> notes;

    bool all_ok() const {
        return is_tree && one_open_edge && orders_ok && vertex_index_ok && fork_count_ok &&
               join_count_ok && a2_component_ok;
    }
};

/**
 * The Reeb graph of a confined Morse field: a tree of typed vertices with
 * z-parameterized edges and one open edge running to the ceiling. Immutable
 * after finalize(); all queries are const and thread-safe.
 */
class ReebGraph {
public:
    std::vector<ReebVertex> vertices;
    std::vector<ReebEdge> edges;
    std::vector<CriticalPoint> criticals;
    double z_ceiling = 0.0;
    std::shared_ptr<const ScalarField> field;     // null for synthetic graphs
    std::shared_ptr<const ProjectionIndex> index;  // null for synthetic graphs
    std::vector<std::string> construction_notes;
    bool a2_component_ok = true;
    double vertex_tol = 1e-6;

    int open_edge = -1;

    /// Wires adjacency-derived data: open edge, rooting, Euler intervals.
    /// Throws NotATree when the edge set is not a tree with one open edge.
    void finalize() {
        open_edge = -1;
        for (const auto& e : edges) {
            if (e.open) {
                if (open_edge >= 0) throw NotATree("more than one open edge");
                open_edge = e.id;
            }
        }
        if (open_edge < 0) throw NotATree("no open edge");
        std::size_t closed = edges.size() - 1;
        if (closed != (vertices.empty() ? 0 : vertices.size() - 1))
            throw NotATree("edge count " + fmt_int(static_cast<long long>(closed)) +
                           " != vertex count - 1");

        // Root at the open edge; BFS across vertices.
        for (auto& e : edges) {
            e.parent = -1;
            e.parent_via_upper = true;
        }
        std::vector<char> seen_edge(edges.size(), 0), seen_vertex(vertices.size(), 0);
        std::deque<int> queue{open_edge};
        seen_edge[open_edge] = 1;
        int reached = 1;
        while (!queue.empty()) {
            int eid = queue.front();
            queue.pop_front();
            const ReebEdge& e = edges[eid];
            for (int v : {e.lower, e.upper}) {
                if (v < 0 || seen_vertex[v]) continue;
                seen_vertex[v] = 1;
                const ReebVertex& vx = vertices[v];
                auto visit = [&](int f) {
                    if (f == eid) return;
                    if (seen_edge[f]) throw NotATree("cycle through vertex " + fmt_int(v));
                    seen_edge[f] = 1;
                    ++reached;
                    edges[f].parent = eid;
                    edges[f].parent_via_upper = (edges[f].upper == v);
                    queue.push_back(f);
                };
                for (int f : vx.edges_above) visit(f);
                for (int f : vx.edges_below) visit(f);
            }
        }
        if (reached != static_cast<int>(edges.size()))
            throw NotATree("graph is disconnected");

        // Euler intervals over the edge tree (iterative DFS, children in id order).
        std::vector<std::vector<int>> children(edges.size());
        for (const auto& e : edges)
            if (e.parent >= 0) children[e.parent].push_back(e.id);
        int clock = 0;
        std::vector<std::pair<int, std::size_t>> stack{{open_edge, 0}};
        edges[open_edge].tin = clock++;
        while (!stack.empty()) {
            auto& [eid, ci] = stack.back();
            if (ci < children[eid].size()) {
                int c = children[eid][ci++];
                edges[c].tin = clock++;
                stack.push_back({c, 0});
            } else {
                edges[eid].tout = clock++;
                stack.pop_back();
            }
        }
    }

    /// True when edge `other` lies strictly inside the enclosed (non-root)
    /// side of any point of edge `e`.
    bool strictly_enclosed(int e, int other) const {
        if (e == other) return false;
        return edges[e].tin < edges[other].tin && edges[other].tout < edges[e].tout;
    }

    /// Membership of a projected sample (se, sz) in the compact domain bounded
    /// by the level component at (z, e).
    bool in_enclosed_domain(int e, double z, int se, double sz) const {
        if (se == e)
            return edges[e].orientation() > 0 ? (sz < z) : (sz > z);
        return strictly_enclosed(e, se);
    }

    /// Projection Y(x). z is recomputed from the field; the containing edge
    /// comes from the spatial index. Within vertex_tol of an endpoint value
    /// the result is pinned to that vertex and flagged via GraphPoint::vertex.
    GraphPoint project(const Vec& x) const {
        if (!field || !index) throw Error("project: graph has no spatial index");
        double z = field->value(x);
        int e = index->edge_at(x, z);
        GraphPoint gp;
        gp.z = z;
        gp.edge = e;
        if (e >= 0) {
            const ReebEdge& ed = edges[e];
            if (ed.lower >= 0 && std::fabs(z - vertices[ed.lower].z) < vertex_tol)
                gp.vertex = ed.lower;
            else if (ed.upper >= 0 && std::fabs(z - vertices[ed.upper].z) < vertex_tol)
                gp.vertex = ed.upper;
        }
        return gp;
    }

    const ReebVertex& vertex_of(int id) const { return vertices[id]; }

    int edge_between(int vlo, int vhi) const {
        for (const auto& e : edges)
            if (e.lower == vlo && e.upper == vhi) return e.id;
        return -1;
    }

    /// Vertex at the far end of edge e seen from vertex v (-1 past the open end).
    int far_vertex(int e, int v) const {
        const ReebEdge& ed = edges[e];
        return ed.lower == v ? ed.upper : ed.lower;
    }

    ValidationReport validate() const {
        ValidationReport r;
        r.one_open_edge = open_edge >= 0;
        r.is_tree = true;  // finalize() would have thrown otherwise
        r.orders_ok = true;
        r.a2_component_ok = a2_component_ok;
        for (const auto& v : vertices) {
            if (v.is_min()) ++r.n_min;
            else if (v.is_max()) ++r.n_max;
            else if (v.is_pass()) ++r.n_pass;
            else if (v.is_fork()) ++r.n_fork;
            else if (v.is_join()) ++r.n_join;
            else {
                r.orders_ok = false;
                r.notes.push_back("vertex " + fmt_int(v.id) + " has illegal type " + v.type_string());
            }
            if (v.critical >= 0 && field) {
                int k = criticals[v.critical].index;
                int d = field->dim();
                bool ok = (k == 0 && v.is_min()) || (k == d && v.is_max()) ||
                          (k > 0 && k < d && !v.is_min() && !v.is_max());
                if (ok && k > 1 && k < d - 1 && !v.is_pass()) ok = false;
                if (!ok) {
                    r.vertex_index_ok = false;
                    r.notes.push_back("vertex " + fmt_int(v.id) + " type " + v.type_string() +
                                      " inconsistent with Hessian index " + fmt_int(k));
                }
            }
        }
        r.fork_count_ok = (r.n_fork == r.n_min - 1);
        r.join_count_ok = (r.n_join == r.n_max);
        for (const auto& n : construction_notes) r.notes.push_back(n);
        return r;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["z_ceiling"] = z_ceiling;
        j["vertices"] = nlohmann::json::array();
        for (const auto& v : vertices) {
            nlohmann::json jv{{"id", v.id}, {"z", v.z}, {"type", v.type_string()},
                              {"order", v.order()}};
            if (v.critical >= 0) {
                const auto& c = criticals[v.critical];
                jv["critical"] = {{"x", std::vector<double>(c.x.data(), c.x.data() + c.x.size())},
                                  {"index", c.index}};
            }
            j["vertices"].push_back(jv);
        }
        j["edges"] = nlohmann::json::array();
        for (const auto& e : edges) {
            nlohmann::json je{{"id", e.id}, {"z_lo", e.z_lo}, {"z_hi", e.z_hi}, {"open", e.open}};
            je["lower"] = e.lower >= 0 ? nlohmann::json(e.lower) : nlohmann::json();
            je["upper"] = e.upper >= 0 ? nlohmann::json(e.upper) : nlohmann::json();
            j["edges"].push_back(je);
        }
        return j;
    }

    /// Topology-only reconstruction; no field or spatial index.
    static ReebGraph from_json(const nlohmann::json& j) {
        ReebGraph g;
        g.z_ceiling = j.at("z_ceiling").get<double>();
        for (const auto& jv : j.at("vertices")) {
            ReebVertex v;
            v.id = jv.at("id").get<int>();
            v.z = jv.at("z").get<double>();
            if (static_cast<int>(g.vertices.size()) <= v.id) g.vertices.resize(v.id + 1);
            g.vertices[v.id] = v;
        }
        for (const auto& je : j.at("edges")) {
            ReebEdge e;
            e.id = je.at("id").get<int>();
            e.z_lo = je.at("z_lo").get<double>();
            e.z_hi = je.at("z_hi").get<double>();
            e.open = je.at("open").get<bool>();
            e.lower = je.at("lower").is_null() ? -1 : je.at("lower").get<int>();
            e.upper = je.at("upper").is_null() ? -1 : je.at("upper").get<int>();
            if (static_cast<int>(g.edges.size()) <= e.id) g.edges.resize(e.id + 1);
            g.edges[e.id] = e;
        }
        g.rebuild_adjacency();
        g.finalize();
        return g;
    }

    void rebuild_adjacency() {
        for (auto& v : vertices) {
            v.edges_above.clear();
            v.edges_below.clear();
        }
        for (const auto& e : edges) {
            if (e.lower >= 0) vertices[e.lower].edges_above.push_back(e.id);
            if (e.upper >= 0) vertices[e.upper].edges_below.push_back(e.id);
        }
    }
};

}  // namespace reebflow
