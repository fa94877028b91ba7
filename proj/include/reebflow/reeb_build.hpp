#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/parallel.hpp"
#include "reebflow/reeb.hpp"

namespace reebflow {

struct ReebBuildOptions {
    int resolution = 256;        // grid vertices per axis
    double band_rel = 1e-9;      // guard band around critical levels, relative
    // Lattice vertices within this Chebyshev radius of a critical point are
    // excluded from component tracking. Slab components of distinct cones can
    // only touch through a critical point, so the excision removes exactly the
    // spurious pinch bridges; legitimate components connect around it.
    int excision_radius = 3;
    double vertex_tol = 1e-6;
    int threads = 0;
};

namespace griddetail {

struct Lattice {
    Box box;
    std::vector<int> dims;
    std::vector<long long> strides;
    long long count = 0;

    void init(const Box& b, int res) {
        box = b;
        dims.assign(b.dim(), res);
        strides.resize(b.dim());
        count = 1;
        for (int k = 0; k < b.dim(); ++k) {
            strides[k] = count;
            count *= dims[k];
        }
    }
    int dim() const { return static_cast<int>(dims.size()); }
    double step(int k) const { return (box.hi[k] - box.lo[k]) / (dims[k] - 1); }

    void coords(long long v, int* c) const {
        for (int k = 0; k < dim(); ++k) c[k] = static_cast<int>((v / strides[k]) % dims[k]);
    }
    void point(const int* c, Vec& x) const {
        x.resize(dim());
        for (int k = 0; k < dim(); ++k) x[k] = box.lo[k] + c[k] * step(k);
    }
    long long index(const int* c) const {
        long long v = 0;
        for (int k = 0; k < dim(); ++k) v += static_cast<long long>(c[k]) * strides[k];
        return v;
    }
    bool in_range(const int* c) const {
        for (int k = 0; k < dim(); ++k)
            if (c[k] < 0 || c[k] >= dims[k]) return false;
        return true;
    }
    int nearest(const Vec& x, int* c) const {
        for (int k = 0; k < dim(); ++k) {
            int i = static_cast<int>(std::lround((x[k] - box.lo[k]) / step(k)));
            c[k] = std::clamp(i, 0, dims[k] - 1);
        }
        return 0;
    }
};

/// Nonzero {0,1}^d offsets: the 1-skeleton of the Kuhn triangulation, which
/// gives consistent sub/superlevel connectivity on the lattice.
inline std::vector<std::vector<int>> kuhn_offsets(int d) {
    std::vector<std::vector<int>> out;
    for (int mask = 1; mask < (1 << d); ++mask) {
        std::vector<int> o(d, 0);
        for (int k = 0; k < d; ++k)
            if (mask & (1 << k)) o[k] = 1;
        out.push_back(std::move(o));
    }
    return out;
}

struct UnionFind {
    std::vector<std::int32_t> parent;
    void init(long long n) {
        parent.resize(n);
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::int32_t find(std::int32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;  // smallest-index root keeps ids deterministic
        else parent[a] = b;
    }
};

/// Distinct critical levels below the ceiling, with the criticals grouped.
struct LevelTable {
    std::vector<double> levels;                 // ascending
    std::vector<std::vector<int>> criticals;    // critical indices per level
    double ceiling = 0.0;

    void init(const std::vector<CriticalPoint>& crit, double z_ceiling, double tol) {
        ceiling = z_ceiling;
        for (int i = 0; i < static_cast<int>(crit.size()); ++i) {
            if (crit[i].z >= z_ceiling)
                throw Error("critical value " + fmt_g17(crit[i].z) + " above the ceiling " +
                            fmt_g17(z_ceiling) + "; enlarge the ceiling");
            if (!levels.empty() && crit[i].z - levels.back() < tol) {
                criticals.back().push_back(i);
            } else {
                levels.push_back(crit[i].z);
                criticals.push_back({i});
            }
        }
    }
    int count() const { return static_cast<int>(levels.size()); }

    /// Slab index for value h: slab k spans (levels[k-1], levels[k]) with
    /// slab `count()` running to the ceiling; -1 above ceiling, -2 in a guard
    /// band around a level.
    int slab_of(double h, double band) const {
        if (h >= ceiling - band) return -1;
        int k = static_cast<int>(std::upper_bound(levels.begin(), levels.end(), h) - levels.begin());
        if (k < count() && levels[k] - h < band) return -2;
        if (k > 0 && h - levels[k - 1] < band) return k;  // snap upward onto the slab above
        return k;
    }
};

}  // namespace griddetail

// ---------------------------------------------------------------------------
// Grid (level-set component) construction.

namespace griddetail {

class GridIndex final : public ProjectionIndex {
public:
    Lattice lattice;
    std::vector<std::int32_t> edge_label;  // per grid vertex, -1 when unlabeled
    std::vector<std::pair<double, double>> edge_range;  // z-span per edge id
    std::vector<std::vector<int>> scan_offsets;  // neighborhood, sorted by distance

    int edge_at(const Vec& x, double z) const override {
        thread_local std::vector<int> c, n;
        c.resize(lattice.dim());
        n.resize(lattice.dim());
        lattice.nearest(x, c.data());
        for (const auto& off : scan_offsets) {
            for (int k = 0; k < lattice.dim(); ++k) n[k] = c[k] + off[k];
            if (!lattice.in_range(n.data())) continue;
            std::int32_t lab = edge_label[lattice.index(n.data())];
            if (lab < 0) continue;
            const auto& r = edge_range[lab];
            if (z >= r.first - 1e-12 && z <= r.second + 1e-12) return lab;
        }
        return -1;
    }
};

/// Marks lattice vertices near critical points as excluded (slab -3). Uses
/// the q-part of each critical location when the lattice is lower-dimensional.
inline void excise_critical_balls(const Lattice& lat, const std::vector<CriticalPoint>& criticals,
                                  int radius, std::vector<std::int32_t>& slab) {
    const int d = lat.dim();
    std::vector<int> c(d), n(d);
    for (const auto& cp : criticals) {
        Vec loc = cp.x.size() == d ? cp.x : Vec(cp.x.tail(d));
        lat.nearest(loc, c.data());
        std::vector<int> cur(d, -radius);
        for (;;) {
            bool ok = true;
            for (int k = 0; k < d; ++k) {
                n[k] = c[k] + cur[k];
                if (n[k] < 0 || n[k] >= lat.dims[k]) { ok = false; break; }
            }
            if (ok) slab[lat.index(n.data())] = -3;
            int k = 0;
            while (k < d && ++cur[k] > radius) cur[k++] = -radius;
            if (k == d) break;
        }
    }
}

inline std::vector<std::vector<int>> make_scan_offsets(int d, int radius) {
    std::vector<std::vector<int>> offs;
    std::vector<int> c(d, -radius);
    for (;;) {
        offs.push_back(c);
        int k = 0;
        while (k < d && ++c[k] > radius) c[k++] = -radius;
        if (k == d) break;
    }
    std::sort(offs.begin(), offs.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
        long long na = 0, nb = 0;
        for (int v : a) na += static_cast<long long>(v) * v;
        for (int v : b) nb += static_cast<long long>(v) * v;
        if (na != nb) return na < nb;
        return a < b;
    });
    return offs;
}

}  // namespace griddetail

/**
 * Builds the Reeb graph by a level-component sweep on a lattice: vertices of
 * the lattice are bucketed into slabs between consecutive critical values,
 * slab components are found by union-find over the Kuhn 1-skeleton, and the
 * bipartite matching of components across each critical level yields the
 * vertices (all five types) and the edge chains.
 *
 * Complexity is near-linear in the lattice size; suitable for d in {2,3,4}.
 */
inline ReebGraph build_reeb_grid(std::shared_ptr<const ScalarField> field,
                                 const std::vector<CriticalPoint>& criticals,
                                 const ReebBuildOptions& opt = {}) {
    using namespace griddetail;
    const int d = field->dim();
    if (d < 2 || d > 4) throw Error("build_reeb_grid: dimension " + fmt_int(d) + " unsupported");
    if (opt.resolution < 16) throw Error("build_reeb_grid: resolution too coarse");
    if (criticals.empty()) throw Error("build_reeb_grid: no critical points supplied");

    auto index = std::make_shared<GridIndex>();
    Lattice& lat = index->lattice;
    lat.init(field->box(), opt.resolution);

    // Field samples (parallel, deterministic by index).
    std::vector<double> h(lat.count);
    parallel_for(lat.count, opt.threads, [&](long long v) {
        thread_local std::vector<int> c;
        c.resize(d);
        lat.coords(v, c.data());
        Vec x(d);
        lat.point(c.data(), x);
        h[v] = field->value(x);
    });

    LevelTable levels;
    levels.init(criticals, field->z_ceiling(), 1e-12);
    double band = opt.band_rel;
    for (double z : levels.levels) band = std::max(band, opt.band_rel * std::fabs(z));

    std::vector<std::int32_t> slab(lat.count);
    for (long long v = 0; v < lat.count; ++v)
        slab[v] = static_cast<std::int32_t>(levels.slab_of(h[v], band));
    excise_critical_balls(lat, criticals, opt.excision_radius, slab);

    // Same-slab unions over the Kuhn skeleton; collect cross-level adjacency.
    UnionFind uf;
    uf.init(lat.count);
    auto offsets = kuhn_offsets(d);
    std::vector<std::pair<long long, long long>> cross;  // (below vertex, above vertex)
    {
        std::vector<int> c(d), n(d);
        for (long long v = 0; v < lat.count; ++v) {
            if (slab[v] < 0) continue;
            lat.coords(v, c.data());
            for (const auto& off : offsets) {
                bool ok = true;
                for (int k = 0; k < d; ++k) {
                    n[k] = c[k] + off[k];
                    if (n[k] >= lat.dims[k]) { ok = false; break; }
                }
                if (!ok) continue;
                long long u = lat.index(n.data());
                if (slab[u] < 0) continue;
                if (slab[u] == slab[v]) uf.unite(static_cast<std::int32_t>(v),
                                                 static_cast<std::int32_t>(u));
                else if (slab[u] == slab[v] + 1) cross.emplace_back(v, u);
                else if (slab[v] == slab[u] + 1) cross.emplace_back(u, v);
            }
        }
    }

    // Dense component ids keyed by (slab, root).
    std::map<std::int32_t, std::int32_t> comp_id;  // root -> dense id
    std::vector<std::int32_t> comp_slab;
    std::vector<long long> comp_seed;
    for (long long v = 0; v < lat.count; ++v) {
        if (slab[v] < 0) continue;
        std::int32_t r = uf.find(static_cast<std::int32_t>(v));
        if (comp_id.emplace(r, static_cast<std::int32_t>(comp_slab.size())).second) {
            comp_slab.push_back(slab[v]);
            comp_seed.push_back(v);
        }
    }
    auto comp_of = [&](long long v) { return comp_id.at(uf.find(static_cast<std::int32_t>(v))); };

    // Cross-level component links per level.
    // A pair (below in slab k, above in slab k+1) is an adjacency across the
    // critical level with index k (slab k spans (levels[k-1], levels[k])).
    std::vector<std::set<std::pair<std::int32_t, std::int32_t>>> links(levels.count());
    for (auto [below, above] : cross)
        links[slab[above] - 1].insert({comp_of(below), comp_of(above)});

    // Criticals -> nearby components (below and above their level).
    struct CriticalSite {
        int critical;
        std::vector<std::int32_t> below, above;
    };
    std::vector<std::vector<CriticalSite>> sites(levels.count());
    {
        std::vector<int> c(d), n(d);
        for (int lv = 0; lv < levels.count(); ++lv) {
            for (int ci : levels.criticals[lv]) {
                CriticalSite site;
                site.critical = ci;
                std::set<std::int32_t> below, above;
                const int r0 = opt.excision_radius + 1;
                for (int radius = r0; radius <= r0 + 6; radius += 2) {
                    lat.nearest(criticals[ci].x, c.data());
                    std::vector<int> cur(d, -radius);
                    for (;;) {
                        bool ok = true;
                        for (int k = 0; k < d; ++k) {
                            n[k] = c[k] + cur[k];
                            if (n[k] < 0 || n[k] >= lat.dims[k]) { ok = false; break; }
                        }
                        if (ok) {
                            long long u = lat.index(n.data());
                            if (slab[u] == lv) below.insert(comp_of(u));       // slab lv ends at level lv
                            else if (slab[u] == lv + 1) above.insert(comp_of(u));
                        }
                        int k = 0;
                        while (k < d && ++cur[k] > radius) cur[k++] = -radius;
                        if (k == d) break;
                    }
                    if (!below.empty() || !above.empty()) break;
                }
                if (below.empty() && above.empty())
                    throw VertexCountMismatch("no lattice support near critical at z=" +
                                              fmt_g17(criticals[ci].z) + "; refine the grid");
                site.below.assign(below.begin(), below.end());
                site.above.assign(above.begin(), above.end());
                sites[lv].push_back(std::move(site));
            }
        }
    }

    // Assemble the graph level by level.
    ReebGraph g;
    g.field = field;
    g.criticals = criticals;
    g.z_ceiling = field->z_ceiling();
    g.vertex_tol = opt.vertex_tol;

    struct Chain {
        int edge = -1;  // assigned at creation
        int lower_vertex = -1;
        double z_lo = 0.0;
    };
    std::vector<std::int32_t> comp_chain(comp_slab.size(), -1);  // comp -> edge id

    auto new_edge = [&](double z_lo, int lower_vertex) {
        ReebEdge e;
        e.id = static_cast<int>(g.edges.size());
        e.z_lo = z_lo;
        e.lower = lower_vertex;
        g.edges.push_back(e);
        return e.id;
    };

    // Slab-0 components would sit below the global minimum: grid artifacts.
    for (std::size_t ci = 0; ci < comp_slab.size(); ++ci)
        if (comp_slab[ci] == 0)
            throw VertexCountMismatch("component below the lowest critical value");

    for (int lv = 0; lv < levels.count(); ++lv) {
        // Cluster below/above components and critical sites at this level.
        std::map<std::int32_t, int> node;  // comp -> cluster node index
        std::vector<std::int32_t> node_comp;
        auto node_of = [&](std::int32_t comp) {
            auto it = node.find(comp);
            if (it != node.end()) return it->second;
            int id = static_cast<int>(node_comp.size());
            node.emplace(comp, id);
            node_comp.push_back(comp);
            return id;
        };
        std::vector<std::pair<int, int>> bonds;
        for (auto [b, a] : links[lv])
            bonds.emplace_back(node_of(b), node_of(a));
        std::vector<std::vector<int>> site_nodes;
        for (const auto& s : sites[lv]) {
            std::vector<int> ns;
            for (auto cb : s.below) ns.push_back(node_of(cb));
            for (auto ca : s.above) ns.push_back(node_of(ca));
            for (std::size_t i = 1; i < ns.size(); ++i) bonds.emplace_back(ns[0], ns[i]);
            site_nodes.push_back(std::move(ns));
        }
        UnionFind cl;
        cl.init(static_cast<long long>(node_comp.size()));
        for (auto [a, b] : bonds) cl.unite(a, b);

        // Map cluster roots to the criticals they contain.
        std::map<std::int32_t, std::vector<int>> cluster_sites;  // root -> site idx
        for (std::size_t si = 0; si < sites[lv].size(); ++si)
            cluster_sites[cl.find(site_nodes[si][0])].push_back(static_cast<int>(si));

        std::map<std::int32_t, std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>>>
            cluster_members;  // root -> (below comps, above comps)
        for (std::size_t ni = 0; ni < node_comp.size(); ++ni) {
            auto root = cl.find(static_cast<std::int32_t>(ni));
            auto& m = cluster_members[root];
            if (comp_slab[node_comp[ni]] == lv) m.first.push_back(node_comp[ni]);
            else m.second.push_back(node_comp[ni]);
        }

        for (auto& [root, members] : cluster_members) {
            auto& [below, above] = members;
            std::sort(below.begin(), below.end());
            std::sort(above.begin(), above.end());
            auto sit = cluster_sites.find(root);
            if (sit == cluster_sites.end()) {
                // No critical here: must be a plain 1-1 continuation.
                if (below.size() != 1 || above.size() != 1)
                    throw VertexCountMismatch(
                        "component event without a critical point at level z=" +
                        fmt_g17(levels.levels[lv]) + "; refine the grid");
                comp_chain[above[0]] = comp_chain[below[0]];
                continue;
            }
            const auto& site_list = sit->second;
            if (site_list.size() > 1) {
                g.a2_component_ok = false;
                std::string note = "level z=" + fmt_g17(levels.levels[lv]) +
                                   " component holds " +
                                   fmt_int(static_cast<long long>(site_list.size())) +
                                   " critical points";
                g.construction_notes.push_back(note);
            }
            int crit = sites[lv][site_list[0]].critical;
            ReebVertex vx;
            vx.id = static_cast<int>(g.vertices.size());
            vx.z = levels.levels[lv];
            vx.critical = crit;
            for (auto cb : below) {
                int e = comp_chain[cb];
                if (e < 0) throw VertexCountMismatch("unborn component reached level z=" +
                                                     fmt_g17(levels.levels[lv]));
                g.edges[e].z_hi = vx.z;
                g.edges[e].upper = vx.id;
                vx.edges_below.push_back(e);
            }
            for (auto ca : above) {
                int e = new_edge(vx.z, vx.id);
                comp_chain[ca] = e;
                vx.edges_above.push_back(e);
            }
            g.vertices.push_back(std::move(vx));
        }
    }

    // Top slab: exactly one component, the open edge.
    int n_open = 0;
    for (std::size_t ci = 0; ci < comp_slab.size(); ++ci) {
        if (comp_slab[ci] == levels.count()) {
            ++n_open;
            int e = comp_chain[ci];
            if (e < 0)
                throw VertexCountMismatch("ceiling component not connected to any vertex");
            g.edges[e].z_hi = g.z_ceiling;
            g.edges[e].open = true;
        }
    }
    if (n_open != 1)
        throw NotATree(fmt_int(n_open) + " components at the ceiling; box or ceiling too small");

    if (g.vertices.size() != criticals.size()) {
        if (g.a2_component_ok)
            throw VertexCountMismatch("built " + fmt_int(static_cast<long long>(g.vertices.size())) +
                                      " vertices for " + fmt_int(static_cast<long long>(criticals.size())) +
                                      " critical points");
        // Coincident-value violation already flagged; proceed with the coarser graph.
    }

    // Every surviving component must have been attached to a chain.
    for (std::size_t ci = 0; ci < comp_slab.size(); ++ci)
        if (comp_chain[ci] < 0)
            throw VertexCountMismatch("stray component in slab " + fmt_int(comp_slab[ci]));

    // Per-lattice-vertex edge labels for projection queries.
    index->edge_label.assign(lat.count, -1);
    for (long long v = 0; v < lat.count; ++v)
        if (slab[v] > 0) index->edge_label[v] = comp_chain[comp_of(v)];
    index->scan_offsets = make_scan_offsets(d, opt.excision_radius + 1);
    for (const auto& e : g.edges) index->edge_range.emplace_back(e.z_lo, e.z_hi);
    g.index = index;
    g.rebuild_adjacency();
    g.finalize();
    return g;
}

// ---------------------------------------------------------------------------
// Separable construction: H(p,q) = |p|^2/2 + F(q), p-dimension >= 2.
//
// For such H the level component structure of {H = z} coincides with the
// sublevel component structure of {F <= z} (the momentum fibers are spheres,
// connected for p_dim >= 2), so the graph is the sublevel merge tree of F
// with the remaining F-criticals retained as interior order-2 vertices.

namespace griddetail {

class SeparableIndex final : public ProjectionIndex {
public:
    Lattice lattice;  // over the q-box
    int p_dim = 0;
    std::vector<std::int32_t> edge_label;               // per q-lattice vertex
    std::vector<std::pair<double, double>> edge_range;  // z-span per edge id
    std::vector<int> edge_above;                        // successor edge through the upper vertex

    std::vector<std::vector<int>> scan_offsets;

    int edge_at(const Vec& x, double z) const override {
        thread_local std::vector<int> c, n;
        const int dq = lattice.dim();
        c.resize(dq);
        n.resize(dq);
        Vec q = x.tail(dq);
        lattice.nearest(q, c.data());
        // Nearest labeled lattice vertex whose edge starts at or below z
        // identifies the sublevel component of q; ascend the merge tree until
        // the edge spans z.
        int start = -1, fallback = -1;
        for (const auto& off : scan_offsets) {
            for (int k = 0; k < dq; ++k) n[k] = c[k] + off[k];
            if (!lattice.in_range(n.data())) continue;
            std::int32_t lab = edge_label[lattice.index(n.data())];
            if (lab < 0) continue;
            if (edge_range[lab].first <= z + 1e-12) {
                start = lab;
                break;
            }
            if (fallback < 0) fallback = lab;
        }
        if (start < 0) return fallback;  // z hugs a vertex level; flagged upstream
        int e = start;
        while (z > edge_range[e].second + 1e-12) {
            if (edge_above[e] < 0) return -1;
            e = edge_above[e];
        }
        return e;
    }
};

}  // namespace griddetail

inline ReebGraph build_reeb_separable(std::shared_ptr<const ScalarField> field,
                                      const std::vector<CriticalPoint>& f_criticals,
                                      const ReebBuildOptions& opt = {}) {
    using namespace griddetail;
    if (!field->is_separable())
        throw UnsupportedKinetic("field '" + field->name() + "' is not of kinetic+potential form");
    if (field->p_dim() < 2)
        throw PDimTooSmall("momentum dimension " + fmt_int(field->p_dim()) +
                           " < 2: level fibers disconnect and the sublevel rule is invalid");
    const auto F = field->potential();
    const int dq = F->dim();
    if (f_criticals.empty()) throw Error("build_reeb_separable: no potential criticals supplied");

    auto index = std::make_shared<SeparableIndex>();
    index->p_dim = field->p_dim();
    Lattice& lat = index->lattice;
    lat.init(F->box(), opt.resolution);

    std::vector<double> fv(lat.count);
    parallel_for(lat.count, opt.threads, [&](long long v) {
        thread_local std::vector<int> c;
        c.resize(dq);
        lat.coords(v, c.data());
        Vec x(dq);
        lat.point(c.data(), x);
        fv[v] = F->value(x);
    });

    LevelTable levels;
    levels.init(f_criticals, field->z_ceiling(), 1e-12);
    double band = opt.band_rel;
    for (double z : levels.levels) band = std::max(band, opt.band_rel * std::fabs(z));

    std::vector<std::int32_t> slab(lat.count);
    for (long long v = 0; v < lat.count; ++v) {
        slab[v] = static_cast<std::int32_t>(levels.slab_of(fv[v], band));
        if (slab[v] == 0)
            throw VertexCountMismatch("lattice value below the lowest potential critical value");
    }
    excise_critical_balls(lat, f_criticals, opt.excision_radius, slab);
    std::vector<std::vector<long long>> bucket(levels.count() + 1);
    for (long long v = 0; v < lat.count; ++v)
        if (slab[v] >= 1) bucket[slab[v]].push_back(v);

    ReebGraph g;
    g.field = field;
    g.z_ceiling = field->z_ceiling();
    g.vertex_tol = opt.vertex_tol;
    // Lift the potential criticals: (p,q) = (0, q*), same value, same index.
    for (const auto& c : f_criticals) {
        CriticalPoint lifted;
        lifted.x.setZero(field->dim());
        lifted.x.tail(dq) = c.x;
        lifted.z = c.z;
        lifted.index = c.index;
        lifted.eigenvalues.resize(field->dim());
        for (int k = 0; k < field->p_dim(); ++k) lifted.eigenvalues[k] = 1.0;
        lifted.eigenvalues.tail(dq) = c.eigenvalues;
        std::sort(lifted.eigenvalues.data(), lifted.eigenvalues.data() + field->dim());
        g.criticals.push_back(std::move(lifted));
    }

    UnionFind uf;
    uf.init(lat.count);
    auto offsets = kuhn_offsets(dq);

    auto new_edge = [&](double z_lo, int lower_vertex) {
        ReebEdge e;
        e.id = static_cast<int>(g.edges.size());
        e.z_lo = z_lo;
        e.lower = lower_vertex;
        g.edges.push_back(e);
        return e.id;
    };

    std::map<std::int32_t, int> chain;  // sublevel-component root -> open edge id
    std::vector<int> c(dq), n(dq);
    index->edge_label.assign(lat.count, -1);

    // Nearest lattice vertex to q within the wanted slab.
    auto nearest_in_slab = [&](const Vec& q, int wanted) -> long long {
        lat.nearest(q, c.data());
        for (int radius = 0; radius <= opt.excision_radius + 4; ++radius) {
            std::vector<int> cur(dq, -radius);
            for (;;) {
                bool ok = true;
                for (int k = 0; k < dq; ++k) {
                    n[k] = c[k] + cur[k];
                    if (n[k] < 0 || n[k] >= lat.dims[k]) { ok = false; break; }
                }
                if (ok) {
                    long long u = lat.index(n.data());
                    if (slab[u] == wanted) return u;
                }
                int k = 0;
                while (k < dq && ++cur[k] > radius) cur[k++] = -radius;
                if (k == dq) break;
            }
        }
        return -1;
    };

    for (int stage = 1; stage <= levels.count(); ++stage) {
        const int lv = stage - 1;  // critical level entered at this stage
        // Snapshot: components adjacent to each critical of the level, in the
        // pre-union (strictly below the level) structure.
        struct Event {
            int critical;
            std::vector<std::int32_t> roots;  // distinct sublevel roots nearby
        };
        std::vector<Event> events;
        for (int ci : levels.criticals[lv]) {
            Event ev;
            ev.critical = ci;
            std::set<std::int32_t> roots;
            const Vec q = Vec(g.criticals[ci].x.tail(dq));
            const int r0 = opt.excision_radius + 1;
            for (int radius = r0; radius <= r0 + 8; radius += 2) {
                lat.nearest(q, c.data());
                std::vector<int> cur(dq, -radius);
                for (;;) {
                    bool ok = true;
                    for (int k = 0; k < dq; ++k) {
                        n[k] = c[k] + cur[k];
                        if (n[k] < 0 || n[k] >= lat.dims[k]) { ok = false; break; }
                    }
                    if (ok) {
                        long long u = lat.index(n.data());
                        if (slab[u] >= 1 && slab[u] <= lv)  // strictly below the level
                            roots.insert(uf.find(static_cast<std::int32_t>(u)));
                    }
                    int k = 0;
                    while (k < dq && ++cur[k] > radius) cur[k++] = -radius;
                    if (k == dq) break;
                }
                if (!roots.empty() || f_criticals[ci].index == 0) break;
            }
            ev.roots.assign(roots.begin(), roots.end());
            events.push_back(std::move(ev));
        }

        // Union the new slab into the cumulative sublevel structure.
        for (long long v : bucket[stage]) {
            lat.coords(v, c.data());
            for (const auto& off : offsets) {
                for (int sgn : {+1, -1}) {
                    bool ok = true;
                    for (int k = 0; k < dq; ++k) {
                        n[k] = c[k] + sgn * off[k];
                        if (n[k] < 0 || n[k] >= lat.dims[k]) { ok = false; break; }
                    }
                    if (!ok) continue;
                    long long u = lat.index(n.data());
                    if (slab[u] >= 1 && slab[u] <= stage)
                        uf.unite(static_cast<std::int32_t>(v), static_cast<std::int32_t>(u));
                }
            }
        }

        // Re-key chains by the post-union roots, applying the events.
        std::map<std::int32_t, int> next_chain;
        std::set<std::int32_t> consumed;
        for (const auto& ev : events) {
            const CriticalPoint& fc = f_criticals[ev.critical];
            ReebVertex vx;
            vx.id = static_cast<int>(g.vertices.size());
            vx.z = levels.levels[lv];
            vx.critical = ev.critical;
            if (ev.roots.empty()) {
                // Fresh component: must be a minimum of F.
                if (fc.index != 0)
                    throw VertexCountMismatch("isolated critical of index " + fmt_int(fc.index) +
                                              " at z=" + fmt_g17(fc.z));
                long long seed = nearest_in_slab(Vec(fc.x.tail(dq)), stage);
                if (seed < 0)
                    throw VertexCountMismatch("no lattice support near minimum at z=" +
                                              fmt_g17(fc.z) + "; refine the grid");
                std::int32_t root = uf.find(static_cast<std::int32_t>(seed));
                int e = new_edge(vx.z, vx.id);
                vx.edges_above.push_back(e);
                next_chain[root] = e;
            } else {
                // Close the adjacent chains; their union continues above.
                for (auto r : ev.roots) {
                    auto it = chain.find(r);
                    if (it == chain.end())
                        throw VertexCountMismatch("critical at z=" + fmt_g17(fc.z) +
                                                  " adjacent to an unborn component");
                    g.edges[it->second].z_hi = vx.z;
                    g.edges[it->second].upper = vx.id;
                    vx.edges_below.push_back(it->second);
                    consumed.insert(r);
                }
                std::int32_t root = uf.find(ev.roots[0]);
                int e = new_edge(vx.z, vx.id);
                vx.edges_above.push_back(e);
                if (next_chain.count(root)) {
                    g.a2_component_ok = false;
                    g.construction_notes.push_back("two criticals meet one component at z=" +
                                                   fmt_g17(vx.z));
                } else {
                    next_chain[root] = e;
                }
            }
            g.vertices.push_back(std::move(vx));
        }
        // Carry over untouched chains; a silent merge means the lattice lost a
        // component boundary.
        for (auto [root, e] : chain) {
            if (consumed.count(root)) continue;
            std::int32_t nr = uf.find(root);
            auto [it, inserted] = next_chain.emplace(nr, e);
            if (!inserted && it->second != e)
                throw VertexCountMismatch("components merged without a critical point at z=" +
                                          fmt_g17(levels.levels[lv]) + "; refine the grid");
        }
        chain = std::move(next_chain);

        // Label this stage's lattice vertices with their current edge.
        for (long long v : bucket[stage]) {
            auto it = chain.find(uf.find(static_cast<std::int32_t>(v)));
            if (it != chain.end()) index->edge_label[v] = it->second;
        }
    }

    if (chain.size() != 1)
        throw NotATree(fmt_int(static_cast<long long>(chain.size())) +
                       " components at the ceiling; box or ceiling too small");
    {
        int e = chain.begin()->second;
        g.edges[e].z_hi = g.z_ceiling;
        g.edges[e].open = true;
    }

    for (const auto& e : g.edges) index->edge_range.emplace_back(e.z_lo, e.z_hi);
    index->scan_offsets = make_scan_offsets(dq, opt.excision_radius + 1);
    g.rebuild_adjacency();
    index->edge_above.assign(g.edges.size(), -1);
    for (const auto& e : g.edges)
        if (e.upper >= 0) index->edge_above[e.id] = g.vertices[e.upper].edges_above.empty()
                                                        ? -1
                                                        : g.vertices[e.upper].edges_above[0];
    g.index = index;
    g.finalize();
    return g;
}

/// Builds with the mode implied by the field: the separable sublevel rule
/// when available, otherwise the lattice level-component sweep.
inline ReebGraph build_reeb_auto(std::shared_ptr<const ScalarField> field,
                                 const ReebBuildOptions& opt = {},
                                 const CriticalSearchOptions& search = {}) {
    if (field->is_separable() && field->p_dim() >= 2) {
        auto fcrit = find_critical_points(*field->potential(), search);
        return build_reeb_separable(field, fcrit, opt);
    }
    auto crit = find_critical_points(*field, search);
    return build_reeb_grid(field, crit, opt);
}

}  // namespace reebflow
