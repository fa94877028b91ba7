#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"
#include "reebflow/parallel.hpp"
#include "reebflow/reeb.hpp"
#include "reebflow/rng.hpp"

namespace reebflow {

struct EdgeTableRow {
    double z = 0.0;
    double V = 0.0, v = 0.0, h = 0.0, bhat = 0.0, betahat = 0.0;
    double a2bar = 0.0, bbar = 0.0, betabar = 0.0;
    double se_V = 0.0, se_v = 0.0, se_h = 0.0, se_bhat = 0.0, se_betahat = 0.0;
};

/// Asymptotic behavior of the averaged coefficients at one end of an edge,
/// fitted from the deepest refinement rows. Interior (saddle) ends follow the
/// logarithmic laws v ~ a|ln d| + c; exterior (extremum) ends vanish linearly
/// in the distance d to the vertex.
struct EndFit {
    bool is_vertex = false;
    bool interior = false;
    double vertex_z = 0.0;
    double gamma = 0.0;          // one-sided limit of h (the gluing weight)
    double gamma_spread = 0.0;   // relative spread of the extrapolation rows
    double gamma_se = 0.0;
    double bhat0 = 0.0, bhat0_se = 0.0;
    double betahat0 = 0.0, betahat0_se = 0.0;
    double h_slope = 0.0;        // h(d) ~ gamma + h_slope * d
    double bhat_slope = 0.0, betahat_slope = 0.0;
    // interior: v(d) ~ a_log |ln d| + c_log
    double a_log = 0.0, c_log = 0.0;
    // exterior: v(d) ~ v_coef d^v_pow, bbar ~ b_lin d, a2bar ~ a_lin d
    double v_coef = 0.0, v_pow = 1.0;
    double b_lin = 0.0, a_lin = 0.0, beta_lin = 0.0;
    double first_row_offset = 0.0;  // distance of the deepest row from the vertex
};

struct EdgeCoefficientTable {
    int edge = -1;
    int orientation = +1;
    double z_lo = 0.0, z_hi = 0.0;
    std::vector<EdgeTableRow> rows;  // strictly increasing in z
    EndFit lower, upper;
    long long mc_samples = 0;

    double length() const { return z_hi - z_lo; }
};

struct TabulateOptions {
    int z_points_interior = 32;
    int refine_levels = 12;
    double refine_ratio = 0.7;
    double refine_span = 0.25;      // fraction of edge length where refinement starts
    long long mc_samples = 1000000;  // per edge
    std::uint64_t seed = 0;
    int threads = 0;
    int chunks = 64;
    double v_window_frac = 0.35;
    double bad_row_rel_err = 0.20;  // beyond this, near-vertex queries use the fits
};

namespace coefdetail {

inline std::vector<double> edge_grid(const ReebEdge& e, const TabulateOptions& opt) {
    const double L = e.length();
    if (L <= 1e-9) throw EmptyDomain("edge " + fmt_int(e.id) + " has z-extent " + fmt_g17(L));
    const bool refine_lo = e.lower >= 0;
    const bool refine_hi = e.upper >= 0;
    const double span = opt.refine_span * L;
    std::vector<double> zs;
    if (refine_lo)
        for (int j = opt.refine_levels; j >= 1; --j)
            zs.push_back(e.z_lo + span * std::pow(opt.refine_ratio, j));
    else
        zs.push_back(e.z_lo + 0.01 * L);
    double a = refine_lo ? e.z_lo + span : e.z_lo + 0.02 * L;
    double b = refine_hi ? e.z_hi - span : e.z_hi - 0.02 * L;
    for (int i = 0; i <= opt.z_points_interior; ++i)
        zs.push_back(a + (b - a) * i / opt.z_points_interior);
    if (refine_hi)
        for (int j = 1; j <= opt.refine_levels; ++j)
            zs.push_back(e.z_hi - span * std::pow(opt.refine_ratio, j));
    else
        zs.push_back(e.z_hi - 0.01 * L);
    std::sort(zs.begin(), zs.end());
    std::vector<double> out;
    for (double z : zs)
        if (out.empty() || z - out.back() > 1e-14 * std::max(1.0, std::fabs(z))) out.push_back(z);
    return out;
}

/// Weighted least squares y ~ p0 + p1 * x.
inline std::pair<double, double> wls_line(const std::vector<double>& x,
                                          const std::vector<double>& y,
                                          const std::vector<double>& w) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    double det = sw * sxx - sx * sx;
    if (std::fabs(det) < 1e-300) return {y.empty() ? 0.0 : y.back(), 0.0};
    return {(sy * sxx - sx * sxy) / det, (sw * sxy - sx * sy) / det};
}

inline double lerp_rows(const std::vector<EdgeTableRow>& rows, double z,
                        double EdgeTableRow::*member) {
    if (rows.empty()) return 0.0;
    if (z <= rows.front().z) return rows.front().*member;
    if (z >= rows.back().z) return rows.back().*member;
    auto it = std::lower_bound(rows.begin(), rows.end(), z,
                               [](const EdgeTableRow& r, double zz) { return r.z < zz; });
    const EdgeTableRow& hi = *it;
    const EdgeTableRow& lo = *(it - 1);
    double t = (z - lo.z) / (hi.z - lo.z);
    return lo.*member + t * (hi.*member - lo.*member);
}

}  // namespace coefdetail

/**
 * Fits the near-vertex asymptotics of a finished row table. `field_dim` sets
 * the exterior-vertex power of v; pass 2 for synthetic graphs.
 */
inline void fit_table_ends(EdgeCoefficientTable& t, const ReebGraph& g, int field_dim) {
    auto fit_end = [&](bool lower_end) {
        EndFit f;
        const ReebEdge& e = g.edges[t.edge];
        int vid = lower_end ? e.lower : e.upper;
        f.is_vertex = vid >= 0;
        if (!f.is_vertex) return f;
        f.vertex_z = g.vertices[vid].z;
        f.interior = g.vertices[vid].interior();

        // Deepest rows at this end, by distance to the vertex.
        const int navail = static_cast<int>(t.rows.size());
        auto row_at = [&](int k) -> const EdgeTableRow& {
            return lower_end ? t.rows[k] : t.rows[navail - 1 - k];
        };
        auto offset_of = [&](const EdgeTableRow& r) { return std::fabs(r.z - f.vertex_z); };
        const int nfit = std::min(6, navail);
        const int next = std::min(3, navail);  // extrapolation rows for the limits

        {   // h, bhat, betahat: linear-in-offset extrapolation from 3 rows.
            std::vector<double> xs, hs, bs, es, w;
            double hmin = 1e300, hmax = -1e300;
            for (int k = 0; k < next; ++k) {
                const auto& r = row_at(k);
                xs.push_back(offset_of(r));
                hs.push_back(r.h);
                bs.push_back(r.bhat);
                es.push_back(r.betahat);
                w.push_back(1.0);
                hmin = std::min(hmin, r.h);
                hmax = std::max(hmax, r.h);
            }
            auto [h0, hs1] = coefdetail::wls_line(xs, hs, w);
            auto [b0, bs1] = coefdetail::wls_line(xs, bs, w);
            auto [e0, es1] = coefdetail::wls_line(xs, es, w);
            f.gamma = h0;
            f.h_slope = hs1;
            f.bhat0 = b0;
            f.bhat_slope = bs1;
            f.betahat0 = e0;
            f.betahat_slope = es1;
            f.gamma_spread = std::fabs(h0) > 0 ? (hmax - hmin) / std::fabs(h0) : 0.0;
            f.gamma_se = row_at(0).se_h;
            f.bhat0_se = row_at(0).se_bhat;
            f.betahat0_se = row_at(0).se_betahat;
        }
        f.first_row_offset = offset_of(row_at(0));

        if (f.interior) {
            // v ~ a |ln d| + c on the deepest rows.
            std::vector<double> xs, ys, w;
            for (int k = 0; k < nfit; ++k) {
                const auto& r = row_at(k);
                double d = offset_of(r);
                if (d <= 0) continue;
                xs.push_back(std::fabs(std::log(d)));
                ys.push_back(t.orientation > 0 ? r.v : -r.v);
                w.push_back(1.0);
            }
            auto [c, a] = coefdetail::wls_line(xs, ys, w);
            f.a_log = std::max(a, 0.0);
            f.c_log = c;
        } else {
            // Exterior: v ~ v_coef d^pow; averaged drift and diffusion vanish
            // linearly.
            f.v_pow = 0.5 * field_dim - 1.0;
            double vc = 0, bl = 0, al = 0, el = 0;
            int cnt = 0;
            for (int k = 0; k < nfit; ++k) {
                const auto& r = row_at(k);
                double d = offset_of(r);
                if (d <= 0) continue;
                vc += (t.orientation > 0 ? r.v : -r.v) / std::pow(d, f.v_pow);
                bl += r.bbar / d;
                al += r.a2bar / d;
                el += r.betabar / d;
                ++cnt;
            }
            if (cnt > 0) {
                f.v_coef = vc / cnt;
                f.b_lin = bl / cnt;
                f.a_lin = al / cnt;
                f.beta_lin = el / cnt;
            }
        }
        return f;
    };
    t.lower = fit_end(true);
    t.upper = fit_end(false);
}

/**
 * Monte Carlo tabulation of the averaged quantities on every edge of the
 * graph. For a point (z,e) of the graph, the integration domain is the
 * compact region bounded by the level component: the preimage of the non-root
 * side of the tree cut at (z,e). Each edge gets an independent sample batch
 * split into fixed chunks with per-chunk substreams, so results are
 * independent of the thread count.
 */
inline std::vector<EdgeCoefficientTable> tabulate_edges(
    const ReebGraph& g, const MatrixModel& a2, const VectorField& b, const VectorField& beta,
    const TabulateOptions& opt = {}) {
    if (!g.field || !g.index) throw Error("tabulate_edges: graph has no field/spatial index");
    const ScalarField& H = *g.field;
    const Box& box = H.box();
    const double vol = box.volume();
    const int d = H.dim();
    const long long n_per_chunk = std::max<long long>(1, opt.mc_samples / opt.chunks);
    const long long N = n_per_chunk * opt.chunks;

    struct ChunkAccum {
        // Samples on the edge itself.
        std::vector<double> z, fa, fb, fe;
        // Totals over strict descendants (members at every row).
        double cnt = 0, sa = 0, sa2 = 0, sb = 0, sb2 = 0, se = 0, se2 = 0;
    };

    std::vector<EdgeCoefficientTable> tables;
    for (const auto& e : g.edges) {
        EdgeCoefficientTable t;
        t.edge = e.id;
        t.orientation = e.orientation();
        t.z_lo = e.z_lo;
        t.z_hi = e.z_hi;
        t.mc_samples = N;
        auto grid = coefdetail::edge_grid(e, opt);
        t.rows.resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) t.rows[i].z = grid[i];
        tables.push_back(std::move(t));
    }

    for (std::size_t ti = 0; ti < tables.size(); ++ti) {
        EdgeCoefficientTable& t = tables[ti];
        const int eid = t.edge;
        std::vector<ChunkAccum> acc(opt.chunks);
        parallel_for(opt.chunks, opt.threads, [&](long long ci) {
            Rng rng(opt.seed, "coeffs", static_cast<std::uint64_t>(eid) * 4096 + ci);
            ChunkAccum& a = acc[ci];
            Vec x(d);
            for (long long s = 0; s < n_per_chunk; ++s) {
                for (int k = 0; k < d; ++k) x[k] = rng.uniform(box.lo[k], box.hi[k]);
                double z = H.value(x);
                if (z >= g.z_ceiling) continue;
                int ex = g.index->edge_at(x, z);
                if (ex < 0) continue;
                bool on_edge = (ex == eid);
                bool desc = !on_edge && g.strictly_enclosed(eid, ex);
                if (!on_edge && !desc) continue;
                double fa = a2.div_a_grad(H, x);
                double fb = b.divergence(x);
                double fe = beta.divergence(x);
                if (on_edge) {
                    a.z.push_back(z);
                    a.fa.push_back(fa);
                    a.fb.push_back(fb);
                    a.fe.push_back(fe);
                } else {
                    a.cnt += 1;
                    a.sa += fa;
                    a.sa2 += fa * fa;
                    a.sb += fb;
                    a.sb2 += fb * fb;
                    a.se += fe;
                    a.se2 += fe * fe;
                }
            }
        });

        // Merge chunks in order, then sort the on-edge samples by level.
        std::vector<double> z, fa, fb, fe;
        double dcnt = 0, dsa = 0, dsa2 = 0, dsb = 0, dsb2 = 0, dse = 0, dse2 = 0;
        for (const auto& a : acc) {
            z.insert(z.end(), a.z.begin(), a.z.end());
            fa.insert(fa.end(), a.fa.begin(), a.fa.end());
            fb.insert(fb.end(), a.fb.begin(), a.fb.end());
            fe.insert(fe.end(), a.fe.begin(), a.fe.end());
            dcnt += a.cnt;
            dsa += a.sa; dsa2 += a.sa2;
            dsb += a.sb; dsb2 += a.sb2;
            dse += a.se; dse2 += a.se2;
        }
        std::vector<std::size_t> order(z.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t i, std::size_t j) { return z[i] < z[j]; });
        auto permute = [&](std::vector<double>& v) {
            std::vector<double> out(v.size());
            for (std::size_t i = 0; i < order.size(); ++i) out[i] = v[order[i]];
            v = std::move(out);
        };
        permute(z);
        permute(fa);
        permute(fb);
        permute(fe);

        // Prefix sums over the sorted on-edge samples.
        std::size_t n = z.size();
        std::vector<double> pa(n + 1, 0), pa2(n + 1, 0), pb(n + 1, 0), pb2(n + 1, 0),
            pe(n + 1, 0), pe2(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            pa[i + 1] = pa[i] + fa[i];
            pa2[i + 1] = pa2[i] + fa[i] * fa[i];
            pb[i + 1] = pb[i] + fb[i];
            pb2[i + 1] = pb2[i] + fb[i] * fb[i];
            pe[i + 1] = pe[i] + fe[i];
            pe2[i + 1] = pe2[i] + fe[i] * fe[i];
        }
        auto count_below = [&](double zz) {
            return static_cast<std::size_t>(std::lower_bound(z.begin(), z.end(), zz) - z.begin());
        };

        const bool up = t.orientation > 0;
        double scale = vol / static_cast<double>(N);
        for (auto& r : t.rows) {
            std::size_t k = count_below(r.z);
            double cnt_in = up ? dcnt + k : dcnt + (n - k);
            double s_a = up ? dsa + pa[k] : dsa + (pa[n] - pa[k]);
            double s_a2 = up ? dsa2 + pa2[k] : dsa2 + (pa2[n] - pa2[k]);
            double s_b = up ? dsb + pb[k] : dsb + (pb[n] - pb[k]);
            double s_b2 = up ? dsb2 + pb2[k] : dsb2 + (pb2[n] - pb2[k]);
            double s_e = up ? dse + pe[k] : dse + (pe[n] - pe[k]);
            double s_e2 = up ? dse2 + pe2[k] : dse2 + (pe2[n] - pe2[k]);

            double p = cnt_in / N;
            r.V = vol * p;
            r.se_V = vol * std::sqrt(std::max(p * (1 - p), 0.0) / N);
            auto moments = [&](double s1, double s2, double& out, double& se) {
                double m = s1 / N;
                double var = std::max(s2 / N - m * m, 0.0);
                out = vol * m;
                se = vol * std::sqrt(var / N);
            };
            moments(s_a, s_a2, r.h, r.se_h);
            moments(s_b, s_b2, r.bhat, r.se_bhat);
            moments(s_e, s_e2, r.betahat, r.se_betahat);
        }

        // Level density v = dV/dz by symmetric windows around each row.
        double med_gap = t.length() / std::max(1, opt.z_points_interior);
        for (auto& r : t.rows) {
            double dist_lo = g.edges[eid].lower >= 0 ? r.z - t.z_lo : 1e300;
            double dist_hi = g.edges[eid].upper >= 0 ? t.z_hi - r.z : 1e300;
            double w = std::min({opt.v_window_frac * dist_lo, opt.v_window_frac * dist_hi,
                                 med_gap});
            w = std::max(w, 1e-14);
            std::size_t klo = count_below(r.z - w), khi = count_below(r.z + w);
            double cnt = static_cast<double>(khi - klo);
            double dens = scale * cnt / (2 * w);
            r.v = up ? dens : -dens;
            r.se_v = scale * std::sqrt(std::max(cnt, 1.0)) / (2 * w);
        }
        // 5-point smoothing of v across rows (log-uniform near the ends, so
        // index-space smoothing respects the asymptotic shape).
        {
            const int m = static_cast<int>(t.rows.size());
            static const double wgt[5] = {1, 2, 3, 2, 1};
            std::vector<double> vs(m), ses(m);
            for (int i = 0; i < m; ++i) {
                double sw = 0, sv = 0, sv2 = 0;
                for (int j = -2; j <= 2; ++j) {
                    int k = i + j;
                    if (k < 0 || k >= m) continue;
                    double wv = wgt[j + 2];
                    sw += wv;
                    sv += wv * t.rows[k].v;
                    sv2 += wv * wv * t.rows[k].se_v * t.rows[k].se_v;
                }
                vs[i] = sv / sw;
                ses[i] = std::sqrt(sv2) / sw;
            }
            for (int i = 0; i < m; ++i) {
                t.rows[i].v = vs[i];
                t.rows[i].se_v = ses[i];
            }
        }

        for (auto& r : t.rows) {
            if (r.v != 0.0) {
                r.a2bar = r.h / r.v;
                r.bbar = r.bhat / r.v;
                r.betabar = r.betahat / r.v;
            }
        }

        // Positivity of the diffusion numerator in the edge interior.
        for (const auto& r : t.rows) {
            double hh = up ? r.h : -r.h;
            if (hh < -3.0 * r.se_h && r.se_h > 0)
                throw DegenerateDiffusion("edge " + fmt_int(eid) + " at z=" + fmt_g17(r.z) +
                                          ": h=" + fmt_g17(r.h) + " se=" + fmt_g17(r.se_h));
        }
        fit_table_ends(t, g, d);
    }
    return tables;
}

// ---------------------------------------------------------------------------
// Smooth coefficient access with near-vertex asymptotics.

/// Read view over one table: interpolates rows in the bulk and switches to the
/// fitted asymptotic forms inside the near-vertex zone (beyond the deepest
/// row, or where the tabulated relative error exceeds the configured bound).
class TableView {
public:
    const EdgeCoefficientTable* t = nullptr;
    double bad_rel = 0.20;

    explicit TableView(const EdgeCoefficientTable& table, double bad_rel_err = 0.20)
        : t(&table), bad_rel(bad_rel_err) {}

    double h(double z) const {
        const EndFit* f = near_end(z);
        if (f) return f->gamma + f->h_slope * offset(z, *f);
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::h);
    }
    double bhat(double z) const {
        const EndFit* f = near_end(z);
        if (f) return f->bhat0 + f->bhat_slope * offset(z, *f);
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::bhat);
    }
    double betahat(double z) const {
        const EndFit* f = near_end(z);
        if (f) return f->betahat0 + f->betahat_slope * offset(z, *f);
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::betahat);
    }
    double V(double z) const { return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::V); }

    /// Signed level density dV/dz.
    double v(double z) const {
        const EndFit* f = fit_zone(z);
        if (f) {
            double d = std::max(offset(z, *f), 1e-300);
            double mag = f->interior ? std::max(f->a_log * std::fabs(std::log(d)) + f->c_log, 1e-12)
                                     : std::max(f->v_coef * std::pow(d, f->v_pow), 1e-300);
            return t->orientation > 0 ? mag : -mag;
        }
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::v);
    }
    double a2bar(double z) const {
        const EndFit* f = fit_zone(z);
        if (f) {
            if (!f->interior) return f->a_lin * offset(z, *f);
            return h(z) / v(z);
        }
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::a2bar);
    }
    double bbar(double z) const {
        const EndFit* f = fit_zone(z);
        if (f) {
            if (!f->interior) return f->b_lin * offset(z, *f);
            return bhat(z) / v(z);
        }
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::bbar);
    }
    double betabar(double z) const {
        const EndFit* f = fit_zone(z);
        if (f) {
            if (!f->interior) return f->beta_lin * offset(z, *f);
            return betahat(z) / v(z);
        }
        return coefdetail::lerp_rows(t->rows, z, &EdgeTableRow::betabar);
    }

private:
    static double offset(double z, const EndFit& f) { return std::fabs(z - f.vertex_z); }

    /// End fit to use when z is beyond the deepest tabulated row.
    const EndFit* near_end(double z) const {
        if (t->lower.is_vertex && z < t->z_lo + t->lower.first_row_offset) return &t->lower;
        if (t->upper.is_vertex && z > t->z_hi - t->upper.first_row_offset) return &t->upper;
        return nullptr;
    }

    /// Wider zone for the ratio quantities: the refinement region where the
    /// tabulated rows are too noisy.
    const EndFit* fit_zone(double z) const {
        const EndFit* f = near_end(z);
        if (f) return f;
        // Inside the rows: use the fit when the local row is flagged noisy.
        auto it = std::lower_bound(t->rows.begin(), t->rows.end(), z,
                                   [](const EdgeTableRow& r, double zz) { return r.z < zz; });
        if (it == t->rows.begin() || it == t->rows.end()) return nullptr;
        const EdgeTableRow& r = *it;
        bool noisy = std::fabs(r.v) > 0 && r.se_v > bad_rel * std::fabs(r.v);
        if (!noisy) return nullptr;
        if (t->lower.is_vertex && z - t->z_lo < t->z_hi - z) return &t->lower;
        if (t->upper.is_vertex) return &t->upper;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------

struct GluingWeights {
    // vertex id -> (edge id, gamma) for every attached edge
    std::map<int, std::vector<std::pair<int, double>>> gamma;

    double at(int vertex, int edge) const {
        for (auto& [e, gw] : gamma.at(vertex))
            if (e == edge) return gw;
        throw Error("no gluing weight for vertex " + fmt_int(vertex) + " edge " + fmt_int(edge));
    }
};

/**
 * Gluing weights from the one-sided limits of h along each attached edge
 * (equal, by the divergence theorem, to the boundary flux form). Throws
 * ExtrapolationUnstable when the three-row extrapolation spreads more than
 * 20%.
 */
inline GluingWeights gluing_weights(const std::vector<EdgeCoefficientTable>& tables,
                                    const ReebGraph& g, double max_spread = 0.20) {
    GluingWeights out;
    std::map<int, const EdgeCoefficientTable*> by_edge;
    for (const auto& t : tables) by_edge[t.edge] = &t;
    for (const auto& vx : g.vertices) {
        std::vector<std::pair<int, double>> gs;
        auto add = [&](int eid, bool lower_end) {
            auto it = by_edge.find(eid);
            if (it == by_edge.end()) return;
            const EndFit& f = lower_end ? it->second->lower : it->second->upper;
            double gamma = std::fabs(f.gamma);
            // h tends to a positive limit only at interior vertices; there the
            // three-row extrapolation must be stable. At extrema h vanishes and
            // gamma is simply ~0.
            if (f.interior && f.gamma_spread > max_spread &&
                f.gamma_spread * std::fabs(f.gamma) > 3 * f.gamma_se)
                throw ExtrapolationUnstable("vertex " + fmt_int(vx.id) + " edge " + fmt_int(eid) +
                                            ": spread " + fmt_g17(f.gamma_spread));
            gs.emplace_back(eid, gamma);
        };
        for (int eid : vx.edges_above) add(eid, true);    // edge starts at this vertex
        for (int eid : vx.edges_below) add(eid, false);   // edge ends here
        if (!gs.empty()) out.gamma[vx.id] = std::move(gs);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct VertexClassification {
    int vertex = -1;
    std::vector<int> entrance, exit;          // edge ids
    bool essential = false;
    std::vector<std::pair<int, double>> branch;  // exit edge -> probability
    std::map<int, double> bhat_limit;            // edge -> one-sided b-flux limit
};

/**
 * Entrance/exit structure and branching probabilities at each interior
 * vertex, from the one-sided limits of the averaged drift. The edge pair of a
 * fork (join) is essential when both attached-domain integrals of div b are
 * negative (positive); branch probabilities are the normalized flux ratios.
 */
inline std::vector<VertexClassification> classify_vertices(
    const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables) {
    std::map<int, const EdgeCoefficientTable*> by_edge;
    for (const auto& t : tables) by_edge[t.edge] = &t;
    std::vector<VertexClassification> out;
    for (const auto& vx : g.vertices) {
        if (!vx.interior()) continue;
        VertexClassification c;
        c.vertex = vx.id;
        struct Side {
            int edge;
            bool above;
            double bhat0, se;
            int orientation;
        };
        std::vector<Side> sides;
        for (int eid : vx.edges_above) {
            const auto& t = *by_edge.at(eid);
            sides.push_back({eid, true, t.lower.bhat0, t.lower.bhat0_se, t.orientation});
        }
        for (int eid : vx.edges_below) {
            const auto& t = *by_edge.at(eid);
            sides.push_back({eid, false, t.upper.bhat0, t.upper.bhat0_se, t.orientation});
        }
        for (const auto& s : sides) {
            if (std::fabs(s.bhat0) <= 3.0 * s.se)
                throw AssumptionA6Violated("vertex " + fmt_int(vx.id) + " edge " + fmt_int(s.edge) +
                                           ": |bhat|=" + fmt_g17(std::fabs(s.bhat0)) +
                                           " <= 3se=" + fmt_g17(3.0 * s.se));
            c.bhat_limit[s.edge] = s.bhat0;
            // Flow direction dz/dt near the vertex has the sign of
            // bhat * orientation; toward the vertex means entrance.
            double dzdt = s.bhat0 * s.orientation;
            bool toward = s.above ? (dzdt < 0) : (dzdt > 0);
            (toward ? c.entrance : c.exit).push_back(s.edge);
        }
        // The double-sided pair of a fork (both below) or join (both above).
        const std::vector<int>& pair_edges = vx.is_fork() ? vx.edges_below
                                            : vx.is_join() ? vx.edges_above
                                                           : std::vector<int>{};
        if (pair_edges.size() == 2) {
            double d0 = 0, d1 = 0;  // attached-domain integrals of div b
            for (int k = 0; k < 2; ++k) {
                const auto& t = *by_edge.at(pair_edges[k]);
                const EndFit& f = vx.is_fork() ? t.upper : t.lower;
                double attached = vx.is_fork() ? t.orientation * f.bhat0
                                               : -t.orientation * f.bhat0;
                (k == 0 ? d0 : d1) = attached;
            }
            c.essential = vx.is_fork() ? (d0 < 0 && d1 < 0) : (d0 > 0 && d1 > 0);
            if (c.essential) {
                double p0 = std::fabs(d0) / (std::fabs(d0) + std::fabs(d1));
                c.branch.emplace_back(pair_edges[0], p0);
                c.branch.emplace_back(pair_edges[1], 1.0 - p0);
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Zeros of the averaged drift and the deterministic stable set.

struct DriftRoot {
    int edge;
    double z;
    bool attracting;  // dz/dt > 0 below and < 0 above
};

/// Isolates sign changes of bhat along each edge's rows.
inline std::vector<DriftRoot> drift_roots(const ReebGraph& g,
                                          const std::vector<EdgeCoefficientTable>& tables) {
    std::vector<DriftRoot> roots;
    for (const auto& t : tables) {
        for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
            const auto& a = t.rows[i];
            const auto& b = t.rows[i + 1];
            if (a.bhat == 0.0 || a.bhat * b.bhat >= 0.0) continue;
            double tt = a.bhat / (a.bhat - b.bhat);
            double zr = a.z + tt * (b.z - a.z);
            double dz_below = a.bhat * t.orientation;
            roots.push_back({t.edge, zr, dz_below > 0});
        }
    }
    return roots;
}

struct StableTarget {
    bool is_vertex = false;
    int vertex = -1;
    int edge = -1;
    double z = 0.0;
    double probability = 0.0;
    std::vector<int> essential_vertices;
    std::vector<int> path_edges;
};

struct StableSet {
    GraphPoint start;
    std::vector<StableTarget> targets;

    double total_probability() const {
        double s = 0;
        for (const auto& t : targets) s += t.probability;
        return s;
    }
};

/**
 * Enumerates the asymptotically stable targets reachable from y by the
 * zero-noise flow on the graph, branching at essential vertices, with the
 * probability of each target as the product of branch ratios along its path.
 */
inline StableSet stable_set(const ReebGraph& g, const std::vector<EdgeCoefficientTable>& tables,
                            const std::vector<VertexClassification>& cls, GraphPoint y) {
    std::map<int, const EdgeCoefficientTable*> by_edge;
    for (const auto& t : tables) by_edge[t.edge] = &t;
    std::map<int, const VertexClassification*> by_vertex;
    for (const auto& c : cls) by_vertex[c.vertex] = &c;
    auto roots = drift_roots(g, tables);

    // A8: the open edge must point downward at its top.
    {
        const auto& t = *by_edge.at(g.open_edge);
        const auto& last = t.rows.back();
        if (last.bhat * t.orientation >= 0)
            throw AssumptionA8Violated("drift does not point down at the top of the open edge");
    }

    StableSet out;
    out.start = y;

    struct Frame {
        int edge;
        double z;
        double prob;
        std::vector<int> ess, path;
    };
    std::vector<Frame> stack;

    auto continue_from_vertex = [&](const ReebVertex& vx, Frame fr, auto&& push) {
        auto it = by_vertex.find(vx.id);
        if (it == by_vertex.end())
            throw Error("stable_set: vertex " + fmt_int(vx.id) + " unclassified");
        const VertexClassification& c = *it->second;
        if (c.exit.size() == 1) {
            fr.edge = c.exit[0];
            fr.z = vx.z;
            push(fr);
        } else if (c.exit.size() == 2) {
            if (!c.essential)
                throw AmbiguousSign("two-exit vertex " + fmt_int(vx.id) + " is not essential");
            for (const auto& [eid, p] : c.branch) {
                Frame f2 = fr;
                f2.edge = eid;
                f2.z = vx.z;
                f2.prob *= p;
                f2.ess.push_back(vx.id);
                push(f2);
            }
        } else {
            throw AmbiguousSign("vertex " + fmt_int(vx.id) + " has " +
                                fmt_int(static_cast<long long>(c.exit.size())) + " exit edges");
        }
    };

    stack.push_back({y.edge, y.z, 1.0, {}, {}});
    int guard = 0;
    while (!stack.empty()) {
        Frame fr = stack.back();
        stack.pop_back();
        if (++guard > 10000) throw CycleDetected("stable-set expansion did not terminate");
        const auto& t = *by_edge.at(fr.edge);
        const ReebEdge& e = g.edges[fr.edge];
        fr.path.push_back(fr.edge);
        if (std::count(fr.path.begin(), fr.path.end(), fr.edge) > 2)
            throw CycleDetected("edge " + fmt_int(fr.edge) + " revisited");

        TableView view(t);
        double dzdt = view.bhat(fr.z) * t.orientation;
        if (dzdt == 0.0) throw StuckAtZero("zero drift at start z=" + fmt_g17(fr.z));
        int dir = dzdt > 0 ? +1 : -1;

        // Nearest drift root in the flow direction, else the edge end.
        double stop_z = dir > 0 ? e.z_hi : e.z_lo;
        const DriftRoot* hit = nullptr;
        for (const auto& r : roots) {
            if (r.edge != fr.edge) continue;
            if (dir > 0 && r.z > fr.z + 1e-12 && r.z < stop_z) {
                stop_z = r.z;
                hit = &r;
            } else if (dir < 0 && r.z < fr.z - 1e-12 && r.z > stop_z) {
                stop_z = r.z;
                hit = &r;
            }
        }
        if (hit) {
            if (!hit->attracting)
                throw StuckAtZero("flow runs into a repelling root at z=" + fmt_g17(hit->z));
            StableTarget tg;
            tg.is_vertex = false;
            tg.edge = fr.edge;
            tg.z = hit->z;
            tg.probability = fr.prob;
            tg.essential_vertices = fr.ess;
            tg.path_edges = fr.path;
            out.targets.push_back(std::move(tg));
            continue;
        }
        int vid = dir > 0 ? e.upper : e.lower;
        if (vid < 0) throw AssumptionA8Violated("flow escapes through the open edge");
        const ReebVertex& vx = g.vertices[vid];
        if (!vx.interior()) {
            StableTarget tg;
            tg.is_vertex = true;
            tg.vertex = vid;
            tg.edge = fr.edge;
            tg.z = vx.z;
            tg.probability = fr.prob;
            tg.essential_vertices = fr.ess;
            tg.path_edges = fr.path;
            out.targets.push_back(std::move(tg));
            continue;
        }
        continue_from_vertex(vx, fr, [&](const Frame& f2) { stack.push_back(f2); });
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV interchange (one file per edge).

inline std::string table_to_csv(const EdgeCoefficientTable& t) {
    std::string s =
        "edge,z,V,v,h,bhat,betahat,a2bar,bbar,betabar,se_V,se_v,se_h,se_bhat,se_betahat\n";
    for (const auto& r : t.rows) {
        s += fmt_int(t.edge);
        for (double x : {r.z, r.V, r.v, r.h, r.bhat, r.betahat, r.a2bar, r.bbar, r.betabar,
                         r.se_V, r.se_v, r.se_h, r.se_bhat, r.se_betahat})
            s += "," + fmt_g17(x);
        s += "\n";
    }
    return s;
}

inline EdgeCoefficientTable table_from_csv(const std::string& csv) {
    EdgeCoefficientTable t;
    std::size_t pos = csv.find('\n');
    if (pos == std::string::npos) throw Error("table_from_csv: empty input");
    ++pos;
    while (pos < csv.size()) {
        std::size_t end = csv.find('\n', pos);
        if (end == std::string::npos) end = csv.size();
        std::string line = csv.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::size_t p = 0;
        while (p <= line.size()) {
            std::size_t c = line.find(',', p);
            if (c == std::string::npos) c = line.size();
            vals.push_back(std::strtod(line.c_str() + p, nullptr));
            p = c + 1;
        }
        if (vals.size() != 15) throw Error("table_from_csv: bad row arity");
        t.edge = static_cast<int>(vals[0]);
        EdgeTableRow r;
        r.z = vals[1];
        r.V = vals[2];
        r.v = vals[3];
        r.h = vals[4];
        r.bhat = vals[5];
        r.betahat = vals[6];
        r.a2bar = vals[7];
        r.bbar = vals[8];
        r.betabar = vals[9];
        r.se_V = vals[10];
        r.se_v = vals[11];
        r.se_h = vals[12];
        r.se_bhat = vals[13];
        r.se_betahat = vals[14];
        t.rows.push_back(r);
    }
    if (!t.rows.empty()) {
        t.z_lo = t.rows.front().z;
        t.z_hi = t.rows.back().z;
        t.orientation = t.rows.back().v >= 0 ? +1 : -1;
    }
    return t;
}

}  // namespace reebflow
