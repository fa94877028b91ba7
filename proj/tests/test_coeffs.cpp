#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "reebflow/coeffs.hpp"
#include "reebflow/field.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/reeb_build.hpp"
#include "reebflow/reference_graph.hpp"

using namespace reebflow;

namespace {

struct H2Fixture {
    std::shared_ptr<const ScalarField> field = make_field("doublewell1d");
    ReebGraph graph;
    std::vector<EdgeCoefficientTable> tables;

    H2Fixture() {
        ReebBuildOptions o;
        o.resolution = 384;
        graph = build_reeb_grid(field, find_critical_points(*field), o);
        TabulateOptions t;
        t.mc_samples = 4000000;
        t.seed = 101;
        MomentumDrag b(0.5, 1);
        ZeroField beta;
        auto a2 = ConstantMatrixModel::identity(2);
        tables = tabulate_edges(graph, *a2, b, beta, t);
    }

    const EdgeCoefficientTable& table(int edge) const {
        for (const auto& t : tables)
            if (t.edge == edge) return t;
        throw Error("no table");
    }
    int well_edge(bool positive_q) const {
        Vec x(2);
        x << 0.0, positive_q ? 1.0 : -1.0;
        return graph.project(x).edge;
    }
};

const H2Fixture& h2() {
    static H2Fixture fx;
    return fx;
}

}  // namespace

TEST_CASE("harmonic tabulation matches closed forms", "[coeffs]") {
    auto f = make_field("harmonic");
    ReebBuildOptions o;
    o.resolution = 192;
    auto g = build_reeb_grid(f, find_critical_points(*f), o);
    TabulateOptions t;
    t.mc_samples = 2000000;
    t.seed = 7;
    RadialContraction b(1.0);  // div b = -2
    ZeroField beta;
    auto a2 = ConstantMatrixModel::identity(2);
    auto tabs = tabulate_edges(g, *a2, b, beta, t);
    REQUIRE(tabs.size() == 1);
    for (const auto& r : tabs[0].rows) {
        if (r.z < 0.05) continue;  // skip the thinnest near-vertex rows
        CHECK(r.V == Catch::Approx(2 * M_PI * r.z).epsilon(0.02));
        CHECK(r.v == Catch::Approx(2 * M_PI).epsilon(0.03));
        CHECK(r.h == Catch::Approx(4 * M_PI * r.z).epsilon(0.02));
        CHECK(r.a2bar == Catch::Approx(2 * r.z).epsilon(0.05));
        CHECK(r.bhat == Catch::Approx(-4 * M_PI * r.z).epsilon(0.02));
        CHECK(r.bbar == Catch::Approx(-2 * r.z).epsilon(0.05));
    }
    // Exterior-vertex asymptotics: v -> 2 pi, a2bar/z -> 2, bbar/z -> -2.
    CHECK(tabs[0].lower.v_coef == Catch::Approx(2 * M_PI).epsilon(0.05));
    CHECK(tabs[0].lower.a_lin == Catch::Approx(2.0).epsilon(0.06));
    CHECK(tabs[0].lower.b_lin == Catch::Approx(-2.0).epsilon(0.06));
}

TEST_CASE("two-well tabulation against quadrature oracles", "[coeffs]") {
    const auto& fx = h2();
    int e_pos = fx.well_edge(true);
    const auto& t = fx.table(e_pos);
    TableView view(t);
    for (double z : {-0.2, -0.12, -0.04}) {
        CHECK(view.V(z) == Catch::Approx(oracles::area(z, true)).epsilon(0.03));
        CHECK(view.v(z) == Catch::Approx(oracles::period(z, true)).epsilon(0.05));
        CHECK(view.h(z) == Catch::Approx(oracles::h_coef(z, true)).epsilon(0.04));
        // div b = -0.5, so bhat = -V/2 and bbar = -V / (2 T).
        CHECK(view.bhat(z) == Catch::Approx(-0.5 * oracles::area(z, true)).epsilon(0.04));
        CHECK(view.bbar(z) ==
              Catch::Approx(-0.5 * oracles::area(z, true) / oracles::period(z, true)).epsilon(0.06));
    }
}

TEST_CASE("additivity at the fork", "[coeffs]") {
    const auto& fx = h2();
    const auto& open_t = fx.table(fx.graph.open_edge);
    double V_up = open_t.rows.front().V, se_up = open_t.rows.front().se_V;
    double h_up = open_t.lower.gamma;
    double b_up = open_t.lower.bhat0;
    double V_sum = 0, se_sum2 = se_up * se_up, h_sum = 0, b_sum = 0, se_h2 = 0, se_b2 = 0;
    se_h2 = open_t.lower.gamma_se * open_t.lower.gamma_se;
    se_b2 = open_t.lower.bhat0_se * open_t.lower.bhat0_se;
    for (int well : {fx.well_edge(false), fx.well_edge(true)}) {
        const auto& t = fx.table(well);
        V_sum += t.rows.back().V;
        se_sum2 += t.rows.back().se_V * t.rows.back().se_V;
        h_sum += t.upper.gamma;
        se_h2 += t.upper.gamma_se * t.upper.gamma_se;
        b_sum += t.upper.bhat0;
        se_b2 += t.upper.bhat0_se * t.upper.bhat0_se;
    }
    CHECK(std::fabs(V_up - V_sum) <= 3 * std::sqrt(se_sum2) + 1e-3);
    CHECK(std::fabs(h_up - h_sum) <= 3 * std::sqrt(se_h2) + 5e-3 * std::fabs(h_up));
    CHECK(std::fabs(b_up - b_sum) <= 3 * std::sqrt(se_b2) + 5e-3 * std::fabs(b_up));
}

TEST_CASE("gluing weights and symmetric equality", "[coeffs]") {
    const auto& fx = h2();
    auto gw = gluing_weights(fx.tables, fx.graph);
    int fork = -1;
    for (const auto& v : fx.graph.vertices)
        if (v.is_fork()) fork = v.id;
    double g_lo0 = gw.at(fork, fx.well_edge(false));
    double g_lo1 = gw.at(fork, fx.well_edge(true));
    double g_up = gw.at(fork, fx.graph.open_edge);
    CHECK(std::fabs(g_lo0 - g_lo1) <= 0.03 * g_up);
    CHECK(g_up == Catch::Approx(g_lo0 + g_lo1).epsilon(0.03));
    CHECK(g_up > 0);
}

TEST_CASE("vertex classification at the fork", "[coeffs]") {
    const auto& fx = h2();
    auto cls = classify_vertices(fx.graph, fx.tables);
    REQUIRE(cls.size() == 1);
    const auto& c = cls[0];
    CHECK(c.essential);
    REQUIRE(c.entrance.size() == 1);
    CHECK(c.entrance[0] == fx.graph.open_edge);
    REQUIRE(c.exit.size() == 2);
    REQUIRE(c.branch.size() == 2);
    CHECK(c.branch[0].second + c.branch[1].second == 1.0);
    CHECK(c.branch[0].second == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("branch ratios invariant under drift rescaling", "[coeffs]") {
    const auto& fx = h2();
    auto cls = classify_vertices(fx.graph, fx.tables);
    auto scaled = fx.tables;
    for (auto& t : scaled) {
        for (auto& r : t.rows) {
            r.bhat *= 7.0;
            r.bbar *= 7.0;
            r.se_bhat *= 7.0;
        }
        fit_table_ends(t, fx.graph, 2);
    }
    auto cls2 = classify_vertices(fx.graph, scaled);
    REQUIRE(cls2.size() == cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i)
        for (std::size_t k = 0; k < cls[i].branch.size(); ++k)
            CHECK(cls2[i].branch[k].second == Catch::Approx(cls[i].branch[k].second).margin(1e-12));
}

TEST_CASE("stable set on the reference tree", "[coeffs]") {
    auto r = make_reference_tree();
    auto tabs = make_reference_tables(r.graph);
    auto cls = classify_vertices(r.graph, tabs);

    GraphPoint y;
    y.edge = r.start_edge;
    y.z = 9.0;
    auto ss = stable_set(r.graph, tabs, cls, y);
    REQUIRE(ss.targets.size() == 4);
    std::set<int> got;
    for (const auto& t : ss.targets) {
        CHECK(t.is_vertex);
        got.insert(t.vertex);
    }
    CHECK(got == std::set<int>{r.min_deep_a, r.min_deep_b, r.min_mid_a, r.min_mid_b});
    CHECK(ss.total_probability() == Catch::Approx(1.0).margin(1e-12));

    // The path to min_mid_a branches exactly at the two forks above it, and
    // its probability is the product of the two flux ratios.
    const StableTarget* tg = nullptr;
    for (const auto& t : ss.targets)
        if (t.vertex == r.min_mid_a) tg = &t;
    REQUIRE(tg);
    CHECK(tg->essential_vertices == std::vector<int>{r.upper_fork, r.mid_fork});

    auto bhat_at = [&](int edge, bool upper_end) {
        for (const auto& t : tabs)
            if (t.edge == edge) return upper_end ? t.upper.bhat0 : t.lower.bhat0;
        throw Error("no table");
    };
    double b_mid = std::fabs(bhat_at(r.mid_branch_edge, true));
    double b_left = std::fabs(bhat_at(r.left_branch_edge, true));
    double p1 = b_mid / (b_mid + b_left);
    double b_a = std::fabs(bhat_at(r.edge_to_min_mid_a, true));
    double b_b = 0;
    for (int e : r.graph.vertices[r.mid_fork].edges_below)
        if (e != r.edge_to_min_mid_a) b_b = std::fabs(bhat_at(e, true));
    double p2 = b_a / (b_a + b_b);
    CHECK(tg->probability == Catch::Approx(p1 * p2).margin(1e-12));
}

TEST_CASE("two-exit vertex with mixed-sign fluxes is refused", "[coeffs]") {
    auto r = make_reference_tree();
    auto tabs = make_reference_tables(r.graph);
    auto cls = classify_vertices(r.graph, tabs);
    // The crater join has one entrance from above and two exits (dome and
    // below), but its attached-domain integrals have mixed signs.
    GraphPoint y;
    y.edge = -1;
    for (const auto& e : r.graph.edges)
        if ((e.lower == r.crater_join && e.upper == r.top_fork)) y.edge = e.id;
    REQUIRE(y.edge >= 0);
    y.z = 8.5;
    CHECK_THROWS_AS(stable_set(r.graph, tabs, cls, y), AmbiguousSign);
}

TEST_CASE("drift roots and interior stable targets", "[coeffs]") {
    auto r = make_reference_tree();
    auto tabs = make_reference_tables(r.graph);
    // Plant a sign change of bhat inside the start edge: attracting from above.
    for (auto& t : tabs) {
        if (t.edge != r.start_edge) continue;
        for (auto& row : t.rows) row.bhat = 0.4 * (9.0 - row.z);  // zero at z = 9
        for (auto& row : t.rows) row.bbar = row.bhat / row.v;
        fit_table_ends(t, r.graph, 2);
    }
    auto roots = drift_roots(r.graph, tabs);
    bool found = false;
    for (const auto& rt : roots)
        if (rt.edge == r.start_edge) {
            found = true;
            CHECK(rt.z == Catch::Approx(9.0).margin(1e-6));
            CHECK(rt.attracting);
        }
    REQUIRE(found);
    auto cls = classify_vertices(r.graph, tabs);
    GraphPoint y;
    y.edge = r.start_edge;
    y.z = 8.2;  // below the root: drift pushes up toward it
    auto ss = stable_set(r.graph, tabs, cls, y);
    REQUIRE(ss.targets.size() == 1);
    CHECK_FALSE(ss.targets[0].is_vertex);
    CHECK(ss.targets[0].z == Catch::Approx(9.0).margin(1e-6));
    CHECK(ss.targets[0].probability == 1.0);
}

TEST_CASE("upward drift at the ceiling violates confinement", "[coeffs]") {
    auto r = make_reference_tree();
    auto tabs = make_reference_tables(r.graph);
    for (auto& t : tabs) {
        if (t.edge != r.open_edge) continue;
        for (auto& row : t.rows) {
            row.bhat = std::fabs(row.bhat);
            row.bbar = row.bhat / row.v;
        }
        fit_table_ends(t, r.graph, 2);
    }
    auto cls = classify_vertices(r.graph, tabs);
    GraphPoint y;
    y.edge = r.open_edge;
    y.z = 10.5;
    CHECK_THROWS_AS(stable_set(r.graph, tabs, cls, y), AssumptionA8Violated);
}

TEST_CASE("table CSV round trip", "[coeffs]") {
    const auto& fx = h2();
    const auto& t = fx.tables[0];
    auto csv = table_to_csv(t);
    auto t2 = table_from_csv(csv);
    REQUIRE(t2.rows.size() == t.rows.size());
    CHECK(t2.edge == t.edge);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(t2.rows[i].z == t.rows[i].z);
        CHECK(t2.rows[i].V == t.rows[i].V);
        CHECK(t2.rows[i].h == t.rows[i].h);
        CHECK(t2.rows[i].bbar == t.rows[i].bbar);
        CHECK(t2.rows[i].se_v == t.rows[i].se_v);
    }
}

TEST_CASE("near-saddle log laws hold at smoke precision", "[coeffs]") {
    const auto& fx = h2();
    int e_pos = fx.well_edge(true);
    const auto& t = fx.table(e_pos);
    double bmin = 1e300, bmax = 0;
    for (const auto& r : t.rows) {
        double off = std::fabs(r.z);
        if (off < 3e-3 || off > 3e-2) continue;
        double v = std::fabs(r.bbar) * std::fabs(std::log(off));
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
    }
    CHECK((bmax - bmin) / (0.5 * (bmax + bmin)) < 0.25);
}
