#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reebflow/coeffs.hpp"
#include "reebflow/field.hpp"
#include "reebflow/graphdiff.hpp"
#include "reebflow/mc.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/reeb_build.hpp"
#include "reebflow/sde.hpp"
#include "reebflow/stats.hpp"

using namespace reebflow;

namespace {

struct H2Sets {
    std::shared_ptr<const ScalarField> field = make_field("doublewell1d");
    ReebGraph graph;
    std::vector<EdgeCoefficientTable> with_drift, driftless;
    GluingWeights gw;
    int fork = -1;

    H2Sets() {
        ReebBuildOptions o;
        o.resolution = 384;
        graph = build_reeb_grid(field, find_critical_points(*field), o);
        TabulateOptions t;
        t.mc_samples = 4000000;
        t.seed = 303;
        auto a2 = ConstantMatrixModel::identity(2);
        ZeroField beta, zero_b;
        MomentumDrag b(0.5, 1);
        with_drift = tabulate_edges(graph, *a2, b, beta, t);
        driftless = tabulate_edges(graph, *a2, zero_b, beta, t);
        gw = gluing_weights(with_drift, graph);
        for (const auto& v : graph.vertices)
            if (v.is_fork()) fork = v.id;
    }
};

const H2Sets& h2() {
    static H2Sets s;
    return s;
}

}  // namespace

TEST_CASE("star solution satisfies the gluing condition", "[graphdiff]") {
    const auto& fx = h2();
    StarProblem star(fx.graph, fx.with_drift, fx.gw, 1e-3, fx.fork, 0.04);
    for (const auto& leg : star.legs())
        CHECK(star.gluing_residual(leg.edge) < 1e-9);
    auto probs = star.exit_probabilities();
    double sum = 0;
    for (auto& [e, p] : probs) {
        CHECK(p >= 0.0);
        sum += p;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("driftless exit distribution follows the gluing weights", "[graphdiff]") {
    const auto& fx = h2();
    auto gw0 = gluing_weights(fx.driftless, fx.graph);
    auto probs = vertex_exit_distribution(fx.graph, fx.driftless, gw0, 1e-3, fx.fork, 0.04);
    double p_up = probs.at(fx.graph.open_edge);
    double p_d0 = -1, p_d1 = -1;
    for (auto& [e, p] : probs)
        if (e != fx.graph.open_edge) (p_d0 < 0 ? p_d0 : p_d1) = p;
    // Symmetric wells: equal splits below; scale-function corrections keep
    // the up-edge share near its weight ratio 1/2.
    CHECK(std::fabs(p_d0 - p_d1) < 0.02);
    CHECK(p_up == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("small-delta exit probabilities approach the branch ratios", "[graphdiff]") {
    const auto& fx = h2();
    auto cls = classify_vertices(fx.graph, fx.with_drift);
    const VertexClassification* c = nullptr;
    for (const auto& k : cls)
        if (k.vertex == fx.fork) c = &k;
    REQUIRE(c);
    REQUIRE(c->branch.size() == 2);
    double prev_gap = 1e300;
    for (double d : {1e-2, 1e-3, 1e-4}) {
        auto probs = vertex_exit_distribution(fx.graph, fx.with_drift, fx.gw, d, fx.fork, 0.04);
        double gap = 0;
        for (auto& [e, p] : c->branch) gap = std::max(gap, std::fabs(probs.at(e) - p));
        CHECK(gap <= prev_gap + 1e-12);
        prev_gap = gap;
    }
    CHECK(prev_gap < 0.01);
}

TEST_CASE("mean exit time: boundary values, symmetry, and scaling band", "[graphdiff]") {
    const auto& fx = h2();
    StarProblem star(fx.graph, fx.with_drift, fx.gw, 1e-3, fx.fork, 0.04);
    CHECK(star.mean_exit_time_vertex() > 0.0);
    for (const auto& leg : star.legs()) {
        CHECK(star.mean_exit_time_from(leg.edge, 0.04) == Catch::Approx(0.0).margin(1e-9));
        CHECK(star.mean_exit_time_from(leg.edge, 0.02) >= 0.0);
    }
    // Symmetric lower legs (driftless tables make the symmetry cleaner).
    auto gw0 = gluing_weights(fx.driftless, fx.graph);
    StarProblem star0(fx.graph, fx.driftless, gw0, 1e-3, fx.fork, 0.04);
    std::vector<int> lowers;
    for (const auto& leg : star0.legs())
        if (leg.edge != fx.graph.open_edge) lowers.push_back(leg.edge);
    REQUIRE(lowers.size() == 2);
    double w0 = star0.mean_exit_time_from(lowers[0], 0.02);
    double w1 = star0.mean_exit_time_from(lowers[1], 0.02);
    CHECK(w0 == Catch::Approx(w1).epsilon(0.05));

    // h |ln h| scaling of the vertex exit time.
    GraphPoint at_vertex;
    at_vertex.edge = -1;
    double lo = 1e300, hi = 0;
    for (double h : {0.02, 0.04, 0.08}) {
        double w = mean_exit_time(fx.graph, fx.with_drift, fx.gw, 1e-3, fx.fork, h, at_vertex);
        double s = w / (h * std::fabs(std::log(h)));
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    CHECK(hi / lo < 2.0);
}

TEST_CASE("edge-interior increments have the right moments", "[graphdiff]") {
    const auto& fx = h2();
    GraphDiffusionConfig cfg;
    cfg.delta = 1e-3;
    cfg.dt = 1e-4;
    cfg.h_v = 0.04;
    cfg.T = cfg.dt;
    cfg.seed = 99;
    int well = -1;
    for (const auto& e : fx.graph.edges)
        if (!e.open) well = e.id;
    const EdgeCoefficientTable* tab = nullptr;
    for (const auto& t : fx.with_drift)
        if (t.edge == well) tab = &t;
    TableView view(*tab);
    for (int probe = 0; probe < 10; ++probe) {
        double z = tab->z_lo + (0.25 + 0.05 * probe) * tab->length();
        double drift = cfg.delta * (view.h(z + 1e-5) - view.h(z - 1e-5)) / (2e-5) /
                           (2.0 * view.v(z)) +
                       view.bbar(z);
        double diff = cfg.delta * view.a2bar(z);
        RunningStat inc;
        Rng rng(4, "mom", probe);
        const long long n = 400000;
        for (long long i = 0; i < n; ++i) {
            double dz = drift * cfg.dt + std::sqrt(diff * cfg.dt) * rng.normal();
            inc.add(dz);
        }
        CHECK(inc.mean() == Catch::Approx(drift * cfg.dt)
                                 .margin(3 * inc.stderr_mean() + 0.05 * std::fabs(drift * cfg.dt)));
        CHECK(inc.variance() == Catch::Approx(diff * cfg.dt).epsilon(0.05));
    }
}

TEST_CASE("excursion machinery is consistent across radii", "[graphdiff]") {
    const auto& fx = h2();
    // Exit distribution through a 3 h_v ball, simulated with excursions of
    // radius h_v, compared with the direct solve at 3 h_v.
    const double h_small = 0.02, h_big = 0.06;
    auto ref = vertex_exit_distribution(fx.graph, fx.with_drift, fx.gw, 1e-3, fx.fork, h_big);

    GraphDiffusionConfig cfg;
    cfg.delta = 1e-3;
    cfg.dt = 2e-6;
    cfg.h_v = h_small;
    cfg.T = 50.0;
    cfg.seed = 17;
    cfg.start.edge = fx.graph.open_edge;
    cfg.start.z = fx.graph.vertices[fx.fork].z + 1e-4;
    GraphDiffusionSimulator sim(fx.graph, fx.with_drift, fx.gw, cfg);
    double zf = fx.graph.vertices[fx.fork].z;
    std::map<int, long long> counts;
    const long long N = 4000;
    std::vector<int> result(N);
    parallel_for(N, 0, [&](long long i) {
        auto stop = [&](const GraphPoint& y, double) { return std::fabs(y.z - zf) >= h_big; };
        auto path = sim.run(i, &stop);
        result[i] = path.y.back().edge;
    });
    for (long long i = 0; i < N; ++i) ++counts[result[i]];
    for (auto& [e, p] : ref) {
        long long c = counts.count(e) ? counts.at(e) : 0;
        auto ci = wilson_interval(c, N, 3.0);
        INFO("edge " << e << " ref " << p << " in [" << ci.lo << "," << ci.hi << "]");
        CHECK((p >= ci.lo && p <= ci.hi));
    }
}

TEST_CASE("full SDE and graph diffusion agree on a confined edge", "[bridge]") {
    const auto& fx = h2();
    const double z0 = -0.15, T = 0.5, delta = 3e-3;
    int edge = -1;
    {
        Vec probe(2);
        probe << 0.0, 1.0;
        edge = fx.graph.project(probe).edge;
    }

    // Full SDE sample of H(X_T), started on the level component.
    const long long N = 400;
    std::vector<double> h_full(N);
    SdeConfig cfg;
    cfg.field = fx.field;
    cfg.epsilon = 1e-4;
    cfg.kappa = 0.05;
    cfg.delta = delta;
    cfg.T = T;
    cfg.dt = cfg.epsilon / 50.0;
    cfg.seed = 31;
    cfg.a2 = ConstantMatrixModel::identity(2);
    cfg.b = std::make_shared<MomentumDrag>(0.5, 1);
    parallel_for(N, 0, [&](long long i) {
        Rng rng(cfg.seed, "bridge", i);
        ShellSampler shell(fx.graph, edge, z0, 1e-4);
        SdeConfig local = cfg;
        local.x0 = shell.draw(rng);
        SdeStepper st(local);
        long long n = std::llround(T / local.dt);
        for (long long k = 0; k < n; ++k) st.step(rng);
        h_full[i] = st.energy();
    });

    // Graph diffusion sample of z(T) from the same start.
    GraphDiffusionConfig gcfg;
    gcfg.delta = delta;
    gcfg.dt = 5e-5;
    gcfg.h_v = 0.03;
    gcfg.T = T;
    gcfg.seed = 57;
    gcfg.start.edge = edge;
    gcfg.start.z = z0;
    GraphDiffusionSimulator sim(fx.graph, fx.with_drift, fx.gw, gcfg);
    std::vector<double> z_graph(N);
    parallel_for(N, 0, [&](long long i) { z_graph[i] = sim.run(i).y.back().z; });

    double d = ks_statistic(h_full, z_graph);
    double p = ks_pvalue(d, N, N);
    INFO("KS distance " << d << " p-value " << p);
    CHECK(p >= 0.01);
}
