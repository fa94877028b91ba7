#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "reebflow/field.hpp"
#include "reebflow/mc.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/reeb_build.hpp"
#include "reebflow/sde.hpp"

using namespace reebflow;

namespace {

const ReebGraph& h2_graph() {
    static ReebGraph g = [] {
        auto f = make_field("doublewell1d");
        ReebBuildOptions o;
        o.resolution = 384;
        return build_reeb_grid(f, find_critical_points(*f), o);
    }();
    return g;
}

SdeConfig base_h2() {
    SdeConfig cfg;
    cfg.field = make_field("doublewell1d");
    cfg.epsilon = 1e-2;
    cfg.kappa = 0.05;
    cfg.delta = 0.0;
    cfg.T = 0.2;
    cfg.dt = cfg.epsilon / 100.0;
    cfg.seed = 5;
    cfg.x0 = Vec(2);
    cfg.x0 << 0.3, 0.5;
    return cfg;
}

}  // namespace

TEST_CASE("tangential noise matrix identities", "[sde]") {
    auto f = make_field("doublewell1d");
    Rng rng(9, "probe", 0);
    for (int k = 0; k < 1000; ++k) {
        Vec x(2);
        x << rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5);
        Mat s = sigma1(*f, x);
        Mat a = s * s.transpose();
        Vec g = f->grad(x);
        CHECK((a * g).norm() <= 1e-12 * std::max(1.0, a.norm() * g.norm()));
    }
    // At grad H = (1, 0) the matrix is diag(0, 1).
    auto probe = std::make_shared<FunctionField>(
        2, f->box(), 2.0, "linear", [](const Vec& x) { return x[0]; },
        [](const Vec& x, Vec& g) {
            g.resize(2);
            g << 1.0, 0.0;
        },
        [](const Vec& x, Mat& h) { h.setZero(2, 2); });
    Vec x0 = Vec::Zero(2);
    Mat s = sigma1(*probe, x0);
    CHECK(s(0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(s(1, 1) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("divergence drift of the tangential noise", "[sde]") {
    auto f = make_field("doublewell1d");
    Rng rng(13, "probe", 1);
    for (int k = 0; k < 50; ++k) {
        Vec x(2);
        x << rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2);
        Vec analytic = a1_row_divergence(*f, x);
        const double e = 1e-6;
        for (int col = 0; col < 2; ++col) {
            double fd = 0;
            for (int i = 0; i < 2; ++i) {
                Vec xp = x, xm = x;
                xp[i] += e;
                xm[i] -= e;
                Mat ap = sigma1(*f, xp) * sigma1(*f, xp).transpose();
                Mat am = sigma1(*f, xm) * sigma1(*f, xm).transpose();
                fd += (ap(i, col) - am(i, col)) / (2 * e);
            }
            CHECK(analytic[col] == Catch::Approx(fd).margin(1e-5 * std::max(1.0, std::fabs(fd))));
        }
    }
}

TEST_CASE("tangential noise vanishes quadratically at criticals", "[sde]") {
    auto f = make_field("doublewell1d");
    Vec x0(2);
    x0 << 0.0, 1.0;  // minimum
    for (double r : {1e-2, 1e-3, 1e-4}) {
        Vec x = x0;
        x[0] += r;
        Mat a = sigma1(*f, x) * sigma1(*f, x).transpose();
        double lam = a.norm();
        CHECK(lam <= 10.0 * r * r);
    }
}

TEST_CASE("energy drift of the conservative-noise process stays tiny", "[sde]") {
    auto cfg = base_h2();
    SdeStepper st(cfg);
    Rng rng(cfg.seed, "sde", 0);
    double h0 = st.energy(), worst = 0;
    for (int k = 0; k < 2000; ++k) {
        st.step(rng);
        worst = std::max(worst, std::fabs(st.energy() - h0));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("conservative flow closes the harmonic orbit", "[sde]") {
    SdeConfig cfg;
    cfg.field = make_field("harmonic");
    cfg.epsilon = 1e-2;
    cfg.kappa = 0.0;
    cfg.T = 1.0;
    cfg.dt = cfg.epsilon / 1000.0;
    cfg.seed = 0;
    cfg.x0 = Vec(2);
    cfg.x0 << 1.0, 0.0;
    SdeStepper st(cfg);
    Rng rng(0, "x", 0);
    long long n = std::llround(2 * M_PI * cfg.epsilon / cfg.dt);
    for (long long k = 0; k < n; ++k) st.step(rng);
    double tau = n * cfg.dt / cfg.epsilon;
    Vec exact(2);
    exact << std::cos(tau), std::sin(tau);
    CHECK((st.state() - exact).norm() < 1e-6);
}

TEST_CASE("time change consistency of the deterministic part", "[sde]") {
    // (1/eps) fast flow + b over time T equals the eps = 1 system with the
    // drift scaled by eps over time T / eps, step by step.
    auto f = make_field("doublewell1d");
    SdeConfig a;
    a.field = f;
    a.epsilon = 1e-2;
    a.kappa = 0.0;
    a.T = 0.1;
    a.dt = a.epsilon / 100.0;
    a.b = std::make_shared<MomentumDrag>(0.5, 1);
    a.x0 = Vec(2);
    a.x0 << 0.4, 0.6;

    SdeConfig b = a;
    b.epsilon = 1.0;
    b.dt = a.dt / a.epsilon;
    b.T = a.T / a.epsilon;
    b.b = std::make_shared<MomentumDrag>(0.5 * a.epsilon, 1);

    SdeStepper sa(a), sb(b);
    Rng ra(1, "x", 0), rb(1, "x", 0);
    for (int k = 0; k < 200; ++k) {
        sa.step(ra);
        sb.step(rb);
    }
    CHECK((sa.state() - sb.state()).norm() < 1e-12);
}

TEST_CASE("identical seeds give identical paths", "[sde]") {
    auto cfg = base_h2();
    cfg.delta = 1e-2;
    cfg.a2 = ConstantMatrixModel::identity(2);
    cfg.b = std::make_shared<MomentumDrag>(0.5, 1);
    auto p1 = simulate_full(cfg, &h2_graph(), 3);
    auto p2 = simulate_full(cfg, &h2_graph(), 3);
    REQUIRE(p1.x.size() == p2.x.size());
    for (std::size_t i = 0; i < p1.x.size(); ++i) CHECK((p1.x[i] - p2.x[i]).norm() == 0.0);
    auto p3 = simulate_full(cfg, &h2_graph(), 4);
    CHECK((p3.x.back() - p1.x.back()).norm() > 0.0);
}

TEST_CASE("level crossings are logged with their edges", "[sde]") {
    auto cfg = base_h2();
    cfg.T = 3.0;
    cfg.delta = 2e-2;
    cfg.kappa = 0.05;
    cfg.a2 = ConstantMatrixModel::identity(2);
    cfg.b = std::make_shared<MomentumDrag>(0.8, 1);
    cfg.x0 << 1.2, 0.0;  // on the open edge, drifting downward
    auto path = simulate_full(cfg, &h2_graph(), 0);
    REQUIRE_FALSE(path.crossings.empty());
    bool saw_saddle = false;
    for (const auto& c : path.crossings)
        if (c.level == Catch::Approx(0.0).margin(1e-9)) {
            saw_saddle = true;
            CHECK(c.edge_before >= 0);
            CHECK(c.edge_after >= 0);
        }
    CHECK(saw_saddle);
}

TEST_CASE("ergodic averages", "[sde]") {
    auto cfg = base_h2();
    cfg.T = 30.0;
    double z = -0.05;
    cfg.x0 << std::sqrt(2.0 * (z + 0.25)), -1.0;
    double one = ergodic_average(cfg, [](const Vec&) { return 1.0; });
    CHECK(one == 1.0);
    double avg = ergodic_average(cfg, [](const Vec& x) { return x[1]; });
    double oracle = oracles::level_average(z, false, [](double q) { return q; });
    CHECK(avg == Catch::Approx(oracle).epsilon(0.02));
    CHECK_THROWS_AS(ergodic_average(cfg, [](const Vec& x) { return x[1]; }, 1e-14), LevelDrift);
}

TEST_CASE("one-step averages match the generator", "[sde]") {
    auto field = make_field("doublewell1d");
    SdeConfig cfg;
    cfg.field = field;
    cfg.epsilon = 1e-2;
    cfg.kappa = 0.05;
    cfg.delta = 1e-2;
    cfg.dt = cfg.epsilon / 100.0;
    cfg.T = cfg.dt;
    cfg.a2 = ConstantMatrixModel::identity(2);
    cfg.b = std::make_shared<MomentumDrag>(0.5, 1);
    cfg.seed = 77;

    Vec c(2);
    c << 0.2, 0.7;
    auto u = [&](const Vec& x) { return std::exp(-0.5 * (x - c).squaredNorm()); };
    auto grad_u = [&](const Vec& x) { return Vec(-(x - c) * u(x)); };
    auto hess_u = [&](const Vec& x) {
        Mat h = ((x - c) * (x - c).transpose() - Mat::Identity(2, 2)) * u(x);
        return h;
    };

    Vec probes[3];
    probes[0] = Vec(2);
    probes[0] << 0.5, 0.6;
    probes[1] = Vec(2);
    probes[1] << -0.3, -0.9;
    probes[2] = Vec(2);
    probes[2] << 0.8, 1.1;
    for (const auto& x0 : probes) {
        double lu = apply_generator(cfg, x0, u, grad_u, hess_u);
        RunningStat stat;
        const long long M = 400000;
        SdeConfig one = cfg;
        one.x0 = x0;
        std::vector<RunningStat> stats(16);
        parallel_for(16, 0, [&](long long chunk) {
            SdeConfig local = one;
            Rng rng(cfg.seed, "gen", chunk);
            for (long long i = 0; i < M / 16; ++i) {
                SdeStepper st(local);
                st.step(rng);
                stats[chunk].add(u(st.state()));
            }
        });
        for (const auto& s : stats) {
            stat.n += s.n;
            stat.sum += s.sum;
            stat.sumsq += s.sumsq;
        }
        double emp = (stat.mean() - u(x0)) / cfg.dt;
        double tol = 3 * stat.stderr_mean() / cfg.dt + 0.04 * std::fabs(lu) + 1e-3;
        CHECK(std::fabs(emp - lu) <= tol);
    }
}

TEST_CASE("exit statistics are symmetric and thread-count independent", "[sde]") {
    const ReebGraph& g = h2_graph();
    SdeConfig cfg;
    cfg.field = make_field("doublewell1d");
    cfg.epsilon = 2e-3;
    cfg.kappa = 0.05;
    cfg.delta = 1e-2;
    cfg.T = 6.0;
    cfg.dt = cfg.epsilon / 50.0;
    cfg.seed = 21;
    cfg.a2 = ConstantMatrixModel::identity(2);
    cfg.b = std::make_shared<MomentumDrag>(0.5, 1);
    cfg.x0 = Vec::Zero(2);
    int fork = -1;
    for (const auto& v : g.vertices)
        if (v.is_fork()) fork = v.id;
    auto st1 = first_exit_stats(cfg, g, fork, g.vertices[fork].edges_above[0], 0.05, 0.025, 200, 1);
    auto st2 = first_exit_stats(cfg, g, fork, g.vertices[fork].edges_above[0], 0.05, 0.025, 200, 2);
    REQUIRE(st1.counts == st2.counts);
    CHECK(st1.timeouts == st2.timeouts);
    long long down = 0;
    for (auto& [e, c] : st1.counts)
        if (e != g.open_edge) down += c;
    CHECK(down > 100);
}
