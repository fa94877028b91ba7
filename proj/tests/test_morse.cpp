#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reebflow/field.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/rng.hpp"

using namespace reebflow;

namespace {

std::shared_ptr<const ScalarField> quartic_1d() {
    // H(q) = q^4: degenerate critical point at the origin.
    Box b;
    b.lo = Vec::Constant(1, -1.0);
    b.hi = Vec::Constant(1, 1.0);
    return std::make_shared<FunctionField>(
        1, b, 0.5, "quartic",
        [](const Vec& x) { return std::pow(x[0], 4); },
        [](const Vec& x, Vec& g) {
            g.resize(1);
            g[0] = 4 * std::pow(x[0], 3);
        },
        [](const Vec& x, Mat& h) {
            h.resize(1, 1);
            h(0, 0) = 12 * x[0] * x[0];
        });
}

}  // namespace

TEST_CASE("two-well potential critical points", "[morse]") {
    auto f1 = std::make_shared<DoubleWell1D>();
    auto crit = find_critical_points(*f1);
    REQUIRE(crit.size() == 3);
    CHECK(crit[0].x[0] == Catch::Approx(-1.0).margin(1e-8));
    CHECK(crit[1].x[0] == Catch::Approx(1.0).margin(1e-8));
    CHECK(crit[2].x[0] == Catch::Approx(0.0).margin(1e-8));
    CHECK(crit[0].index == 0);
    CHECK(crit[1].index == 0);
    CHECK(crit[2].index == 1);
    CHECK(crit[0].z == Catch::Approx(-0.25).margin(1e-12));
}

TEST_CASE("two-well Hamiltonian saddle classification", "[morse]") {
    auto h2 = make_field("doublewell1d");
    auto crit = find_critical_points(*h2);
    REQUIRE(crit.size() == 3);
    // Saddle at the origin: Hessian diag(1, -1).
    const auto& saddle = crit[2];
    CHECK(saddle.index == 1);
    CHECK(saddle.eigenvalues[0] == Catch::Approx(-1.0).margin(1e-8));
    CHECK(saddle.eigenvalues[1] == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("degenerate critical point is rejected", "[morse]") {
    CHECK_THROWS_AS(find_critical_points(*quartic_1d()), DegenerateCritical);
}

TEST_CASE("critical indices stable under seed refinement", "[morse]") {
    auto s4 = make_field("sep4d", 0.1);
    CriticalSearchOptions a, b;
    a.seeds_per_axis = 8;
    b.seeds_per_axis = 12;
    auto fa = find_critical_points(*s4->potential(), a);
    auto fb = find_critical_points(*s4->potential(), b);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].index == fb[i].index);
        CHECK(fa[i].z == Catch::Approx(fb[i].z).margin(1e-9));
    }
}

TEST_CASE("symplectic gradient closed forms", "[morse]") {
    auto harm = make_field("harmonic");
    Vec x(2);
    x << 1.0, 0.0;
    Vec v = symplectic_gradient(*harm, x);
    CHECK(v[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(v[1] == Catch::Approx(1.0).margin(1e-15));

    auto h2 = make_field("doublewell1d");
    x << 0.5, 0.5;
    v = symplectic_gradient(*h2, x);
    CHECK(v[0] == Catch::Approx(0.375).margin(1e-14));
    CHECK(v[1] == Catch::Approx(0.5).margin(1e-14));

    auto odd = std::make_shared<DoubleWell1D>();
    CHECK_THROWS_AS(symplectic_gradient(*odd, Vec::Constant(1, 0.3)), OddDimension);
}

TEST_CASE("symplectic gradient orthogonal to the gradient", "[morse]") {
    Rng rng(7, "probe", 0);
    for (const auto& name : {std::string("doublewell1d"), std::string("sep4d")}) {
        auto f = make_field(name, 0.1);
        for (int k = 0; k < 1000; ++k) {
            Vec x(f->dim());
            for (int i = 0; i < f->dim(); ++i)
                x[i] = rng.uniform(f->box().lo[i], f->box().hi[i]);
            Vec g = f->grad(x);
            Vec v = symplectic_gradient(*f, x);
            double denom = g.norm() * v.norm();
            if (denom == 0) continue;
            CHECK(std::fabs(g.dot(v)) <= 1e-12 * denom);
        }
    }
}

TEST_CASE("analytic derivatives match finite differences", "[morse]") {
    Rng rng(11, "probe", 1);
    for (const auto& name :
         {std::string("harmonic"), std::string("doublewell1d"), std::string("doublewell2d"),
          std::string("sep4d")}) {
        auto f = make_field(name, 0.07);
        for (int k = 0; k < 100; ++k) {
            Vec x(f->dim());
            for (int i = 0; i < f->dim(); ++i)
                x[i] = rng.uniform(f->box().lo[i] * 0.9, f->box().hi[i] * 0.9);
            Vec g = f->grad(x);
            const double e = 1e-5;
            for (int i = 0; i < f->dim(); ++i) {
                Vec xp = x, xm = x;
                xp[i] += e;
                xm[i] -= e;
                double fd = (f->value(xp) - f->value(xm)) / (2 * e);
                CHECK(g[i] == Catch::Approx(fd).margin(1e-5 * std::max(1.0, std::fabs(g[i]))));
            }
            Mat h = f->hess(x);
            CHECK((h - h.transpose()).norm() == 0.0);
        }
    }
}

TEST_CASE("assumption report", "[morse]") {
    auto h2 = make_field("doublewell1d");
    auto crit = find_critical_points(*h2);
    auto rep = check_assumptions(*h2, crit);
    // Largest Hessian eigenvalue over criticals: F1''(+-1) = 2.
    CHECK(rep.lambda_star == Catch::Approx(2.0).margin(1e-8));
    // Symmetric wells share the critical value: the conservative value
    // separation check must flag it.
    CHECK_FALSE(rep.values_separated);
    CHECK(rep.ceiling_ok);
    CHECK(rep.growth_ok);
    CHECK(rep.admissible_kappa(0.05));

    auto harm = make_field("harmonic");
    auto hcrit = find_critical_points(*harm);
    auto hrep = check_assumptions(*harm, hcrit);
    // H = |x|^2/2: quadratic growth with H >= 0.5 |x|^2 and |grad H| = |x|.
    CHECK(hrep.c1 == Catch::Approx(0.5).margin(1e-12));
    CHECK(hrep.c2 == Catch::Approx(1.0).margin(1e-12));
    CHECK(hrep.values_separated);
}
