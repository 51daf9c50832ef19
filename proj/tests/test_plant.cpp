#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icmpc/datagen.hpp"
#include "icmpc/plant.hpp"

#include <cmath>
#include <fstream>

using namespace icmpc;
using namespace icmpc::plant;

namespace {

// Independent restatement of the benchmark map, kept deliberately different
// in structure from the library version.
Eigen::Vector2d toy_oracle(double x1, double x2, double u1, double u2)
{
    Eigen::Vector2d out;
    out[0] = x1 * x1 / 2.0;
    out[0] -= x2;
    out[0] += std::sin(u1);
    out[0] -= std::cos(u2);
    out[1] = x2 * x2 / 2.0;
    out[1] -= x1;
    out[1] += std::sin(u2);
    out[1] -= std::cos(u1);
    return out;
}

} // namespace

TEST_CASE("toy_step: hand-checked points")
{
    Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    Eigen::Vector2d r = toy_step(zero, zero);
    CHECK(r[0] == -1.0);
    CHECK(r[1] == -1.0);

    r = toy_step({1.5, -1.0}, zero);
    CHECK(r[0] == doctest::Approx(1.125));
    CHECK(r[1] == doctest::Approx(-2.0));

    const double h = std::acos(-1.0) / 2.0;
    r = toy_step(zero, {h, h});
    CHECK(r[0] == doctest::Approx(1.0));
    CHECK(r[1] == doctest::Approx(1.0));
}

TEST_CASE("toy_step: matches the independent oracle on random inputs")
{
    Rng rng(101);
    for (int i = 0; i < 10000; ++i) {
        const double x1 = rng.uniform(-3, 3), x2 = rng.uniform(-3, 3);
        const double u1 = rng.uniform(-10, 10), u2 = rng.uniform(-10, 10);
        Eigen::Vector2d got = toy_step({x1, x2}, {u1, u2});
        Eigen::Vector2d want = toy_oracle(x1, x2, u1, u2);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("cstr_rhs: near-zero residual at the steady state")
{
    CstrParams p;
    Eigen::Vector2d d = cstr_rhs(p, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero());

    // dominant constituent terms at the steady state
    const double flow_ca = p.F / p.V * (p.CA0s - p.CAs);
    const double flow_t = p.F / p.V * (p.T0 - p.Ts);
    CHECK(std::abs(d[0]) < 0.01 * std::abs(flow_ca));
    CHECK(std::abs(d[1]) < 0.01 * std::abs(flow_t));
}

TEST_CASE("cstr_rhs: heat input enters linearly in the temperature balance")
{
    CstrParams p;
    Eigen::Vector2d base = cstr_rhs(p, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero());
    Eigen::Vector2d heated = cstr_rhs(p, Eigen::Vector2d::Zero(), {0.0, 5e5});
    CHECK(heated[0] == base[0]);
    CHECK(heated[1] - base[1] == doctest::Approx(5e5 / (p.rho * p.Cp * p.V)).epsilon(1e-12));
}

TEST_CASE("cstr_rhs: zero concentration kills the reaction terms")
{
    CstrParams p;
    Eigen::Vector2d d = cstr_rhs(p, {-p.CAs, 0.0}, Eigen::Vector2d::Zero());
    CHECK(d[0] == doctest::Approx(p.F / p.V * p.CA0s).epsilon(1e-12)); // = 20
    CHECK(d[0] == doctest::Approx(20.0));
}

TEST_CASE("cstr_rhs: non-physical temperature is rejected")
{
    CstrParams p;
    CHECK_THROWS_AS(cstr_rhs(p, {0.0, -p.Ts - 1.0}, Eigen::Vector2d::Zero()), std::domain_error);
}

TEST_CASE("integrate_hold: exponential decay to 1e-10")
{
    auto rhs = [](const Vec& x, const Vec&) -> Vec { return -x; };
    Vec x0 = Vec::Constant(1, 1.0);
    Vec got = integrate_hold(rhs, x0, Vec::Zero(1), 0.01, 1);
    CHECK(std::abs(got[0] - std::exp(-0.01)) <= 1e-10);
}

TEST_CASE("integrate_hold: fourth-order self convergence on the reactor")
{
    CstrParams p;
    auto rhs = [&](const Vec& x, const Vec& u) -> Vec {
        return cstr_rhs(p, Eigen::Vector2d(x[0], x[1]), Eigen::Vector2d(u[0], u[1]));
    };
    Vec x0(2), u(2);
    x0 << 0.9, 45.0;
    u << 1.0, 2e5;
    const double dt = 0.01;

    Vec ref = integrate_hold(rhs, x0, u, dt, 160); // 10x oversampled reference
    const double e1 = (integrate_hold(rhs, x0, u, dt, 8) - ref).norm();
    const double e2 = (integrate_hold(rhs, x0, u, dt, 16) - ref).norm();
    const double order = std::log2(e1 / e2);
    CHECK(order >= 3.9);
    CHECK(order <= 4.6);
}

TEST_CASE("integrate_hold: substeps < 1 rejected")
{
    auto rhs = [](const Vec& x, const Vec&) -> Vec { return -x; };
    CHECK_THROWS_AS(integrate_hold(rhs, Vec::Ones(1), Vec::Zero(1), 0.1, 0), std::invalid_argument);
}

TEST_CASE("cstr drifts only slowly from the unstable steady state")
{
    PlantSim sim;
    sim.kind = PlantKind::cstr;
    Vec x = Vec::Zero(2);
    for (int i = 0; i < 20; ++i) x = sim.advance(x, Vec::Zero(2), 0.01);
    // regression snapshot: stays within a small ball over 20 periods
    CHECK(std::abs(x[0]) < 0.05);
    CHECK(std::abs(x[1]) < 2.0);
}

TEST_CASE("generate_openloop_dataset: shapes, abs variant, determinism")
{
    PlantSim sim;
    sim.kind = PlantKind::toy;
    OpenLoopSpec spec;
    spec.x_box = Box(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    spec.u_box = Box(Vec::Constant(2, -10.0), Vec::Constant(2, 10.0));
    spec.n_traj = 200;
    spec.horizon = 2;
    spec.dt = 1.0;
    spec.seed = 5;

    auto sets = generate_openloop_dataset(sim, spec);
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].samples.cols() == 2 + 2);
    CHECK(sets[1].samples.cols() == 2 + 4);
    CHECK(sets[0].rows() >= sets[1].rows()); // truncation can only shrink later steps
    for (const auto& d : sets) CHECK(d.samples.rows() == d.labels.rows());

    // labels stay within the truncation envelope
    const double cap = 1.2 * 2.0;
    CHECK(sets[0].labels.cwiseAbs().maxCoeff() <= cap);
    CHECK(sets[1].labels.cwiseAbs().maxCoeff() <= cap);

    Dataset abs = sets[0].abs_labels();
    CHECK((abs.labels - sets[0].labels.cwiseAbs()).cwiseAbs().maxCoeff() == 0.0);

    // byte-identical CSV for the same seed
    auto sets2 = generate_openloop_dataset(sim, spec);
    sets[0].write_csv("/tmp/icmpc_gen_a.csv");
    sets2[0].write_csv("/tmp/icmpc_gen_b.csv");
    std::ifstream a("/tmp/icmpc_gen_a.csv"), b("/tmp/icmpc_gen_b.csv");
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
}

TEST_CASE("generate_openloop_dataset: degenerate boxes rejected")
{
    PlantSim sim;
    sim.kind = PlantKind::toy;
    OpenLoopSpec spec;
    spec.x_box = Box(Vec::Constant(2, 1.0), Vec::Constant(2, 1.0) * 1.0); // lo == hi
    spec.u_box = Box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    CHECK_THROWS_AS(generate_openloop_dataset(sim, spec), std::invalid_argument);
}
