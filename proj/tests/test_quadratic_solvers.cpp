#include <catch_amalgamated.hpp>

#include "agmas/benchgen.hpp"
#include "agmas/dense.hpp"
#include "agmas/solvers.hpp"
#include "test_helpers.hpp"

using namespace agmas;
using agmas::testing::problem_from_dense;
using agmas::testing::random_spd;

TEST_CASE("prox_lowrank_quadratic closed form") {
    SECTION("empty deflation is the identity prox") {
        LowRankDeflation none;
        none.dim = 2;
        const Vec y{3.0, -4.0};
        const Vec x = prox_lowrank_quadratic(none, 2.5, y);
        REQUIRE(x[0] == Catch::Approx(3.0));
        REQUIRE(x[1] == Catch::Approx(-4.0));
    }
    SECTION("scalar prox on one coordinate") {
        // deflation {(5, e1)} gives A1 = e1 e1', prox with L=1 at y=(2,2)
        LowRankDeflation defl;
        defl.dim = 2;
        defl.push(5.0, {1.0, 0.0});
        const Vec x = prox_lowrank_quadratic(defl, 1.0, {2.0, 2.0});
        REQUIRE(x[0] == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(x[1] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("random rank-3 deflation matches the dense solve") {
        Rng rng(41);
        const std::size_t d = 20;
        LowRankDeflation defl;
        defl.dim = d;
        for (int i = 0; i < 3; ++i) defl.push(0.5 + 2.0 * rng.uniform(), rng.unit_vector(d));
        const double L = 0.7;
        const Vec y = rng.gaussian_vector(d);
        const Vec x = prox_lowrank_quadratic(defl, L, y);

        DenseMatrix m(d);
        for (std::size_t i = 0; i < d; ++i) m(i, i) = L;
        for (int t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    m(i, j) += LowRankDeflation::scale * defl.coeffs[t] * defl.vecs[t][i] *
                               defl.vecs[t][j];
        Vec rhs(d);
        for (std::size_t i = 0; i < d; ++i) rhs[i] = -L * y[i];
        const Vec x_dense = direct_solve(m, rhs);
        for (std::size_t i = 0; i < d; ++i) REQUIRE(x[i] == Catch::Approx(x_dense[i]).margin(1e-10));

        // residual contract ||(A1 + LI)x - Ly|| <= 1e-10 L ||y||
        Vec resid = m.multiply(x);
        axpy(-L, y, resid);
        REQUIRE(nrm2(resid) <= 1e-10 * L * nrm2(y));
    }
    SECTION("duplicate directions keep the core solvable") {
        LowRankDeflation defl;
        defl.dim = 3;
        defl.push(4.0, {1.0, 0.0, 0.0});
        defl.push(3.2, {1.0, 0.0, 0.0});
        const Vec x = prox_lowrank_quadratic(defl, 1.0, {1.0, 1.0, 1.0});
        // A1 = (4+3.2)/5 e1e1' = 1.44 e1e1'; prox: 1/(1+1.44)
        REQUIRE(x[0] == Catch::Approx(1.0 / 2.44).margin(1e-12));
        REQUIRE(x[1] == Catch::Approx(1.0));
    }
}

TEST_CASE("prox_lowrank_quadratic random draws vs dense solve") {
    Rng rng(4242);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d = 4 + static_cast<std::size_t>(rng.uniform() * 12);
        const std::size_t r = 1 + static_cast<std::size_t>(rng.uniform() * 4);
        LowRankDeflation defl;
        defl.dim = d;
        for (std::size_t i = 0; i < r; ++i) defl.push(0.1 + 3.0 * rng.uniform(), rng.unit_vector(d));
        const double L = 0.05 + 2.0 * rng.uniform();
        const Vec y = rng.gaussian_vector(d);
        const Vec x = prox_lowrank_quadratic(defl, L, y);

        DenseMatrix m(d);
        for (std::size_t i = 0; i < d; ++i) m(i, i) = L;
        for (std::size_t t = 0; t < r; ++t)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    m(i, j) += LowRankDeflation::scale * defl.coeffs[t] * defl.vecs[t][i] *
                               defl.vecs[t][j];
        Vec resid = m.multiply(x);
        axpy(-L, y, resid);
        REQUIRE(nrm2(resid) <= 1e-10 * L * std::max(nrm2(y), 1e-6));
    }
}

TEST_CASE("accelerated_gradient solves simple quadratics") {
    SECTION("identity converges immediately") {
        QuadraticProblem p = problem_from_dense(DenseMatrix::identity(4), Vec(4, -1.0));
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        auto value = [&p](const Vec& x, const Vec& g) {
            return 0.5 * (dot(x, g) + dot(p.b, x));
        };
        AgdOptions o;
        o.L = 1.0;
        o.mu = 1.0;
        o.eps = 1e-10;
        const auto rep = accelerated_gradient(grad, value, zeros(4), o, ledger);
        REQUIRE(rep.converged);
        for (double xi : rep.x_hat) REQUIRE(xi == Catch::Approx(1.0).margin(2e-5));
        REQUIRE(ledger.grad_calls <= 30);
    }
    SECTION("diag(4,1) ends near the minimizer") {
        QuadraticProblem p = problem_from_dense(DenseMatrix::diagonal({4.0, 1.0}), {-4.0, -2.0});
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        auto value = [&p](const Vec& x, const Vec& g) {
            return 0.5 * (dot(x, g) + dot(p.b, x));
        };
        AgdOptions o;
        o.L = 4.0;
        o.mu = 1.0;
        o.eps = 1e-10;
        const auto rep = accelerated_gradient(grad, value, zeros(2), o, ledger);
        const double dist = std::sqrt(2.0 * o.eps / o.mu);
        REQUIRE(std::abs(rep.x_hat[0] - 1.0) <= dist);
        REQUIRE(std::abs(rep.x_hat[1] - 2.0) <= dist);
    }
    SECTION("call count within 20 sqrt(kappa) log(gap/eps) on a kappa = 1e4 instance") {
        const std::size_t d = 40;
        Vec spectrum(d);
        for (std::size_t i = 0; i < d; ++i)
            spectrum[i] = 1e4 - (1e4 - 1.0) * static_cast<double>(i) / (d - 1);
        Rng rng(31);
        const DenseMatrix a = random_spd(d, rng, spectrum);
        QuadraticProblem p = problem_from_dense(a, rng.unit_vector(d));
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        auto value = [&p](const Vec& x, const Vec& g) {
            return 0.5 * (dot(x, g) + dot(p.b, x));
        };
        AgdOptions o;
        o.L = 1e4;
        o.mu = 1.0;
        o.eps = 1e-8;
        const double f_gap = std::abs(dense_quadratic_value(a, p.b, direct_solve(a, p.b)));
        o.f_gap_bound = std::max(f_gap, 1.0);
        const auto rep = accelerated_gradient(grad, value, zeros(d), o, ledger);
        REQUIRE(rep.converged);
        const double bound = 20.0 * std::sqrt(1e4) * std::log(o.f_gap_bound / o.eps);
        REQUIRE(static_cast<double>(ledger.grad_calls) <= bound);
    }
}

TEST_CASE("conjugate_gradient finite termination") {
    SECTION("three distinct eigenvalues, three iterations") {
        QuadraticProblem p = problem_from_dense(DenseMatrix::diagonal({1.0, 2.0, 3.0}),
                                                {0.3, -1.2, 0.77});
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        const auto rep = conjugate_gradient(grad, 3, zeros(3), 1e-10, ledger);
        REQUIRE(rep.converged);
        REQUIRE(rep.iterations <= 3);
        const DenseMatrix a = dense_of(p);
        REQUIRE(quadratic_residual(a, p.b, rep.x_hat) <= 1e-10 * nrm2(p.b));
    }
    SECTION("identity solves in one iteration") {
        QuadraticProblem p = problem_from_dense(DenseMatrix::identity(5), Vec(5, 2.0));
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        const auto rep = conjugate_gradient(grad, 5, zeros(5), 1e-10, ledger);
        REQUIRE(rep.iterations <= 1);
    }
    SECTION("random SPD d=64 within the cap") {
        Rng rng(7);
        const DenseMatrix a = random_spd(64, rng, 0.1, 5.0);
        QuadraticProblem p = problem_from_dense(a, rng.gaussian_vector(64));
        OracleLedger ledger;
        auto grad = counting_gradient(p, ledger);
        const auto rep = conjugate_gradient(grad, 64, zeros(64), 1e-10, ledger);
        REQUIRE(rep.converged);
        REQUIRE(rep.iterations <= 69);
    }
}

TEST_CASE("agmas_solve dispatch and correctness") {
    SECTION("flat spectrum dispatches to agd in O(1) calls") {
        const std::size_t d = 16;
        QuadraticProblem p = problem_from_dense(DenseMatrix::identity(d), Vec(d, -1.0));
        OracleLedger ledger;
        AgmasConfig cfg;
        cfg.eps = 1e-9;
        cfg.mu = 1.0;
        const auto rep = agmas_solve(p, cfg, ledger);
        REQUIRE(rep.branch == "agd");
        for (double xi : rep.x_hat) REQUIRE(xi == Catch::Approx(1.0).margin(1e-4));
        REQUIRE(rep.objective == Catch::Approx(-0.5 * d).margin(1e-6));
        REQUIRE(ledger.grad_calls <= 120);
    }
    SECTION("power-law spectrum dispatches to prox-agd and solves to eps") {
        const std::size_t d = 128;
        const double mu = 1e-4;
        Vec spectrum(d);
        for (std::size_t i = 0; i < d; ++i) spectrum[i] = 1.0 / static_cast<double>(i + 1) + mu;
        Rng rng(97);
        const DenseMatrix a = random_spd(d, rng, spectrum);
        QuadraticProblem p = problem_from_dense(a, rng.unit_vector(d));
        OracleLedger ledger;
        AgmasConfig cfg;
        cfg.eps = 1e-8;
        cfg.mu = mu;
        const auto rep = agmas_solve(p, cfg, ledger);
        REQUIRE(rep.branch == "prox-agd");
        const Vec xstar = direct_solve(a, p.b);
        const double fstar = dense_quadratic_value(a, p.b, xstar);
        REQUIRE(rep.objective - fstar <= cfg.eps);
    }
    SECTION("tiny mu with small d dispatches to cg") {
        const std::size_t d = 30;
        Rng rng(13);
        const DenseMatrix a = random_spd(d, rng, 0.5, 2.0);
        QuadraticProblem p = problem_from_dense(a, rng.gaussian_vector(d));
        OracleLedger ledger;
        AgmasConfig cfg;
        cfg.eps = 1e-9;
        cfg.mu = 1e-12;
        const auto rep = agmas_solve(p, cfg, ledger);
        REQUIRE(rep.branch == "cg");
        REQUIRE(quadratic_residual(a, p.b, rep.x_hat) <= 1e-6 * nrm2(p.b));
    }
    SECTION("estimated mu path") {
        const std::size_t d = 24;
        Rng rng(19);
        const DenseMatrix a = random_spd(d, rng, 0.2, 2.0);
        QuadraticProblem p = problem_from_dense(a, rng.unit_vector(d));
        OracleLedger ledger;
        AgmasConfig cfg;
        cfg.eps = 1e-8;
        cfg.mu = 0.0;  // estimate
        const auto rep = agmas_solve(p, cfg, ledger);
        const Vec xstar = direct_solve(a, p.b);
        const double fstar = dense_quadratic_value(a, p.b, xstar);
        REQUIRE(rep.objective - fstar <= cfg.eps);
    }
}

TEST_CASE("agmas_solve oracle audit: ledger equals instrumented apply count") {
    const std::size_t d = 48;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 1.0 / static_cast<double>(i + 1) + 1e-3;
    Rng rng(59);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    auto holder = std::make_shared<DenseMatrix>(a);
    auto counter = std::make_shared<std::uint64_t>(0);
    QuadraticProblem p;
    p.dim = d;
    p.b = rng.unit_vector(d);
    p.mu_hint = 1e-3;
    p.dense_A = a.a;
    p.apply_A = [holder, counter](const Vec& x, Vec& y) {
        ++*counter;
        y = holder->multiply(x);
    };
    OracleLedger ledger;
    AgmasConfig cfg;
    cfg.eps = 1e-7;
    cfg.mu = 1e-3;
    const auto rep = agmas_solve(p, cfg, ledger);
    REQUIRE(rep.converged);
    REQUIRE(ledger.grad_calls == *counter);
}

TEST_CASE("agmas_solve trace has strictly increasing grad_calls") {
    const std::size_t d = 64;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 1.0 / static_cast<double>(i + 1) + 1e-3;
    Rng rng(61);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, rng.unit_vector(d), 1e-3);
    OracleLedger ledger;
    AgmasConfig cfg;
    cfg.eps = 1e-8;
    cfg.mu = 1e-3;
    cfg.trace_every = 5;
    const auto rep = agmas_solve(p, cfg, ledger);
    REQUIRE(rep.trace.size() >= 2);
    for (std::size_t i = 1; i < rep.trace.size(); ++i) {
        REQUIRE(rep.trace[i].first > rep.trace[i - 1].first);
        REQUIRE(std::isfinite(rep.trace[i].second));
    }
    // monotone certified objective: final report objective <= objective at x0 = 0
    REQUIRE(rep.objective <= 0.0 + 1e-12);
}

TEST_CASE("solve_to_eps_nonstrongly handles singular and chain problems") {
    SECTION("singular diagonal has a minimizing line") {
        QuadraticProblem p = problem_from_dense(DenseMatrix::diagonal({1.0, 0.0}), {-1.0, 0.0});
        OracleLedger ledger;
        const auto rep = solve_to_eps_nonstrongly(p, 1e-6, ledger);
        REQUIRE(rep.objective <= -0.5 + 1e-6);
    }
    SECTION("chain instance to 1e-4 against direct solve") {
        const auto gen = gen_nesterov_chain(100);
        OracleLedger ledger;
        const auto rep = solve_to_eps_nonstrongly(gen.problem, 1e-4, ledger);
        const DenseMatrix a = dense_of(gen.problem);
        const Vec xstar = direct_solve(a, gen.problem.b);
        const double fstar = dense_quadratic_value(a, gen.problem.b, xstar);
        REQUIRE(fstar == Catch::Approx(-0.5).margin(1e-9));
        REQUIRE(rep.objective - fstar <= 1e-4);
    }
}
