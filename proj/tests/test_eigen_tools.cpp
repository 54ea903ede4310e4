#include <catch_amalgamated.hpp>

#include "agmas/dense.hpp"
#include "agmas/eigen_tools.hpp"
#include "test_helpers.hpp"

using namespace agmas;
using agmas::testing::problem_from_dense;
using agmas::testing::random_spd;

namespace {

CountedOp op_of(const DenseMatrix& m, OracleLedger& ledger) {
    auto holder = std::make_shared<DenseMatrix>(m);
    return CountedOp{m.n, [holder](const Vec& x, Vec& y) { y = holder->multiply(x); }, &ledger,
                     CountedOp::Kind::grad};
}

}  // namespace

TEST_CASE("shift_invert_leading finds the top Rayleigh pair") {
    OracleLedger ledger;

    SECTION("diag(3,1,0.5)") {
        auto op = op_of(DenseMatrix::diagonal({3.0, 1.0, 0.5}), ledger);
        ShiftInvertOptions opts;
        opts.delta = 0.5;
        opts.eps_leak = 1e-6;
        const auto r = shift_invert_leading(op, opts);
        REQUIRE(r.ok);
        REQUIRE(r.rayleigh >= 1.5);
        REQUIRE(std::abs(r.rayleigh - 3.0) < 0.05);
        REQUIRE(ledger.grad_calls == r.applies);
    }

    SECTION("identity: any unit vector is fine") {
        auto op = op_of(DenseMatrix::identity(5), ledger);
        ShiftInvertOptions opts;
        opts.delta = 0.5;
        opts.eps_leak = 1e-6;
        const auto r = shift_invert_leading(op, opts);
        REQUIRE(r.ok);
        REQUIRE(r.rayleigh >= (1.0 - opts.delta) * (1.0 - opts.eps_leak));
        REQUIRE(nrm2(r.w) == Catch::Approx(1.0).margin(1e-10));
    }

    SECTION("planted spike forces alignment") {
        Vec spectrum(50, 1.0);
        spectrum[0] = 100.0;
        auto op = op_of(DenseMatrix::diagonal(spectrum), ledger);
        ShiftInvertOptions opts;
        opts.delta = 0.5;
        opts.eps_leak = 1e-6;
        const auto r = shift_invert_leading(op, opts);
        REQUIRE(r.ok);
        REQUIRE(std::abs(r.w[0]) >= 0.99);
    }
}

TEST_CASE("shift_invert_leading leakage bound on random PSD instances") {
    Rng rng(2718);
    int pass = 0;
    const int total = 50;
    for (int t = 0; t < total; ++t) {
        const std::size_t d = 8 + static_cast<std::size_t>(rng.uniform() * 24);
        const DenseMatrix a = random_spd(d, rng, 0.05, 3.0);
        OracleLedger ledger;
        auto op = op_of(a, ledger);
        ShiftInvertOptions opts;
        opts.delta = 0.5;
        opts.eps_leak = 1e-8;
        opts.seed = 1000 + t;
        const auto r = shift_invert_leading(op, opts);
        if (!r.ok) continue;
        const auto eig = dense_eigendecomposition(a);
        const double lam1 = eig.lambda_max();
        if (r.rayleigh < (1.0 - opts.delta) * (1.0 - opts.eps_leak) * lam1) continue;
        double leak = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (eig.eigenvalues[i] <= (1.0 - opts.delta) * lam1) {
                const double c = dot(r.w, eig.vector(i));
                leak += c * c;
            }
        }
        if (leak <= 2.0 * opts.eps_leak) ++pass;
    }
    REQUIRE(pass >= 49);
}

TEST_CASE("estimate_smallest_eigenvalue within a factor of two") {
    SECTION("identity") {
        OracleLedger ledger;
        auto op = op_of(DenseMatrix::identity(4), ledger);
        const auto est = estimate_smallest_eigenvalue(op);
        REQUIRE(est.verified);
        REQUIRE(est.mu_hat >= 0.5);
        REQUIRE(est.mu_hat <= 2.0);
    }
    SECTION("diag(10,1,0.1)") {
        OracleLedger ledger;
        auto op = op_of(DenseMatrix::diagonal({10.0, 1.0, 0.1}), ledger);
        const auto est = estimate_smallest_eigenvalue(op);
        REQUIRE(est.verified);
        REQUIRE(est.mu_hat >= 0.05);
        REQUIRE(est.mu_hat <= 0.2);
    }
    SECTION("diag(1..100)/100") {
        Vec spectrum(100);
        for (int i = 0; i < 100; ++i) spectrum[i] = (i + 1) / 100.0;
        OracleLedger ledger;
        auto op = op_of(DenseMatrix::diagonal(spectrum), ledger);
        const auto est = estimate_smallest_eigenvalue(op);
        REQUIRE(est.verified);
        REQUIRE(est.mu_hat >= 0.005);
        REQUIRE(est.mu_hat <= 0.02);
    }
}

TEST_CASE("eigen_extract stops on target level for the flat spectrum") {
    QuadraticProblem p = problem_from_dense(DenseMatrix::identity(12), zeros(12));
    OracleLedger ledger;
    ExtractorConfig cfg;
    cfg.accuracy = 0.1;
    const auto rep = eigen_extract(p, cfg, TargetLevel{1, 1.0}, ledger);
    REQUIRE(rep.fired == ExtractStop::target_level);
    REQUIRE(rep.deflation.rank() == 1);
    REQUIRE(rep.a_history[0] == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("eigen_extract flattens two spikes down to the 8*lambda_3 level") {
    Vec spectrum(100, 0.01);
    spectrum[0] = 10.0;
    spectrum[1] = 10.0;
    Rng rng(31);
    const DenseMatrix a = random_spd(100, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, zeros(100));

    SECTION("target level l=3 runs the spikes down") {
        OracleLedger ledger;
        ExtractorConfig cfg;
        cfg.accuracy = 0.01;
        const auto rep = eigen_extract(p, cfg, TargetLevel{3, 0.01}, ledger);
        REQUIRE(rep.fired == ExtractStop::target_level);

        const DenseMatrix residual = dense_deflated(a, rep.deflation);
        const auto eig = dense_eigendecomposition(residual);
        REQUIRE(eig.lambda_max() <= 8.0 * 0.01);
        // the two spikes need about log_{5/4}(10/0.08) ~ 22 hits each
        REQUIRE(rep.deflation.rank() >= 30);
        REQUIRE(rep.deflation.rank() <= 70);
        // bottom of the spectrum is preserved
        REQUIRE(eig.lambda_min() >= 0.01 - cfg.accuracy * 0.5);
    }

    SECTION("adaptive mode stops once extraction cost matches the AGD budget") {
        OracleLedger ledger;
        ExtractorConfig cfg;
        cfg.mu_target = 0.01;
        const auto rep = eigen_extract(p, cfg, std::nullopt, ledger);
        // mu_target^{-1/2} = 10 fires before the spikes are fully flattened
        REQUIRE(rep.fired == ExtractStop::crit_mu_sqrt);
        REQUIRE(rep.deflation.rank() == 10);
    }
}

TEST_CASE("eigen_extract adaptive criteria fire at the expected order on a power law") {
    // lambda_i = 1/i + mu, d = 200
    const std::size_t d = 200;
    const double mu = 1e-4;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 1.0 / static_cast<double>(i + 1) + mu;
    Rng rng(57);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, zeros(d));
    OracleLedger ledger;
    ExtractorConfig cfg;
    cfg.mu_target = mu / 2.0;
    const auto rep = eigen_extract(p, cfg, std::nullopt, ledger);
    REQUIRE(rep.fired == ExtractStop::crit_mu);
    // k = Theta((1/mu)^{1/3}) up to logs: expect within a generous band
    const double k = static_cast<double>(rep.deflation.rank());
    REQUIRE(k >= 10.0);
    REQUIRE(k <= 120.0);
    // fired condition holds with the recorded Rayleigh
    REQUIRE(k >= cfg.stop_const * std::sqrt(rep.a_last() / cfg.mu_target));
}

TEST_CASE("eigen_extract preserves the bottom eigenvalue along every prefix") {
    const std::size_t d = 48;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = std::pow(0.75, static_cast<double>(i)) + 0.02;
    Rng rng(91);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, zeros(d));
    OracleLedger ledger;
    ExtractorConfig cfg;
    cfg.mu_target = 0.02;
    const auto rep = eigen_extract(p, cfg, std::nullopt, ledger);

    const double lam_min = dense_eigendecomposition(a).lambda_min();
    const double eps0 = cfg.mu_target / (100.0 * d * d);
    LowRankDeflation prefix;
    prefix.dim = d;
    for (std::size_t k = 0; k < rep.deflation.rank(); ++k) {
        prefix.push(rep.deflation.coeffs[k], rep.deflation.vecs[k]);
        const auto eig = dense_eigendecomposition(dense_deflated(a, prefix));
        REQUIRE(eig.lambda_min() >= lam_min - static_cast<double>(k + 1) * eps0 - 1e-12);
    }
}

TEST_CASE("eigen_extract potential decay per deflation step") {
    // S_i^{(k)} = sum over eigenvalues >= rho^{i-1} lambda_l of the excess,
    // dropping by at least lambda_l rho^{i-1} / 5 per step while
    // lambda_max(A_k) >= lambda_l rho^i.
    const std::size_t d = 32;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 16.0 * std::pow(0.55, static_cast<double>(i)) + 0.05;
    Rng rng(113);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, zeros(d));
    OracleLedger ledger;
    ExtractorConfig cfg;
    cfg.mu_target = 0.05;
    const auto rep = eigen_extract(p, cfg, std::nullopt, ledger);
    REQUIRE(rep.deflation.rank() >= 4);

    const std::size_t l = 3;
    const double lambda_l = spectrum[l - 1];
    const double rho = 2.0 / ((1.0 - 0.5) * (1.0 - 1e-9));  // ~4 with delta = 1/2

    auto potential = [&](const Vec& eigs, int i) {
        const double level = std::pow(rho, i - 1) * lambda_l;
        double s = 0.0;
        for (double lv : eigs)
            if (lv >= level) s += lv - level;
        return s;
    };

    LowRankDeflation prefix;
    prefix.dim = d;
    Vec eig_prev = dense_eigendecomposition(a).eigenvalues;
    for (std::size_t k = 0; k < rep.deflation.rank(); ++k) {
        prefix.push(rep.deflation.coeffs[k], rep.deflation.vecs[k]);
        const Vec eig_now = dense_eigendecomposition(dense_deflated(a, prefix)).eigenvalues;
        for (int i = 1; i <= 3; ++i) {
            if (eig_prev.front() >= std::pow(rho, i) * lambda_l) {
                const double drop = potential(eig_prev, i) - potential(eig_now, i);
                REQUIRE(drop >= std::pow(rho, i - 1) * lambda_l / 5.0 - 1e-9);
            }
        }
        eig_prev = eig_now;
    }
}

TEST_CASE("eigen_extract oracle budget stays within the logged envelope") {
    const std::size_t d = 64;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) spectrum[i] = 1.0 / static_cast<double>(i + 1) + 1e-3;
    Rng rng(211);
    const DenseMatrix a = random_spd(d, rng, spectrum);
    QuadraticProblem p = problem_from_dense(a, zeros(d));
    OracleLedger ledger;
    ExtractorConfig cfg;
    cfg.mu_target = 5e-4;
    const auto rep = eigen_extract(p, cfg, std::nullopt, ledger);
    const double r = static_cast<double>(rep.deflation.rank());
    const double logs = std::log(static_cast<double>(d) / cfg.mu_target);
    const double envelope = 200.0 * r * logs * logs;
    INFO("calls=" << rep.oracle_calls << " envelope=" << envelope << " rank=" << r);
    REQUIRE(static_cast<double>(rep.oracle_calls) <= envelope);
    REQUIRE(ledger.grad_calls == rep.oracle_calls);
}
