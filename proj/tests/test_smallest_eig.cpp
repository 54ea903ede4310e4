#include <catch_amalgamated.hpp>

#include "agmas/dense.hpp"
#include "agmas/eigen_tools.hpp"
#include "test_helpers.hpp"

using namespace agmas;
using agmas::testing::random_spd;

namespace {

CountedOp op_of(const DenseMatrix& m, OracleLedger& ledger) {
    auto holder = std::make_shared<DenseMatrix>(m);
    return CountedOp{m.n, [holder](const Vec& x, Vec& y) { y = holder->multiply(x); }, &ledger,
                     CountedOp::Kind::grad};
}

}  // namespace

TEST_CASE("stage 1 on PSD input always ends in the estimate branch") {
    OracleLedger ledger;
    auto op = op_of(DenseMatrix::identity(6), ledger);
    const auto out = smallest_eig_stage1(op, 1e-3, ledger);
    REQUIRE(out.is_estimate);
    REQUIRE(out.lambda_hat == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("stage 1 on an indefinite diagonal satisfies one of the two contracts") {
    OracleLedger ledger;
    const DenseMatrix a = DenseMatrix::diagonal({1.0, -0.5});
    auto op = op_of(a, ledger);
    const auto out = smallest_eig_stage1(op, 1e-3, ledger);
    if (out.is_estimate) {
        REQUIRE(out.lambda_hat == Catch::Approx(-0.5).margin(1e-3));
    } else {
        REQUIRE(out.a_s <= 3.0);  // a_s <= -6 lambda_d = 3
        // 2 a_s I - A_s must be PSD: A_s = (delta_k - u) I + A - deflation
        const double shift = out.state.delta_k - out.state.u;
        DenseMatrix as = a;
        for (std::size_t i = 0; i < a.n; ++i) as(i, i) += shift;
        as = dense_deflated(as, out.handoff_deflation);
        const auto eig = dense_eigendecomposition(as);
        REQUIRE(2.0 * out.a_s - eig.lambda_max() >= -1e-9);
    }
}

TEST_CASE("stage 1 linspace spectrum estimate") {
    // diag(1, 0.9, ..., -0.9), d = 20
    const std::size_t d = 20;
    Vec spectrum(d);
    for (std::size_t i = 0; i < d; ++i)
        spectrum[i] = 1.0 - 1.9 * static_cast<double>(i) / static_cast<double>(d - 1);
    OracleLedger ledger;
    auto op = op_of(DenseMatrix::diagonal(spectrum), ledger);
    const auto out = smallest_eig_stage1(op, 1e-3, ledger);
    if (out.is_estimate) REQUIRE(out.lambda_hat == Catch::Approx(-0.9).margin(1e-3));
}

TEST_CASE("stage 2 recovers the top eigenvalue of a PSD handoff matrix") {
    SECTION("flat spectrum goes through the fine shift-invert branch") {
        OracleLedger ledger;
        DenseMatrix m = DenseMatrix::identity(12);
        for (std::size_t i = 0; i < 12; ++i) m(i, i) = 0.7;
        auto op = op_of(m, ledger);
        const double lam = smallest_eig_stage2(op, 1e-2, ledger);
        REQUIRE(lam >= 0.7 - 0.5e-2);
        REQUIRE(lam <= 0.7 + 0.5e-2);
    }
    SECTION("sharp decay goes through simultaneous iteration") {
        Vec spectrum{2.0, 1.0, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005};
        Rng rng(5);
        const DenseMatrix m = random_spd(10, rng, spectrum);
        OracleLedger ledger;
        auto op = op_of(m, ledger);
        const double lam = smallest_eig_stage2(op, 1e-2, ledger);
        REQUIRE(lam == Catch::Approx(2.0).margin(0.5e-2));
    }
    SECTION("0.1 relative gap at d=30") {
        Vec spectrum(30);
        spectrum[0] = 1.0;
        spectrum[1] = 0.9;
        for (std::size_t i = 2; i < 30; ++i) spectrum[i] = 0.85 * std::pow(0.8, double(i - 1));
        Rng rng(17);
        const DenseMatrix m = random_spd(30, rng, spectrum);
        OracleLedger ledger;
        auto op = op_of(m, ledger);
        const double lam = smallest_eig_stage2(op, 1e-2, ledger);
        REQUIRE(lam == Catch::Approx(1.0).margin(0.5e-2));
    }
}

TEST_CASE("find_smallest_eigenvalue composes the stages") {
    SECTION("diag(1, -0.3)") {
        OracleLedger ledger;
        auto op = op_of(DenseMatrix::diagonal({1.0, -0.3}), ledger);
        const auto r = find_smallest_eigenvalue(op, 1e-3, ledger);
        REQUIRE(r.lambda_hat == Catch::Approx(-0.3).margin(1e-3));
    }
    SECTION("PSD operator returns a nonnegative estimate up to eps") {
        Rng rng(23);
        const DenseMatrix a = random_spd(14, rng, 0.2, 1.0);
        OracleLedger ledger;
        auto op = op_of(a, ledger);
        const auto r = find_smallest_eigenvalue(op, 1e-3, ledger);
        REQUIRE(r.lambda_hat >= -1e-3);
        const double lam_min = dense_eigendecomposition(a).lambda_min();
        REQUIRE(r.lambda_hat == Catch::Approx(lam_min).margin(1e-3));
    }
    SECTION("double-well Hessian at the saddle") {
        // Hessian diag(-1, 1, ..., 1) / 4
        const std::size_t d = 10;
        Vec spectrum(d, 0.25);
        spectrum[0] = -0.25;
        OracleLedger ledger;
        auto op = op_of(DenseMatrix::diagonal(spectrum), ledger);
        const auto r = find_smallest_eigenvalue(op, 1e-3, ledger);
        REQUIRE(r.lambda_hat == Catch::Approx(-0.25).margin(1e-3));
    }
}

TEST_CASE("find_smallest_eigenvalue randomized sweep with dense verification") {
    Rng rng(777);
    int checked = 0;
    for (int t = 0; t < 12; ++t) {
        const std::size_t d = 10 + static_cast<std::size_t>(rng.uniform() * 30);
        Vec spectrum(d);
        // mix of strictly positive, near-zero and strongly negative bottoms
        const int kind = t % 3;
        for (std::size_t i = 0; i < d; ++i)
            spectrum[i] = 0.1 + 0.9 * rng.uniform();
        std::sort(spectrum.begin(), spectrum.end(), std::greater<double>());
        if (kind == 1) spectrum.back() = 1e-4;
        if (kind == 2) spectrum.back() = -(0.3 + 0.5 * rng.uniform());
        const DenseMatrix a = random_spd(d, rng, spectrum);
        OracleLedger ledger;
        auto op = op_of(a, ledger);
        const double eps = 1e-3;
        const auto r = find_smallest_eigenvalue(op, eps, ledger, 0.0, 1000 + t);
        const double truth = dense_eigendecomposition(a).lambda_min();
        INFO("kind=" << kind << " d=" << d << " truth=" << truth << " hat=" << r.lambda_hat
                     << " stage2=" << r.used_stage2 << " applies=" << r.applies);
        REQUIRE(std::abs(r.lambda_hat - truth) <= eps);
        ++checked;
    }
    REQUIRE(checked == 12);
}
