// Inexact large-step accelerated Newton proximal extragradient for convex
// objectives with H-Lipschitz Hessians. The per-iteration subproblem is the
// second-order expansion regularized by 1/(2 gamma), solved by AGMAS through
// HVP-counted applies; gamma is located by the doubling/halving search with a
// bisection fallback when the window straddles a doubling step.
#pragma once

#include <algorithm>
#include <cmath>

#include "agmas/core.hpp"
#include "agmas/solvers.hpp"

namespace agmas {

struct AnpeConfig {
    double sigma_l = 0.2;  // must equal sigma_u / 2
    double sigma_u = 0.4;
    double sigma = 0.5;
    double hessian_lipschitz = 0.0;  // 0 -> taken from the oracle
    double diameter = 0.0;           // 0 -> running 2||x0 - y_best|| estimate
    double gamma0 = 0.0;             // 0 -> sigma_l sqrt(1-sigma^2) / (16 D H)
    double eps = 1e-6;
    std::uint64_t max_iters = 200;
    std::uint64_t max_probes = 200;  // binary-search budget per iteration
    std::uint64_t seed = 7;

    void validate() const {
        if (!(sigma_l < sigma_u && sigma_u < sigma && sigma < 1.0) ||
            std::abs(sigma_l - 0.5 * sigma_u) > 1e-15)
            throw ContractError("AnpeConfig: need sigma_l = sigma_u/2 < sigma_u < sigma < 1");
        if (!(eps > 0.0)) throw ContractError("AnpeConfig: eps > 0 required");
    }
};

struct AnpeIterRecord {
    double a_coeff = 0.0;     // accumulated A_k after the step
    double step_coeff = 0.0;  // a_{k+1}
    double gamma = 0.0;
    double window = 0.0;  // gamma ||y - x_tilde||, in [2 sigma_l/H, 2 sigma_u/H]
    double f_y = 0.0;
    double inexact_cert = 0.0;  // ||gamma grad f(y) + y - x_tilde|| / ||y - x_tilde||
    int probes = 0;
};

struct AnpeResult {
    SolverReport report;
    std::vector<AnpeIterRecord> iters;
    double gamma0 = 0.0;
    double diameter_used = 0.0;
};

// grad f(center) + hvp(center, y - center); the center gradient is cached by
// the caller, so this charges exactly one hvp.
inline Vec soe_gradient(const SecondOrderOracle& oracle, const Vec& center,
                        const Vec& grad_center, const Vec& y, OracleLedger& ledger) {
    if (center.size() != oracle.dim || y.size() != oracle.dim)
        throw ContractError("soe_gradient: dimension mismatch");
    Vec dy = y;
    axpy(-1.0, center, dy);
    ledger.add_hvp();
    Vec g = oracle.hvp(center, dy);
    axpy(1.0, grad_center, g);
    return g;
}

// Threshold from the inexactness lemma with the unknown optimum replaced by a
// certified lower bound of the gap (gap_proxy <= f(x_tilde) - g*).
inline double eps_a_threshold(double l_local, double gamma, double sigma, double sigma_u,
                              double gap_proxy) {
    const double s = sigma - sigma_u;
    if (!(s > 0.0) || !(gamma > 0.0)) throw ContractError("eps_a_threshold: bad parameters");
    const double factor =
        s * s / (2.0 * gamma * (l_local * gamma + 1.0 + s * s) * (l_local + 1.0 / gamma));
    if (!(gap_proxy > 0.0)) return factor * 1e-300;  // stall flag territory
    return factor * gap_proxy;
}

namespace detail {

struct SubproblemOut {
    Vec y;
    double g_value = 0.0;  // subproblem objective at y (model value)
};

// min_y f_xt(y) + 1/(2 gamma) ||y - xt||^2 via AGMAS on the shifted Hessian;
// all subproblem applies are charged as hvp calls.
inline SubproblemOut anpe_subproblem(const SecondOrderOracle& oracle, const Vec& center,
                                     const Vec& grad_center, double f_center, double gamma,
                                     double eps_a, OracleLedger& ledger, std::uint64_t seed) {
    const std::size_t d = oracle.dim;
    QuadraticProblem sub;
    sub.dim = d;
    sub.b = grad_center;
    sub.mu_hint = 1.0 / gamma;
    sub.apply_A = [&oracle, &center, gamma](const Vec& z, Vec& out) {
        out = oracle.hvp(center, z);
        axpy(1.0 / gamma, z, out);
    };

    OracleLedger sub_ledger;
    AgmasConfig cfg;
    cfg.eps = std::max(eps_a, 1e-15);
    cfg.mu = 1.0 / gamma;
    cfg.extractor.seed = seed;
    const auto rep = agmas_solve(sub, cfg, sub_ledger);
    ledger.hvp_calls += sub_ledger.grad_calls;  // one hvp per subproblem apply

    SubproblemOut out;
    out.y = center;
    axpy(1.0, rep.x_hat, out.y);
    // model value g(y) = f(c) + grad'z + (1/2) z'(H + 1/gamma) z = f(c) + subobjective
    out.g_value = f_center + rep.objective;
    return out;
}

}  // namespace detail

struct CbsResult {
    Vec y;
    Vec x_tilde;
    double a_next = 0.0;
    double gamma = 0.0;
    double window = 0.0;
    double f_tilde = 0.0;
    int probes = 0;
};

// Binary search for gamma_{k+1}: doubling/halving per the printed flow, with a
// geometric bisection fallback when the doubling step straddles the window.
inline CbsResult c_binary_search(const SecondOrderOracle& oracle, const Vec& x_k, const Vec& y_k,
                                 double a_acc, double gamma_prev, const AnpeConfig& cfg,
                                 OracleLedger& ledger, std::uint64_t seed) {
    const double h_lip =
        cfg.hessian_lipschitz > 0.0 ? cfg.hessian_lipschitz : oracle.hessian_lipschitz;
    if (!(h_lip > 0.0)) throw ContractError("c_binary_search: Hessian-Lipschitz constant required");
    const double lo_win = 2.0 * cfg.sigma_l / h_lip;
    const double hi_win = 2.0 * cfg.sigma_u / h_lip;

    double gamma = gamma_prev;
    double bracket_lo = 0.0, bracket_hi = std::numeric_limits<double>::infinity();
    CbsResult res;

    for (std::uint64_t probe = 0; probe < cfg.max_probes; ++probe) {
        const double a_next = 0.5 * (gamma + std::sqrt(gamma * gamma + 4.0 * gamma * a_acc));
        Vec x_tilde = y_k;
        scal(a_acc / (a_acc + a_next), x_tilde);
        axpy(a_next / (a_acc + a_next), x_k, x_tilde);

        const double f_tilde = oracle.value(x_tilde);
        ledger.add_grad();
        const Vec grad_tilde = oracle.grad(x_tilde);

        // local smoothness of the subproblem operator from 5 power steps
        double l_local = 1.0 / gamma;
        {
            Rng rng(seed + probe);
            Vec w = rng.unit_vector(oracle.dim);
            for (int t = 0; t < 5; ++t) {
                ledger.add_hvp();
                Vec hw = oracle.hvp(x_tilde, w);
                axpy(1.0 / gamma, w, hw);
                const double n = nrm2(hw);
                if (!(n > 0.0)) break;
                l_local = std::max(l_local, n);
                w = hw;
                scal(1.0 / n, w);
            }
        }

        // certified gap proxy from one damped step on the model
        Vec y0 = x_tilde;
        axpy(-gamma / (1.0 + gamma * l_local), grad_tilde, y0);
        double gap_proxy;
        {
            Vec dy = y0;
            axpy(-1.0, x_tilde, dy);
            ledger.add_hvp();
            const Vec hdy = oracle.hvp(x_tilde, dy);
            const double model = f_tilde + dot(grad_tilde, dy) + 0.5 * dot(hdy, dy) +
                                 dot(dy, dy) / (2.0 * gamma);
            gap_proxy = f_tilde - model;
        }
        const double eps_a =
            eps_a_threshold(l_local, gamma, cfg.sigma, cfg.sigma_u, std::max(gap_proxy, 0.0)) * 0.5;

        auto sub = detail::anpe_subproblem(oracle, x_tilde, grad_tilde, f_tilde, gamma,
                                           std::max(eps_a, 1e-16), ledger, seed ^ (probe + 1));
        // sharpen the proxy with the achieved model value (still >= g*)
        const double gap_seen = f_tilde - sub.g_value;
        if (gap_seen > gap_proxy && gap_seen > 0.0) {
            const double eps_a2 =
                eps_a_threshold(l_local, gamma, cfg.sigma, cfg.sigma_u, gap_seen) * 0.5;
            if (eps_a2 < eps_a)
                sub = detail::anpe_subproblem(oracle, x_tilde, grad_tilde, f_tilde, gamma,
                                              std::max(eps_a2, 1e-16), ledger, seed ^ (probe + 7));
        }

        Vec diff = sub.y;
        axpy(-1.0, x_tilde, diff);
        const double window = gamma * nrm2(diff);

        if (window < lo_win) {
            bracket_lo = std::max(bracket_lo, gamma);
            gamma = std::isfinite(bracket_hi) ? std::sqrt(bracket_lo * bracket_hi) : 2.0 * gamma;
            continue;
        }
        if (window > hi_win) {
            bracket_hi = std::min(bracket_hi, gamma);
            gamma = bracket_lo > 0.0 ? std::sqrt(bracket_lo * bracket_hi) : 0.5 * gamma;
            continue;
        }
        res.y = std::move(sub.y);
        res.x_tilde = std::move(x_tilde);
        res.a_next = a_next;
        res.gamma = gamma;
        res.window = window;
        res.f_tilde = f_tilde;
        res.probes = static_cast<int>(probe) + 1;
        return res;
    }
    throw SolverError(
        "c_binary_search: window not reached within probe budget (H misspecification?)");
}

inline AnpeResult anpe_solve(const SecondOrderOracle& oracle, const Vec& x0, const AnpeConfig& cfg,
                             OracleLedger& ledger) {
    cfg.validate();
    const std::size_t d = oracle.dim;
    const double h_lip =
        cfg.hessian_lipschitz > 0.0 ? cfg.hessian_lipschitz : oracle.hessian_lipschitz;
    if (!(h_lip > 0.0)) throw ContractError("anpe_solve: Hessian-Lipschitz constant required");

    double diameter = cfg.diameter > 0.0 ? cfg.diameter : 1.0;
    const double gamma0 = cfg.gamma0 > 0.0
                              ? cfg.gamma0
                              : cfg.sigma_l * std::sqrt(1.0 - cfg.sigma * cfg.sigma) /
                                    (16.0 * diameter * h_lip);

    AnpeResult out;
    out.gamma0 = gamma0;

    Vec x = x0, y = x0;
    double a_acc = 0.0;
    double gamma = gamma0;
    double best_f = oracle.value(x0);
    Vec best_y = x0;

    for (std::uint64_t k = 0; k < cfg.max_iters; ++k) {
        const auto step =
            c_binary_search(oracle, x, y, a_acc, gamma, cfg, ledger, cfg.seed + 1000 * (k + 1));
        gamma = step.gamma;

        ledger.add_grad();
        const Vec v = oracle.grad(step.y);
        a_acc += step.a_next;
        axpy(-step.a_next, v, x);
        y = step.y;

        const double fy = oracle.value(y);
        if (fy < best_f) {
            best_f = fy;
            best_y = y;
        }
        if (cfg.diameter <= 0.0) {
            Vec dx = best_y;
            axpy(-1.0, x0, dx);
            diameter = std::max(diameter, 2.0 * nrm2(dx));
        }

        AnpeIterRecord rec;
        rec.a_coeff = a_acc;
        rec.step_coeff = step.a_next;
        rec.gamma = step.gamma;
        rec.window = step.window;
        rec.f_y = fy;
        rec.probes = step.probes;
        {
            Vec cert = v;
            scal(step.gamma, cert);
            axpy(1.0, y, cert);
            axpy(-1.0, step.x_tilde, cert);
            Vec dy = y;
            axpy(-1.0, step.x_tilde, dy);
            rec.inexact_cert = nrm2(cert) / std::max(nrm2(dy), 1e-300);
        }
        out.iters.push_back(rec);
        out.report.trace.emplace_back(ledger.grad_calls + ledger.hvp_calls, fy);

        if (a_acc >= diameter * diameter / cfg.eps) break;
    }

    out.diameter_used = diameter;
    out.report.x_hat = best_y;
    out.report.objective = best_f;
    out.report.iterations = out.iters.size();
    out.report.ledger_snapshot = ledger;
    out.report.branch = "anpe";
    out.report.converged = a_acc >= diameter * diameter / cfg.eps;
    return out;
}

}  // namespace agmas
