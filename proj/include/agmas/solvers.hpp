// Quadratic solvers: the closed-form low-rank prox, constant-momentum
// accelerated gradient, conjugate gradient, the AGMAS dispatch (extract, then
// prox-AGD / AGD / CG per the fired criterion) and the proximal-point wrapper
// for the non-strongly-convex case.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "agmas/core.hpp"
#include "agmas/eigen_tools.hpp"

namespace agmas {

// ---------------------------------------------------------------------------
// prox_lowrank_quadratic: argmin_x (1/2) x'A1x + (L/2)||x - y||^2 through the
// rank-r inversion identity (A1 + LI)^{-1} = (1/L)(I - V (L D^{-1} + V'V)^{-1} V')
// with A1 = V D V' in its {(a_i/5, v_i)} factored form.
// ---------------------------------------------------------------------------

namespace detail {

// Cholesky solve of a small SPD system; returns false on a non-positive pivot
// or a condition estimate beyond 1e14.
inline bool small_cholesky_solve(std::vector<double>& m, std::size_t r, Vec& rhs) {
    double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < r; ++j) {
        double s = m[j * r + j];
        for (std::size_t k = 0; k < j; ++k) s -= m[j * r + k] * m[j * r + k];
        if (!(s > 0.0)) return false;
        const double l = std::sqrt(s);
        m[j * r + j] = l;
        dmax = std::max(dmax, l);
        dmin = std::min(dmin, l);
        for (std::size_t i = j + 1; i < r; ++i) {
            double t = m[i * r + j];
            for (std::size_t k = 0; k < j; ++k) t -= m[i * r + k] * m[j * r + k];
            m[i * r + j] = t / l;
        }
    }
    if ((dmax / dmin) * (dmax / dmin) > 1e14) return false;
    // forward/backward substitution
    for (std::size_t i = 0; i < r; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= m[i * r + k] * rhs[k];
        rhs[i] = s / m[i * r + i];
    }
    for (std::size_t ii = r; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t k = ii + 1; k < r; ++k) s -= m[k * r + ii] * rhs[k];
        rhs[ii] = s / m[ii * r + ii];
    }
    return true;
}

inline void small_pivoted_solve(std::vector<double> m, std::size_t r, Vec& rhs) {
    for (std::size_t col = 0; col < r; ++col) {
        std::size_t piv = col;
        for (std::size_t i = col + 1; i < r; ++i)
            if (std::abs(m[i * r + col]) > std::abs(m[piv * r + col])) piv = i;
        if (piv != col) {
            for (std::size_t j = 0; j < r; ++j) std::swap(m[col * r + j], m[piv * r + j]);
            std::swap(rhs[col], rhs[piv]);
        }
        const double d = m[col * r + col];
        if (d == 0.0) throw SolverError("prox_lowrank_quadratic: singular core");
        for (std::size_t i = col + 1; i < r; ++i) {
            const double f = m[i * r + col] / d;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < r; ++j) m[i * r + j] -= f * m[col * r + j];
            rhs[i] -= f * rhs[col];
        }
    }
    for (std::size_t ii = r; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t j = ii + 1; j < r; ++j) s -= m[ii * r + j] * rhs[j];
        rhs[ii] = s / m[ii * r + ii];
    }
}

}  // namespace detail

inline Vec prox_lowrank_quadratic(const LowRankDeflation& deflation, double L, const Vec& y) {
    if (!(L > 0.0)) throw ContractError("prox_lowrank_quadratic: L > 0 required");
    if (deflation.empty()) return y;
    if (y.size() != deflation.dim) throw ContractError("prox_lowrank_quadratic: dim mismatch");
    const std::size_t r = deflation.rank();

    // core = L D^{-1} + V'V with D = diag(a_i / 5)
    std::vector<double> core(r * r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = i; j < r; ++j) {
            const double g = dot(deflation.vecs[i], deflation.vecs[j]);
            core[i * r + j] = g;
            core[j * r + i] = g;
        }
        core[i * r + i] += L / (LowRankDeflation::scale * deflation.coeffs[i]);
    }
    Vec rhs(r);
    for (std::size_t i = 0; i < r; ++i) rhs[i] = dot(deflation.vecs[i], y);

    std::vector<double> chol = core;
    Vec sol = rhs;
    if (!detail::small_cholesky_solve(chol, r, sol)) {
        sol = rhs;
        detail::small_pivoted_solve(core, r, sol);
    }
    Vec x = y;
    for (std::size_t i = 0; i < r; ++i) axpy(-sol[i], deflation.vecs[i], x);
    return x;
}

// ---------------------------------------------------------------------------
// Accelerated gradient descent with constant momentum (strongly convex) or
// the t-sequence schedule (mu = 0).
// ---------------------------------------------------------------------------

struct AgdOptions {
    double L = 1.0;
    double mu = 0.0;       // 0 switches to the t-sequence schedule
    double eps = 1e-8;     // target accuracy (mu>0) / gradient tolerance (mu=0)
    double f_gap_bound = 1.0;
    std::uint64_t max_iters = 50'000'000;
    int trace_every = 0;
};

// free_value(x, grad_at_x) evaluates f without touching the oracle; pass
// nullptr to skip objective tracking.
inline SolverReport accelerated_gradient(const std::function<Vec(const Vec&)>& grad,
                                         const std::function<double(const Vec&, const Vec&)>& free_value,
                                         const Vec& x0, const AgdOptions& opts,
                                         OracleLedger& ledger) {
    if (opts.mu > 0.0 && opts.L < opts.mu)
        throw ContractError("accelerated_gradient: need L >= mu");
    SolverReport rep;
    rep.branch = "agd";

    Vec x = x0, x_prev = x0, y = x0;
    const bool strongly = opts.mu > 0.0;
    const double sqrt_kappa = strongly ? std::sqrt(opts.L / opts.mu) : 0.0;
    const double beta = strongly ? (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0) : 0.0;
    double t_k = 1.0;

    const double grad_target2 = strongly ? 2.0 * opts.mu * opts.eps : opts.eps * opts.eps;
    int increases = 0;
    double last_f = std::numeric_limits<double>::infinity();

    for (std::uint64_t it = 0; it < opts.max_iters; ++it) {
        const Vec g = grad(y);
        if (!all_finite(g)) throw SolverError("accelerated_gradient: NaN gradient");
        const double gn2 = dot(g, g);
        double fy = 0.0;
        if (free_value) {
            fy = free_value(y, g);
            if (fy > last_f + 1e-14 * (1.0 + std::abs(last_f))) {
                if (++increases >= 10) throw SolverError("accelerated_gradient: diverging");
            } else {
                increases = 0;
            }
            last_f = fy;
        }
        if (opts.trace_every > 0 && it % static_cast<std::uint64_t>(opts.trace_every) == 0)
            rep.trace.emplace_back(ledger.grad_calls, fy);
        if (gn2 <= grad_target2) {
            rep.x_hat = y;
            rep.objective = fy;
            rep.iterations = it;
            rep.ledger_snapshot = ledger;
            rep.converged = true;
            return rep;
        }

        Vec x_next = y;
        axpy(-1.0 / opts.L, g, x_next);
        if (strongly) {
            y = x_next;
            Vec diff = x_next;
            axpy(-1.0, x, diff);
            axpy(beta, diff, y);
            x_prev = x;
            x = x_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
            y = x_next;
            Vec diff = x_next;
            axpy(-1.0, x, diff);
            axpy((t_k - 1.0) / t_next, diff, y);
            t_k = t_next;
            x_prev = x;
            x = x_next;
        }
    }
    throw SolverError("accelerated_gradient: iteration cap reached without certificate");
}

// ---------------------------------------------------------------------------
// Conjugate gradient through a counted gradient callback. grad(0) = b is
// cached once; A p = grad(p) - b costs one call per iteration.
// ---------------------------------------------------------------------------

inline SolverReport conjugate_gradient(const std::function<Vec(const Vec&)>& grad, std::size_t dim,
                                       const Vec& x0, double eps_res, OracleLedger& ledger,
                                       double restart_slack = 0.25) {
    SolverReport rep;
    rep.branch = "cg";
    const Vec b = grad(zeros(dim));
    const double bnorm = std::max(nrm2(b), 1e-300);

    const auto cap = static_cast<std::uint64_t>(
        std::ceil(static_cast<double>(dim) * (1.0 + restart_slack))) + 5;

    Vec x = x0;
    std::uint64_t iters = 0;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::uint64_t attempt_iters = 0;
        Vec r = grad(x);  // A x + b
        scal(-1.0, r);
        Vec p = r;
        double rs = dot(r, r);
        double stagnation_floor = std::sqrt(rs);
        int stagnant = 0;
        while (attempt_iters < cap) {
            if (std::sqrt(rs) <= eps_res * bnorm) {
                rep.x_hat = x;
                // f(x) = (1/2) x'(grad - b) + b'x with grad = -r, all free
                rep.objective = -0.5 * dot(x, r) + 0.5 * dot(b, x);
                rep.iterations = iters;
                rep.ledger_snapshot = ledger;
                rep.converged = true;
                return rep;
            }
            Vec ap = grad(p);
            axpy(-1.0, b, ap);
            ++iters;
            ++attempt_iters;
            const double pap = dot(p, ap);
            if (!(pap > 0.0)) throw SolverError("conjugate_gradient: operator not SPD");
            const double alpha = rs / pap;
            axpy(alpha, p, x);
            axpy(-alpha, ap, r);
            const double rs_new = dot(r, r);
            if (!std::isfinite(rs_new)) throw SolverError("conjugate_gradient: NaN residual");
            if (std::sqrt(rs_new) > 0.999 * stagnation_floor) {
                if (++stagnant >= 50) break;  // loss of conjugacy; restart once
            } else {
                stagnant = 0;
                stagnation_floor = std::sqrt(rs_new);
            }
            const double betac = rs_new / rs;
            rs = rs_new;
            for (std::size_t i = 0; i < dim; ++i) p[i] = r[i] + betac * p[i];
        }
    }
    // final residual check before declaring failure
    Vec r = grad(x);
    if (nrm2(r) <= eps_res * bnorm) {
        rep.x_hat = x;
        rep.objective = 0.5 * (dot(x, r) + dot(b, x));
        rep.iterations = iters;
        rep.ledger_snapshot = ledger;
        rep.converged = true;
        return rep;
    }
    throw SolverError("conjugate_gradient: residual target not reached within cap");
}

// ---------------------------------------------------------------------------
// AGMAS
// ---------------------------------------------------------------------------

struct AgmasConfig {
    double eps = 1e-8;
    double mu = 0.0;  // <= 0 triggers estimate_smallest_eigenvalue (halved)
    ExtractorConfig extractor;
    std::uint64_t max_outer_iters = 50'000'000;
    Vec x0;  // empty = origin
    int trace_every = 0;
};

inline SolverReport agmas_solve(const QuadraticProblem& problem, const AgmasConfig& cfg,
                                OracleLedger& ledger) {
    const std::size_t d = problem.dim;
    if (!(cfg.eps > 0.0)) throw ContractError("agmas_solve: eps > 0 required");

    double mu = cfg.mu;
    if (!(mu > 0.0)) {
        CountedOp op{d, [&problem](const Vec& x, Vec& y) { problem.apply_A(x, y); }, &ledger,
                     CountedOp::Kind::grad};
        const auto est = estimate_smallest_eigenvalue(op, 400000, cfg.extractor.seed + 5);
        mu = 0.5 * est.mu_hat;  // constant-factor estimate, halved before use
        if (!(mu > 0.0)) throw SolverError("agmas_solve: smallest-eigenvalue estimate not positive");
    }

    ExtractorConfig ex = cfg.extractor;
    ex.mu_target = 0.5 * mu;  // Alg 2 passes mu/2 to the extractor
    const auto rep_ex = eigen_extract(problem, ex, std::nullopt, ledger);

    const Vec x0 = cfg.x0.empty() ? zeros(d) : cfg.x0;
    auto free_value_full = [&problem](const Vec& x, const Vec& g) {
        // f(x) = (1/2) x'(g + b) with g = Ax + b
        return 0.5 * (dot(x, g) + dot(problem.b, x));
    };

    SolverReport rep;
    switch (rep_ex.fired) {
        case ExtractStop::crit_dim: {
            auto grad = counting_gradient(problem, ledger);
            const double eps_res =
                std::clamp(std::sqrt(2.0 * mu * cfg.eps) / std::max(nrm2(problem.b), 1e-300),
                           1e-13, 1e-2);
            rep = conjugate_gradient(grad, d, x0, eps_res, ledger);
            rep.branch = "cg";
            break;
        }
        case ExtractStop::crit_mu: {
            // prox-AGD on g(x) = (1/2) x'(A - A1)x + b'x with h(x) = (1/2) x'A1x
            auto grad_g = deflated_gradient(problem, rep_ex.deflation, ledger);
            // smoothness of g: cheap norm estimate of the deflated operator,
            // 2 a_last as the fallback guess
            double l_g = 2.0 * rep_ex.a_last();
            {
                const LowRankDeflation& defl = rep_ex.deflation;
                CountedOp dop{d,
                              [&problem, &defl](const Vec& x, Vec& y) {
                                  problem.apply_A(x, y);
                                  for (std::size_t i = 0; i < defl.coeffs.size(); ++i) {
                                      const double c = LowRankDeflation::scale * defl.coeffs[i] *
                                                       dot(defl.vecs[i], x);
                                      axpy(-c, defl.vecs[i], y);
                                  }
                              },
                              &ledger, CountedOp::Kind::grad};
                ShiftInvertOptions so;
                so.delta = 0.3;
                so.rayleigh_only = true;
                so.seed = ex.seed + 11;
                so.max_power_steps = 60;
                const auto ne = shift_invert_leading(dop, so, nullptr, 0.0);
                if (ne.ok && ne.rayleigh > 0.0) l_g = std::min(l_g, 1.4 * ne.rayleigh);
            }
            const double mu_g = 0.5 * mu;
            l_g = std::max(l_g, mu_g);

            for (int attempt = 0; attempt < 6; ++attempt) {
                const double sqrt_kappa = std::sqrt(l_g / mu_g);
                const double beta = (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0);
                Vec x = x0, x_prev = x0, y = x0;
                bool diverged = false;
                int increases = 0;
                double last_f = std::numeric_limits<double>::infinity();
                std::uint64_t it = 0;
                for (; it < cfg.max_outer_iters; ++it) {
                    const Vec g = grad_g(y);
                    // full gradient and value come free from the low-rank part
                    Vec gf = g;
                    rep_ex.deflation.apply_add(y, gf);
                    const double fy = free_value_full(y, gf);
                    if (fy > last_f + 1e-14 * (1.0 + std::abs(last_f))) {
                        if (++increases >= 10) {
                            diverged = true;
                            break;
                        }
                    } else {
                        increases = 0;
                    }
                    last_f = fy;
                    if (cfg.trace_every > 0 &&
                        it % static_cast<std::uint64_t>(cfg.trace_every) == 0)
                        rep.trace.emplace_back(ledger.grad_calls, fy);
                    if (dot(gf, gf) <= 2.0 * mu * cfg.eps) {
                        rep.x_hat = y;
                        rep.objective = fy;
                        rep.iterations = it;
                        rep.converged = true;
                        break;
                    }
                    Vec z = y;
                    axpy(-1.0 / l_g, g, z);
                    Vec x_next = prox_lowrank_quadratic(rep_ex.deflation, l_g, z);
                    y = x_next;
                    Vec diff = x_next;
                    axpy(-1.0, x, diff);
                    axpy(beta, diff, y);
                    x_prev = x;
                    x = x_next;
                }
                if (rep.converged) break;
                if (diverged) {
                    l_g *= 2.0;  // smoothness guess was low; self-correct
                    rep.trace.clear();
                    continue;
                }
                throw SolverError("agmas_solve: prox-AGD iteration cap reached");
            }
            if (!rep.converged) throw SolverError("agmas_solve: prox-AGD diverged repeatedly");
            rep.branch = "prox-agd";
            break;
        }
        case ExtractStop::crit_mu_sqrt:
        default: {
            auto grad = counting_gradient(problem, ledger);
            AgdOptions o;
            o.L = std::max(2.0 * rep_ex.a_first(), mu);
            o.mu = mu;
            o.eps = cfg.eps;
            o.trace_every = cfg.trace_every;
            o.max_iters = cfg.max_outer_iters;
            rep = accelerated_gradient(grad, free_value_full, x0, o, ledger);
            rep.branch = "agd";
            break;
        }
    }
    rep.ledger_snapshot = ledger;
    rep.note = std::string("extract=") + to_string(rep_ex.fired) +
               " rank=" + std::to_string(rep_ex.deflation.rank()) +
               " extract_calls=" + std::to_string(rep_ex.oracle_calls);
    return rep;
}

// f(x) <= f* + eps for PSD problems with possibly-zero smallest eigenvalue:
// proximal-point homotopy on A + sigma I with shrinking sigma.
inline SolverReport solve_to_eps_nonstrongly(const QuadraticProblem& problem, double eps,
                                             OracleLedger& ledger,
                                             const ExtractorConfig& excfg = {}) {
    const std::size_t d = problem.dim;
    if (!(eps > 0.0)) throw ContractError("solve_to_eps_nonstrongly: eps > 0 required");

    double sigma = std::max(eps, 1e-12);
    Vec center = zeros(d);
    SolverReport rep;
    for (int round = 0; round < 60; ++round) {
        QuadraticProblem reg;
        reg.dim = d;
        reg.mu_hint = problem.mu_hint + sigma;
        reg.apply_A = [&problem, sigma](const Vec& x, Vec& y) {
            problem.apply_A(x, y);
            axpy(sigma, x, y);
        };
        reg.b = problem.b;
        axpy(-sigma, center, reg.b);

        AgmasConfig cfg;
        cfg.eps = eps / 4.0;
        cfg.mu = sigma;
        cfg.extractor = excfg;
        cfg.extractor.seed = excfg.seed + 101 * (round + 1);
        cfg.x0 = center;
        rep = agmas_solve(reg, cfg, ledger);

        const double radius = nrm2(rep.x_hat) + 1.0;
        center = rep.x_hat;
        if (0.5 * sigma * radius * radius <= 0.5 * eps) break;
        sigma *= 0.25;
    }
    // objective of the original problem at the returned point (free-form not
    // available here; one extra counted evaluation keeps the report honest)
    Vec g(d);
    problem.apply_A(rep.x_hat, g);
    ledger.add_grad();
    rep.objective = 0.5 * dot(rep.x_hat, g) + dot(problem.b, rep.x_hat);
    rep.ledger_snapshot = ledger;
    rep.branch = rep.branch + "+prox-point";
    return rep;
}

}  // namespace agmas
