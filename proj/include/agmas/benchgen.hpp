// Synthetic instance generators: power-law spectra behind seeded Householder
// rotations, the anchored-chain quadratic, Wishart 3-block lower-bound
// matrices, planted regression datasets, and the log-log exponent fitter.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "agmas/core.hpp"
#include "agmas/dataset.hpp"
#include "agmas/dense.hpp"
#include "agmas/io.hpp"

namespace agmas {

// ---------------------------------------------------------------------------
// Spectrum specification
// ---------------------------------------------------------------------------

struct SpectrumSpec {
    enum class Law { powerlaw, explicit_list, flat };

    std::size_t d = 0;
    Law law = Law::powerlaw;
    double alpha = 1.0;  // powerlaw decay level
    double tau = 1.0;    // powerlaw magnitude
    Vec values;          // explicit list
    double level = 1.0;  // flat value
    double mu_floor = 0.0;
    std::uint64_t seed = 0;

    static SpectrumSpec powerlaw(std::size_t d, double alpha, double tau, double mu_floor,
                                 std::uint64_t seed) {
        SpectrumSpec s;
        s.d = d;
        s.law = Law::powerlaw;
        s.alpha = alpha;
        s.tau = tau;
        s.mu_floor = mu_floor;
        s.seed = seed;
        return s;
    }
    static SpectrumSpec flat(std::size_t d, double level, double mu_floor, std::uint64_t seed) {
        SpectrumSpec s;
        s.d = d;
        s.law = Law::flat;
        s.level = level;
        s.mu_floor = mu_floor;
        s.seed = seed;
        return s;
    }
    static SpectrumSpec explicit_list(Vec values, double mu_floor, std::uint64_t seed) {
        SpectrumSpec s;
        s.d = values.size();
        s.law = Law::explicit_list;
        s.values = std::move(values);
        s.mu_floor = mu_floor;
        s.seed = seed;
        return s;
    }

    // eigenvalues, sorted descending, mu_floor included
    Vec spectrum() const {
        if (d == 0) throw ContractError("SpectrumSpec: d must be positive");
        Vec lam(d);
        switch (law) {
            case Law::powerlaw:
                if (alpha <= 0.0 || tau <= 0.0)
                    throw ContractError("SpectrumSpec: powerlaw needs alpha, tau > 0");
                for (std::size_t i = 0; i < d; ++i)
                    lam[i] = tau * std::pow(static_cast<double>(i + 1), -1.0 / alpha) + mu_floor;
                break;
            case Law::flat:
                for (std::size_t i = 0; i < d; ++i) lam[i] = level + mu_floor;
                break;
            case Law::explicit_list:
                if (values.size() != d) throw ContractError("SpectrumSpec: explicit size mismatch");
                lam = values;
                for (double& v : lam) v += mu_floor;
                std::sort(lam.begin(), lam.end(), std::greater<double>());
                break;
        }
        for (double v : lam)
            if (!(v > 0.0)) throw ContractError("SpectrumSpec: eigenvalues must be positive");
        return lam;
    }
};

inline double tau_alpha_of_spectrum(const Vec& lam, double alpha) {
    double s = 0.0;
    for (double v : lam) s += std::pow(std::abs(v), alpha);
    return std::pow(s, 1.0 / alpha);
}

// ---------------------------------------------------------------------------
// Orthogonal factor as a product of seeded Householder reflections. Exactly
// orthogonal, O(d * reflectors) to apply.
// ---------------------------------------------------------------------------

struct HouseholderOrthogonal {
    std::size_t dim = 0;
    std::vector<Vec> reflectors;

    static std::size_t default_count(std::size_t d) { return std::min<std::size_t>(d, 256); }

    static HouseholderOrthogonal sample(std::size_t d, Rng& rng,
                                        std::size_t count = 0) {
        HouseholderOrthogonal q;
        q.dim = d;
        if (count == 0) count = default_count(d);
        q.reflectors.reserve(count);
        for (std::size_t r = 0; r < count; ++r) q.reflectors.push_back(rng.unit_vector(d));
        return q;
    }

    // x <- Q x with Q = H_1 H_2 ... H_K
    void apply(Vec& x) const {
        for (std::size_t r = reflectors.size(); r-- > 0;) {
            const Vec& v = reflectors[r];
            const double c = 2.0 * dot(v, x);
            axpy(-c, v, x);
        }
    }
    // x <- Q' x
    void apply_transpose(Vec& x) const {
        for (const Vec& v : reflectors) {
            const double c = 2.0 * dot(v, x);
            axpy(-c, v, x);
        }
    }
};

// ---------------------------------------------------------------------------
// Generated quadratic instance: implicit operator + ground truth
// ---------------------------------------------------------------------------

struct GeneratedQuadratic {
    QuadraticProblem problem;
    Vec spectrum;  // descending
    KvRecord certificate;
};

// A = Q diag(spectrum) Q', b random unit-scaled.
inline GeneratedQuadratic gen_powerlaw_quadratic(const SpectrumSpec& spec) {
    GeneratedQuadratic out;
    out.spectrum = spec.spectrum();
    const std::size_t d = spec.d;

    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    auto q = std::make_shared<HouseholderOrthogonal>(HouseholderOrthogonal::sample(d, rng));
    auto lam = std::make_shared<Vec>(out.spectrum);

    out.problem.dim = d;
    out.problem.b = rng.unit_vector(d);
    out.problem.mu_hint = out.spectrum.back();
    out.problem.apply_A = [q, lam](const Vec& x, Vec& y) {
        y = x;
        q->apply_transpose(y);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*lam)[i];
        q->apply(y);
    };
    if (d <= kDenseCap) {
        out.problem.dense_A = materialize(out.problem.apply_A, d).a;
    }

    out.certificate.set("kind", std::string("quadratic"));
    out.certificate.set("d", static_cast<std::uint64_t>(d));
    out.certificate.set("seed", static_cast<std::uint64_t>(spec.seed));
    out.certificate.set("lambda_max", out.spectrum.front());
    out.certificate.set("lambda_min", out.spectrum.back());
    out.certificate.set("mu_floor", spec.mu_floor);
    out.certificate.set("alpha", spec.alpha);
    out.certificate.set("tau_alpha", tau_alpha_of_spectrum(out.spectrum, spec.alpha));
    return out;
}

// (1/2)(1-x_1)^2 + (1/2) sum (x_{i+1}-x_i)^2, constant term dropped:
// tridiagonal A with 2 on the diagonal (1 in the last entry), -1 off-diagonal,
// b = (-1, 0, ..., 0). Minimizer is the all-ones vector.
inline GeneratedQuadratic gen_nesterov_chain(std::size_t d) {
    if (d < 2) throw ContractError("gen_nesterov_chain: d >= 2 required");
    GeneratedQuadratic out;
    out.problem.dim = d;
    out.problem.b = zeros(d);
    out.problem.b[0] = -1.0;
    out.problem.apply_A = [d](const Vec& x, Vec& y) {
        y.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            double v = (i + 1 == d ? 1.0 : 2.0) * x[i];
            if (i > 0) v -= x[i - 1];
            if (i + 1 < d) v -= x[i + 1];
            y[i] = v;
        }
    };
    // closed-form spectrum of the anchored chain
    const double pi = 3.14159265358979323846;
    out.spectrum.resize(d);
    for (std::size_t k = 1; k <= d; ++k) {
        const double s = std::sin((2.0 * k - 1.0) * pi / (2.0 * (2.0 * d + 1.0)));
        out.spectrum[k - 1] = 4.0 * s * s;
    }
    std::sort(out.spectrum.begin(), out.spectrum.end(), std::greater<double>());
    out.problem.mu_hint = out.spectrum.back();
    if (d <= kDenseCap) out.problem.dense_A = materialize(out.problem.apply_A, d).a;

    out.certificate.set("kind", std::string("nesterov_chain"));
    out.certificate.set("d", static_cast<std::uint64_t>(d));
    out.certificate.set("lambda_max", out.spectrum.front());
    out.certificate.set("lambda_min", out.spectrum.back());
    return out;
}

// ---------------------------------------------------------------------------
// Wishart 3-block lower-bound instances
// ---------------------------------------------------------------------------

// Percentile constants of the conditioning event for W = GG'/s, G s x s
// standard normal, calibrated once by Monte-Carlo (tools/calibrate_wishart)
// and frozen here. Scale-free in s^2 * eigenvalue units.
struct WishartEventConstants {
    // pooled 10th/90th percentiles over s in {50, 100, 200}
    // (10000 / 4000 / 1500 draws, seeds 777+s)
    double c0 = 0.0094;   // 10th pct of s^2 lambda_s(W)
    double c1 = 1.8734;   // 90th pct of s^2 lambda_s(W)
    double c2 = 0.9696;   // 10th pct of s^2 (lambda_{s-1}-lambda_s)(W)
    double c3 = 8.5406;   // 90th pct of s^2 gap
    double norm_bound = 5.0;
};

inline const WishartEventConstants& wishart_event_constants() {
    static const WishartEventConstants k{};
    return k;
}

struct HardInstanceSpec {
    enum class Regime { case1, case2, case3 };

    std::size_t d = 0;
    double mu = 0.0;
    double alpha = 1.0;
    double tau_alpha = 1.0;
    Regime regime = Regime::case1;
    std::size_t s = 0;  // 0 = derive from the regime formula
    double c = 0.0;     // 0 = derive (case1 default 1/2, case2/3 mixing formula)
    std::uint64_t seed = 0;
    int max_retries = 400;
};

struct HardInstance {
    DenseMatrix m;
    KvRecord certificate;
    std::size_t s = 0;
    double c = 0.0;
    int draws_used = 0;
};

namespace detail {

inline DenseMatrix sample_wishart(std::size_t s, Rng& rng) {
    // W = GG'/s
    std::vector<double> g(s * s);
    for (double& v : g) v = rng.gaussian();
    DenseMatrix w(s);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i; j < s; ++j) {
            double acc = 0.0;
            const double* gi = g.data() + i * s;
            const double* gj = g.data() + j * s;
            for (std::size_t k = 0; k < s; ++k) acc += gi[k] * gj[k];
            acc /= static_cast<double>(s);
            w(i, j) = acc;
            w(j, i) = acc;
        }
    return w;
}

}  // namespace detail

inline void validate_hard_instance_spec(const HardInstanceSpec& spec, std::size_t s, double c,
                                        std::string* why = nullptr) {
    auto fail = [&why](const std::string& msg) {
        if (why) {
            *why = msg;
            return;
        }
        throw ContractError(msg);
    };
    const double a = spec.alpha;
    if (spec.d < 8) return fail("hard instance: d too small");
    if (!(spec.mu > 0.0) || !(spec.tau_alpha > 0.0) || !(a > 0.0))
        return fail("hard instance: mu, tau_alpha, alpha must be positive");
    const double tau_pow = std::pow(spec.tau_alpha, a);
    // eigenvalue constraint tr(A^alpha) budget vs the floor
    if (tau_pow < static_cast<double>(spec.d) * std::pow(spec.mu, a))
        return fail("hard instance: violates tau_alpha^alpha >= d mu^alpha (eigenvalue constrain)");
    // middle block value must lie in [0, 1)
    if (std::pow(tau_pow / static_cast<double>(spec.d), 1.0 / a) > 1.0)
        return fail("hard instance: tau_alpha^alpha must be <= d for the middle block");
    const double s_mid = std::pow(spec.tau_alpha, a / (1.0 + 2.0 * a)) *
                         std::pow(spec.mu, -a / (1.0 + 2.0 * a));
    switch (spec.regime) {
        case HardInstanceSpec::Regime::case1:
            if (std::pow(spec.mu, -0.5) > std::pow(spec.tau_alpha, a))
                return fail("hard instance case1: requires mu^{-1/2} <= tau_alpha^alpha");
            break;
        case HardInstanceSpec::Regime::case2:
            if (std::pow(spec.mu, -0.5) < std::pow(spec.tau_alpha, a))
                return fail("hard instance case2: requires mu^{-1/2} >= tau_alpha^alpha");
            if (s_mid > static_cast<double>(spec.d))
                return fail("hard instance case2: requires tau^{a/(1+2a)} mu^{-a/(1+2a)} <= d");
            break;
        case HardInstanceSpec::Regime::case3:
            if (s_mid < static_cast<double>(spec.d))
                return fail("hard instance case3: requires tau^{a/(1+2a)} mu^{-a/(1+2a)} >= d");
            break;
    }
    if (s + 2 > spec.d) return fail("hard instance: block size s must satisfy s <= d-2");
    if (!(c > 0.0) || !(c < 1.0)) return fail("hard instance: mixing constant c must be in (0,1)");
}

inline std::size_t hard_instance_default_s(const HardInstanceSpec& spec) {
    const double a = spec.alpha;
    double target = 0.0;
    switch (spec.regime) {
        case HardInstanceSpec::Regime::case1:
            target = std::pow(spec.mu, -0.5);
            break;
        case HardInstanceSpec::Regime::case2:
            target = std::pow(spec.tau_alpha, a / (1.0 + 2.0 * a)) *
                     std::pow(spec.mu, -a / (1.0 + 2.0 * a));
            break;
        case HardInstanceSpec::Regime::case3:
            target = static_cast<double>(spec.d);
            break;
    }
    const auto s = static_cast<std::size_t>(std::llround(target));
    return std::clamp<std::size_t>(s, 2, spec.d - 2);
}

inline double hard_instance_default_c(const HardInstanceSpec& spec) {
    if (spec.regime == HardInstanceSpec::Regime::case1) return 0.5;
    const double a = spec.alpha;
    const double c = std::pow(spec.mu, 1.0 / (1.0 + 2.0 * a)) *
                     std::pow(spec.tau_alpha, 2.0 * a / (1.0 + 2.0 * a));
    return std::clamp(c, 1e-8, 0.9);
}

inline HardInstance gen_wishart_hard_instance(const HardInstanceSpec& spec) {
    const std::size_t s = spec.s ? spec.s : hard_instance_default_s(spec);
    const double c = spec.c > 0.0 ? spec.c : hard_instance_default_c(spec);
    validate_hard_instance_spec(spec, s, c);
    if (spec.d > kDenseCap) throw ContractError("hard instance: d exceeds dense cap");

    const WishartEventConstants& k = wishart_event_constants();
    const double s2 = static_cast<double>(s) * static_cast<double>(s);
    Rng rng(spec.seed ^ 0xda3e39cb94b95bdbull);

    DenseMatrix w;
    double lam_s = 0.0, gap_w = 0.0, norm_w = 0.0;
    int draws = 0;
    bool ok = false;
    while (draws < spec.max_retries) {
        ++draws;
        w = detail::sample_wishart(s, rng);
        const auto eig = dense_eigendecomposition(w);
        lam_s = eig.eigenvalues.back();
        gap_w = eig.eigenvalues[s - 2] - eig.eigenvalues[s - 1];
        norm_w = eig.eigenvalues.front();
        const bool small_ok = lam_s * s2 >= k.c0 && lam_s * s2 <= k.c1;
        const bool gap_ok = gap_w * s2 >= k.c2 && gap_w * s2 <= k.c3;
        const bool norm_ok = norm_w <= k.norm_bound;
        if (small_ok && gap_ok && norm_ok) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw SolverError("gen_wishart_hard_instance: spectral event not hit within retry cap (" +
                          std::to_string(draws) + " draws)");

    HardInstance out;
    out.s = s;
    out.c = c;
    out.draws_used = draws;
    out.m = DenseMatrix(spec.d);
    // block 1: I_s - (c/5) W
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
            out.m(i, j) = (i == j ? 1.0 : 0.0) - (c / 5.0) * w(i, j);
    // block 2: (1 - (tau^alpha / d)^{1/alpha}) I
    const double mid = 1.0 - std::pow(std::pow(spec.tau_alpha, spec.alpha) /
                                          static_cast<double>(spec.d),
                                      1.0 / spec.alpha);
    for (std::size_t i = s; i + 1 < spec.d; ++i) out.m(i, i) = mid;
    // block 3: scalar zero (last diagonal entry stays 0)

    // certificate, dense-recomputed
    const auto eig = dense_eigendecomposition(out.m);
    const double lam1 = eig.eigenvalues[0];
    const double lam2 = eig.eigenvalues[1];
    const double gap = lam1 - lam2;
    double tr_shift = 0.0;
    for (double lv : eig.eigenvalues) tr_shift += std::pow(1.0 + gap - lv, spec.alpha);
    const double tau_pow = std::pow(spec.tau_alpha, spec.alpha);

    KvRecord& cert = out.certificate;
    cert.set("kind", std::string("wishart_hard"));
    cert.set("regime", std::string(spec.regime == HardInstanceSpec::Regime::case1   ? "case1"
                                   : spec.regime == HardInstanceSpec::Regime::case2 ? "case2"
                                                                                    : "case3"));
    cert.set("d", static_cast<std::uint64_t>(spec.d));
    cert.set("s", static_cast<std::uint64_t>(s));
    cert.set("c", c);
    cert.set("mu", spec.mu);
    cert.set("alpha", spec.alpha);
    cert.set("tau_alpha", spec.tau_alpha);
    cert.set("draws_used", static_cast<std::uint64_t>(draws));
    cert.set("lambda_1", lam1);
    cert.set("lambda_2", lam2);
    cert.set("gap", gap);
    cert.set("lambda_min", eig.eigenvalues.back());
    cert.set("middle_value", mid);
    cert.set("trace_shift_alpha", tr_shift);
    cert.set("tau_alpha_budget", tau_pow);
    cert.set("wishart_lambda_s_scaled", lam_s * s2);
    cert.set("wishart_gap_scaled", gap_w * s2);
    cert.set("wishart_norm", norm_w);

    // Thm-3 clause checks: (a) gap at the mu scale, (b) trace budget,
    // (c) spectral box 0 <= M <= (1 - kappa gap) I with the top eigenpair
    //     carried by the Wishart block.
    const double gap_lo = 0.9 * (c / 5.0) * k.c2 / s2;
    const bool clause_gap = gap >= gap_lo && gap >= 0.005 * spec.mu;
    const bool clause_trace = tr_shift <= 8.0 * tau_pow;
    const double top_margin = 0.9 * (c / 5.0) * k.c0 / s2;
    const bool clause_box = eig.eigenvalues.back() >= -1e-12 && lam1 <= 1.0 - top_margin &&
                            mid <= lam2 + 1e-12;
    cert.set("clause_gap", std::string(clause_gap ? "pass" : "fail"));
    cert.set("clause_trace", std::string(clause_trace ? "pass" : "fail"));
    cert.set("clause_box", std::string(clause_box ? "pass" : "fail"));
    cert.set("all_clauses", std::string(clause_gap && clause_trace && clause_box ? "pass" : "fail"));
    return out;
}

// ---------------------------------------------------------------------------
// Regression datasets
// ---------------------------------------------------------------------------

struct GeneratedDataset {
    RegressionDataset data;
    Vec planted_x;
    KvRecord certificate;
};

inline GeneratedDataset gen_regression_dataset(std::size_t n, std::size_t d,
                                               const SpectrumSpec& spectrum, double noise,
                                               std::uint64_t seed, double mu = 0.0) {
    if (n < 1 || d < 1) throw ContractError("gen_regression_dataset: n, d >= 1 required");
    if (spectrum.d != d) throw ContractError("gen_regression_dataset: spectrum dim mismatch");
    GeneratedDataset out;
    out.data.n = n;
    out.data.dim = d;
    out.data.mu = mu;
    out.data.rows.resize(n * d);
    out.data.targets.resize(n);

    Rng rng(seed ^ 0xc2b2ae3d27d4eb4full);
    const Vec lam = spectrum.spectrum();
    Vec sqrt_lam(d);
    for (std::size_t i = 0; i < d; ++i) sqrt_lam[i] = std::sqrt(lam[i]);
    const HouseholderOrthogonal q = HouseholderOrthogonal::sample(d, rng);

    for (std::size_t i = 0; i < n; ++i) {
        Vec g = rng.gaussian_vector(d);
        for (std::size_t j = 0; j < d; ++j) g[j] *= sqrt_lam[j];
        q.apply(g);
        for (std::size_t j = 0; j < d; ++j) out.data.rows[i * d + j] = g[j];
    }
    out.data.normalize_rows();

    out.planted_x = rng.gaussian_vector(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = out.data.row(i);
        double p = 0.0;
        for (std::size_t j = 0; j < d; ++j) p += r[j] * out.planted_x[j];
        out.data.targets[i] = p + noise * rng.gaussian();
    }

    out.certificate.set("kind", std::string("regression"));
    out.certificate.set("n", static_cast<std::uint64_t>(n));
    out.certificate.set("d", static_cast<std::uint64_t>(d));
    out.certificate.set("seed", static_cast<std::uint64_t>(seed));
    out.certificate.set("noise", noise);
    out.certificate.set("mu", mu);
    out.certificate.set("row_scale", out.data.row_scale);
    out.certificate.set("max_row_norm", out.data.max_row_norm());
    return out;
}

// ---------------------------------------------------------------------------
// Scaling-exponent fitter: least-squares slope of log(count) vs log(param).
// ---------------------------------------------------------------------------

struct ExponentFit {
    double slope = 0.0;
    double stderr_slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

inline ExponentFit fit_scaling_exponent(const std::vector<std::pair<double, double>>& sweep) {
    if (sweep.size() < 4) throw ContractError("fit_scaling_exponent: need >= 4 sweep points");
    const std::size_t n = sweep.size();
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(sweep[i].first > 0.0) || !(sweep[i].second > 0.0))
            throw ContractError("fit_scaling_exponent: inputs must be positive");
        xs[i] = std::log(sweep[i].first);
        ys[i] = std::log(sweep[i].second);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (xs[i] == xs[j]) throw ContractError("fit_scaling_exponent: parameters must be distinct");

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    ExponentFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        rss += r * r;
    }
    fit.stderr_slope = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
    return fit;
}

}  // namespace agmas
