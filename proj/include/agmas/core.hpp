// Core problem representations, oracle-access contracts and the counting layer.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace agmas {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Small dense-vector kernels. Everything in the library runs on these.
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double nrm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scal(double alpha, Vec& x) {
    for (double& v : x) v *= alpha;
}

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

inline bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Seedable randomness. Gaussian sampling is hand-rolled (Box-Muller) so that
// a (spec, seed) pair reproduces bit-identical instances independent of the
// standard library's distribution internals.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in [0,1)
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vec gaussian_vector(std::size_t d) {
        Vec v(d);
        for (double& x : v) x = gaussian();
        return v;
    }

    // Uniform on the unit sphere via normalized standard normals.
    Vec unit_vector(std::size_t d) {
        Vec v = gaussian_vector(d);
        double n = nrm2(v);
        while (n == 0.0) {
            v = gaussian_vector(d);
            n = nrm2(v);
        }
        scal(1.0 / n, v);
        return v;
    }

    std::uint64_t next_u64() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

// Violated precondition / dimension mismatch.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric failure inside a solver (divergence, budget exhaustion, NaN).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// OracleLedger: monotone counters, the quantity every complexity bound is
// stated in. One ledger per solver run.
// ---------------------------------------------------------------------------

struct OracleLedger {
    std::uint64_t grad_calls = 0;
    std::uint64_t hvp_calls = 0;
    std::uint64_t data_accesses = 0;

    void add_grad() { ++grad_calls; }
    void add_hvp() { ++hvp_calls; }
    void add_data(std::uint64_t rows) { data_accesses += rows; }

    OracleLedger snapshot() const { return *this; }
};

// ---------------------------------------------------------------------------
// QuadraticProblem: implicit symmetric PSD operator A plus linear term b for
// min over x of  (1/2) x'Ax + b'x.
// ---------------------------------------------------------------------------

struct QuadraticProblem {
    std::size_t dim = 0;
    // y = A x; callers never see A itself.
    std::function<void(const Vec&, Vec&)> apply_A;
    Vec b;
    double mu_hint = 0.0;
    // Dense copy, test instances only (d <= 512).
    std::optional<std::vector<double>> dense_A;  // row-major dim x dim

    Vec apply(const Vec& x) const {
        if (x.size() != dim) throw ContractError("QuadraticProblem::apply: dimension mismatch");
        Vec y(dim);
        apply_A(x, y);
        return y;
    }
};

// ---------------------------------------------------------------------------
// SecondOrderOracle: f / grad / Hessian-vector access to a generic objective
// with H-Lipschitz Hessian.
// ---------------------------------------------------------------------------

struct SecondOrderOracle {
    std::size_t dim = 0;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
    std::function<Vec(const Vec&, const Vec&)> hvp;  // (x, v) -> Hessian(x) * v
    double hessian_lipschitz = 0.0;
};

// ---------------------------------------------------------------------------
// LowRankDeflation: extracted pairs {(a_i, v_i)} forming
//   A1 = sum_i (a_i/5) v_i v_i'.
// The 1/5 fraction is fixed by the extraction rule.
// ---------------------------------------------------------------------------

struct LowRankDeflation {
    std::size_t dim = 0;
    std::vector<double> coeffs;  // a_1..a_r (positive, pre-scaling)
    std::vector<Vec> vecs;       // unit vectors v_1..v_r

    static constexpr double scale = 0.2;  // deflation fraction 1/5

    std::size_t rank() const { return coeffs.size(); }
    bool empty() const { return coeffs.empty(); }

    void push(double a, Vec v) {
        coeffs.push_back(a);
        vecs.push_back(std::move(v));
    }

    // y += A1 x, O(r d)
    void apply_add(const Vec& x, Vec& y) const {
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            const double c = scale * coeffs[i] * dot(vecs[i], x);
            axpy(c, vecs[i], y);
        }
    }

    Vec apply(const Vec& x) const {
        if (x.size() != dim) throw ContractError("LowRankDeflation::apply: dimension mismatch");
        Vec y(dim, 0.0);
        apply_add(x, y);
        return y;
    }

    // (1/2) x'A1 x
    double quad_form_half(const Vec& x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            const double p = dot(vecs[i], x);
            s += scale * coeffs[i] * p * p;
        }
        return 0.5 * s;
    }
};

// ---------------------------------------------------------------------------
// SolverReport
// ---------------------------------------------------------------------------

struct SolverReport {
    Vec x_hat;
    double objective = 0.0;
    OracleLedger ledger_snapshot;
    std::uint64_t iterations = 0;
    // (grad_calls, objective) samples, grad_calls strictly increasing
    std::vector<std::pair<std::uint64_t, double>> trace;
    std::string branch = "n/a";  // prox-agd | agd | cg | n/a
    bool converged = true;
    std::string note;
};

// ---------------------------------------------------------------------------
// Counting wrappers. Every gradient exposure flows through one of these; a
// single A-apply costs exactly one grad call, low-rank corrections and vector
// arithmetic are free.
// ---------------------------------------------------------------------------

// grad(x) = A x + b, charging one call per evaluation.
inline std::function<Vec(const Vec&)> counting_gradient(const QuadraticProblem& problem,
                                                        OracleLedger& ledger) {
    return [&problem, &ledger](const Vec& x) -> Vec {
        if (x.size() != problem.dim) throw ContractError("counting_gradient: dimension mismatch");
        ledger.add_grad();
        Vec y(problem.dim);
        problem.apply_A(x, y);
        axpy(1.0, problem.b, y);
        return y;
    };
}

// grad(x) = (A - A1) x + b with one counted A-apply and a free O(rd) correction.
inline std::function<Vec(const Vec&)> deflated_gradient(const QuadraticProblem& problem,
                                                        const LowRankDeflation& deflation,
                                                        OracleLedger& ledger) {
    if (!deflation.empty() && deflation.dim != problem.dim)
        throw ContractError("deflated_gradient: deflation dimension mismatch");
    return [&problem, &deflation, &ledger](const Vec& x) -> Vec {
        if (x.size() != problem.dim) throw ContractError("deflated_gradient: dimension mismatch");
        ledger.add_grad();
        Vec y(problem.dim);
        problem.apply_A(x, y);
        for (std::size_t i = 0; i < deflation.coeffs.size(); ++i) {
            const double c = LowRankDeflation::scale * deflation.coeffs[i] * dot(deflation.vecs[i], x);
            axpy(-c, deflation.vecs[i], y);
        }
        axpy(1.0, problem.b, y);
        return y;
    };
}

// Counted symmetric operator; shared handle for the spectral routines.
// apply() charges exactly one call (grad or hvp) on the attached ledger.
struct CountedOp {
    enum class Kind { grad, hvp };

    std::size_t dim = 0;
    std::function<void(const Vec&, Vec&)> op;
    OracleLedger* ledger = nullptr;
    Kind kind = Kind::grad;

    Vec apply(const Vec& x) const {
        if (x.size() != dim) throw ContractError("CountedOp::apply: dimension mismatch");
        if (ledger) {
            if (kind == Kind::hvp)
                ledger->add_hvp();
            else
                ledger->add_grad();
        }
        Vec y(dim);
        op(x, y);
        return y;
    }
};

// ---------------------------------------------------------------------------
// finite_diff_check: max relative error between central finite differences of
// value and the directional derivative reported by grad. Touches no ledger.
// ---------------------------------------------------------------------------

inline double finite_diff_check(const SecondOrderOracle& oracle, const Vec& x, int n_probes,
                                std::uint64_t seed = 1234, double step = 1e-5) {
    if (n_probes < 1) throw ContractError("finite_diff_check: n_probes >= 1 required");
    Rng rng(seed);
    const Vec g = oracle.grad(x);
    double worst = 0.0;
    Vec xp = x, xm = x;
    for (int p = 0; p < n_probes; ++p) {
        const Vec dir = rng.unit_vector(oracle.dim);
        xp = x;
        xm = x;
        axpy(step, dir, xp);
        axpy(-step, dir, xm);
        const double fd = (oracle.value(xp) - oracle.value(xm)) / (2.0 * step);
        const double gd = dot(g, dir);
        const double err = std::abs(fd - gd) / (1.0 + std::abs(gd));
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace agmas
