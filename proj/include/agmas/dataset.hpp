// Least-squares dataset with access counting: one ledger tick per row touch.
#pragma once

#include <cmath>

#include "agmas/core.hpp"

namespace agmas {

// Rows a_i (||a_i|| <= 1 after normalization), targets b_i, ridge term mu.
// Objective: (1/n) sum_i (1/2)(a_i'x - b_i)^2 + (mu/2)||x||^2.
struct RegressionDataset {
    std::size_t n = 0, dim = 0;
    std::vector<double> rows;  // n x dim row-major
    Vec targets;
    double mu = 0.0;
    double row_scale = 1.0;  // factor applied by the normalization pass

    const double* row(std::size_t i) const { return rows.data() + i * dim; }

    double max_row_norm() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* r = row(i);
            for (std::size_t j = 0; j < dim; ++j) s += r[j] * r[j];
            worst = std::max(worst, std::sqrt(s));
        }
        return worst;
    }

    // Rescale rows so that max ||a_i|| = 1; returns the applied factor.
    double normalize_rows() {
        const double m = max_row_norm();
        if (m <= 0.0 || m == 1.0) return 1.0;
        const double f = 1.0 / m;
        for (double& v : rows) v *= f;
        row_scale *= f;
        return f;
    }
};

// Fused per-row primitives; each touches its row exactly once on the ledger.
struct CountedData {
    const RegressionDataset* data = nullptr;
    OracleLedger* ledger = nullptr;

    // returns a_i'x - b_i and accumulates coef*(a_i'x - b_i)*a_i into out
    double residual_accumulate(std::size_t i, const Vec& x, double coef, Vec& out) const {
        ledger->add_data(1);
        const double* r = data->row(i);
        double p = 0.0;
        for (std::size_t j = 0; j < data->dim; ++j) p += r[j] * x[j];
        const double res = p - data->targets[i];
        const double c = coef * res;
        for (std::size_t j = 0; j < data->dim; ++j) out[j] += c * r[j];
        return res;
    }

    // out += coef * a_i (a_i'v); one touch
    void hvp_accumulate(std::size_t i, const Vec& v, double coef, Vec& out) const {
        ledger->add_data(1);
        const double* r = data->row(i);
        double p = 0.0;
        for (std::size_t j = 0; j < data->dim; ++j) p += r[j] * v[j];
        const double c = coef * p;
        for (std::size_t j = 0; j < data->dim; ++j) out[j] += c * r[j];
    }

    // 0.5*(a_i'x-b_i)^2 contribution; one touch
    double loss_term(std::size_t i, const Vec& x) const {
        ledger->add_data(1);
        const double* r = data->row(i);
        double p = 0.0;
        for (std::size_t j = 0; j < data->dim; ++j) p += r[j] * x[j];
        const double res = p - data->targets[i];
        return 0.5 * res * res;
    }
};

}  // namespace agmas
