// One-off Monte-Carlo calibration of the Wishart conditioning-event
// percentiles frozen in benchgen.hpp. Prints per-size and pooled 10th/90th
// percentiles of s^2*lambda_s(W), s^2*gap(W) and the norm tail for W = GG'/s.
#include <algorithm>
#include <cstdio>
#include <vector>

#include "agmas/benchgen.hpp"

using namespace agmas;

namespace {

double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double idx = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = idx - lo;
    return v[lo] * (1.0 - w) + v[hi] * w;
}

}  // namespace

int main(int argc, char** argv) {
    const int n50 = argc > 1 ? std::atoi(argv[1]) : 10000;
    const int n100 = argc > 2 ? std::atoi(argv[2]) : 10000;
    const int n200 = argc > 3 ? std::atoi(argv[3]) : 2000;
    const std::vector<std::pair<std::size_t, int>> plan{{50, n50}, {100, n100}, {200, n200}};

    double pooled_c0 = 1e300, pooled_c1 = 0.0, pooled_c2 = 1e300, pooled_c3 = 0.0;
    double norm_hi = 0.0;
    for (auto [s, draws] : plan) {
        Rng rng(777 + s);
        std::vector<double> small, gap, norm;
        small.reserve(draws);
        gap.reserve(draws);
        norm.reserve(draws);
        const double s2 = static_cast<double>(s) * static_cast<double>(s);
        for (int i = 0; i < draws; ++i) {
            const DenseMatrix w = detail::sample_wishart(s, rng);
            const auto eig = dense_eigendecomposition(w);
            small.push_back(eig.eigenvalues[s - 1] * s2);
            gap.push_back((eig.eigenvalues[s - 2] - eig.eigenvalues[s - 1]) * s2);
            norm.push_back(eig.eigenvalues[0]);
        }
        const double p10s = percentile(small, 0.10), p90s = percentile(small, 0.90);
        const double p10g = percentile(gap, 0.10), p90g = percentile(gap, 0.90);
        const double p99n = percentile(norm, 0.99);
        std::printf("s=%zu draws=%d  s2*lam_s p10=%.4f p90=%.4f  s2*gap p10=%.4f p90=%.4f  "
                    "norm p99=%.4f max=%.4f\n",
                    s, draws, p10s, p90s, p10g, p90g, p99n,
                    *std::max_element(norm.begin(), norm.end()));
        std::fflush(stdout);
        pooled_c0 = std::min(pooled_c0, p10s);
        pooled_c1 = std::max(pooled_c1, p90s);
        pooled_c2 = std::min(pooled_c2, p10g);
        pooled_c3 = std::max(pooled_c3, p90g);
        norm_hi = std::max(norm_hi, *std::max_element(norm.begin(), norm.end()));
    }
    std::printf("POOLED c0=%.4f c1=%.4f c2=%.4f c3=%.4f norm_max=%.4f\n", pooled_c0, pooled_c1,
                pooled_c2, pooled_c3, norm_hi);
    return 0;
}
