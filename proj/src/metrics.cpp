#include "trace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace trace {
namespace {

// W1 between two sorted 1D empirical measures with possibly different
// sizes, via the quantile-function integral.
double w1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size(), m = b.size();
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    double pos = 0.0;
    while (i < n && j < m) {
        double qa = static_cast<double>(i + 1) / n;
        double qb = static_cast<double>(j + 1) / m;
        double next = std::min(qa, qb);
        acc += (next - pos) * std::abs(a[i] - b[j]);
        pos = next;
        if (qa <= qb) ++i;
        if (qb <= qa) ++j;
    }
    return acc;
}

double median_sq_distance(const Mat& a, const Mat& b) {
    // median heuristic on a bounded subsample
    const int cap = 512;
    const int na = std::min<int>(cap, a.rows());
    const int nb = std::min<int>(cap, b.rows());
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(na) * nb);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            d2.push_back((a.row(i) - b.row(j)).squaredNorm());
    std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
    double med = d2[d2.size() / 2];
    return med > 0.0 ? med : 1.0;
}

}  // namespace

double sliced_w1(const Mat& a, const Mat& b, int n_projections,
                 std::uint64_t seed, Exec exec) {
    if (a.cols() != b.cols()) throw std::invalid_argument("dimension mismatch");
    if (a.rows() == 0 || b.rows() == 0)
        throw std::invalid_argument("empty sample set");
    const int dim = static_cast<int>(a.cols());

    std::vector<double> per_proj(n_projections);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int k = 0; k < n_projections; ++k) {
        auto eng = make_engine(seed, stream::metric_proj, k);
        Vec dir(dim);
        for (int i = 0; i < dim; ++i) dir[i] = standard_normal(eng);
        dir /= dir.norm();
        std::vector<double> pa(a.rows()), pb(b.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i) pa[i] = a.row(i).dot(dir);
        for (Eigen::Index i = 0; i < b.rows(); ++i) pb[i] = b.row(i).dot(dir);
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        per_proj[k] = w1_sorted(pa, pb);
    }
    double acc = 0.0;  // fixed-order reduction
    for (double v : per_proj) acc += v;
    return acc / n_projections;
}

double mmd_rbf(const Mat& a, const Mat& b, Exec exec) {
    if (a.cols() != b.cols()) throw std::invalid_argument("dimension mismatch");
    if (a.rows() == 0 || b.rows() == 0)
        throw std::invalid_argument("empty sample set");
    const int na = static_cast<int>(a.rows());
    const int nb = static_cast<int>(b.rows());
    const double gamma = 1.0 / (2.0 * median_sq_distance(a, b));

    std::vector<double> row_aa(na, 0.0), row_bb(nb, 0.0), row_ab(na, 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int i = 0; i < na; ++i) {
        double aa = 0.0, ab = 0.0;
        for (int j = 0; j < na; ++j)
            aa += std::exp(-gamma * (a.row(i) - a.row(j)).squaredNorm());
        for (int j = 0; j < nb; ++j)
            ab += std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
        row_aa[i] = aa;
        row_ab[i] = ab;
    }
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int i = 0; i < nb; ++i) {
        double bb = 0.0;
        for (int j = 0; j < nb; ++j)
            bb += std::exp(-gamma * (b.row(i) - b.row(j)).squaredNorm());
        row_bb[i] = bb;
    }
    double t_aa = 0.0, t_bb = 0.0, t_ab = 0.0;
    for (double v : row_aa) t_aa += v;
    for (double v : row_bb) t_bb += v;
    for (double v : row_ab) t_ab += v;
    double mmd2 = t_aa / (static_cast<double>(na) * na) +
                  t_bb / (static_cast<double>(nb) * nb) -
                  2.0 * t_ab / (static_cast<double>(na) * nb);
    return mmd2 > 0.0 ? std::sqrt(mmd2) : 0.0;
}

MetricPair eval_metrics(const Mat& a, const Mat& b, int n_projections,
                        std::uint64_t seed, Exec exec) {
    return {sliced_w1(a, b, n_projections, seed, exec), mmd_rbf(a, b, exec)};
}

}  // namespace trace
