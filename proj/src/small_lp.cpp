#include "stlcbf/small_lp.hpp"

#include <cmath>
#include <vector>

namespace stlcbf {

namespace {

// Calls visit(rows) for every k-subset of {0..n-1} in lexicographic order.
template <class F>
void for_each_subset(int n, int k, F&& visit) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        visit(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

}  // namespace

std::optional<LpSolution> maximize_by_vertices(const Eigen::VectorXd& c, const Eigen::MatrixXd& a,
                                               const Eigen::VectorXd& b, double tol) {
    const int n = static_cast<int>(c.size());
    const int rows = static_cast<int>(a.rows());
    std::optional<LpSolution> best;
    if (rows < n) return best;

    Eigen::MatrixXd sub(n, n);
    Eigen::VectorXd rhs(n);
    for_each_subset(rows, n, [&](const std::vector<int>& idx) {
        for (int i = 0; i < n; ++i) {
            sub.row(i) = a.row(idx[static_cast<std::size_t>(i)]);
            rhs[i] = b[idx[static_cast<std::size_t>(i)]];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
        if (lu.rank() < n) return;
        Eigen::VectorXd x = lu.solve(rhs);
        if (!x.allFinite()) return;
        for (int r = 0; r < rows; ++r) {
            const double slack = a.row(r).dot(x) - b[r];
            const double scale = 1.0 + std::abs(b[r]) + a.row(r).cwiseAbs().dot(x.cwiseAbs());
            if (slack > tol * scale) return;
        }
        const double v = c.dot(x);
        if (!best || v > best->value) best = LpSolution{x, v};
    });
    return best;
}

}  // namespace stlcbf
