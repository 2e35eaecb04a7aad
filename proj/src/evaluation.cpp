#include "dac/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "dac/error.hpp"

namespace dac {

namespace {

void check_labels(const std::vector<int>& truth,
                  const std::vector<int>& predicted, int clusters) {
    if (truth.size() != predicted.size()) {
        throw DimensionError("label sequences have different lengths");
    }
    if (truth.empty()) {
        throw ConfigError("label sequences are empty");
    }
    if (clusters < 1) {
        throw ConfigError("cluster count must be >= 1");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= clusters || predicted[i] < 0 ||
            predicted[i] >= clusters) {
            throw ConfigError("label outside [0, K)");
        }
    }
}

/// Minimum-cost perfect matching on a square int64 cost matrix via the
/// potentials/augmenting-path method; returns column assigned to each row.
std::vector<int> assign_min_cost(const std::vector<std::int64_t>& cost,
                                 int n) {
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0);
    std::vector<std::int64_t> v(n + 1, 0);
    std::vector<int> match(n + 1, 0); // match[j] = row matched to column j
    std::vector<int> way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<std::int64_t> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            std::int64_t delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const std::int64_t cur =
                    cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        row_to_col[match[j] - 1] = j - 1;
    }
    return row_to_col;
}

double entropy(const std::vector<std::int64_t>& counts, double total) {
    double h = 0.0;
    for (std::int64_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

} // namespace

ContingencyTable contingency(const std::vector<int>& truth,
                             const std::vector<int>& predicted, int clusters) {
    check_labels(truth, predicted, clusters);
    ContingencyTable table;
    table.clusters = clusters;
    table.counts.assign(static_cast<std::size_t>(clusters) * clusters, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++table.at(truth[i], predicted[i]);
    }
    return table;
}

double accuracy(const std::vector<int>& truth,
                const std::vector<int>& predicted, int clusters) {
    if (clusters > 1000) {
        throw ConfigError("accuracy supports at most 1000 clusters");
    }
    const ContingencyTable table = contingency(truth, predicted, clusters);
    std::vector<std::int64_t> cost(table.counts.size());
    for (std::size_t i = 0; i < cost.size(); ++i) {
        cost[i] = -table.counts[i];
    }
    const std::vector<int> mapping = assign_min_cost(cost, clusters);
    std::int64_t matched = 0;
    for (int i = 0; i < clusters; ++i) {
        matched += table.at(i, mapping[i]);
    }
    return static_cast<double>(matched) / static_cast<double>(truth.size());
}

double accuracy_bruteforce(const std::vector<int>& truth,
                           const std::vector<int>& predicted, int clusters) {
    if (clusters > 8) {
        throw ConfigError("brute-force accuracy supports at most 8 clusters");
    }
    const ContingencyTable table = contingency(truth, predicted, clusters);
    std::vector<int> perm(clusters);
    std::iota(perm.begin(), perm.end(), 0);
    std::int64_t best = 0;
    do {
        std::int64_t matched = 0;
        for (int i = 0; i < clusters; ++i) {
            matched += table.at(i, perm[i]);
        }
        best = std::max(best, matched);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(truth.size());
}

double nmi(const std::vector<int>& truth, const std::vector<int>& predicted) {
    const int clusters =
        1 + std::max(*std::max_element(truth.begin(), truth.end()),
                     *std::max_element(predicted.begin(), predicted.end()));
    const ContingencyTable table = contingency(truth, predicted, clusters);
    const double total = static_cast<double>(truth.size());

    std::vector<std::int64_t> row_sums(clusters, 0);
    std::vector<std::int64_t> col_sums(clusters, 0);
    for (int i = 0; i < clusters; ++i) {
        for (int j = 0; j < clusters; ++j) {
            row_sums[i] += table.at(i, j);
            col_sums[j] += table.at(i, j);
        }
    }

    double mutual = 0.0;
    for (int i = 0; i < clusters; ++i) {
        for (int j = 0; j < clusters; ++j) {
            const std::int64_t nij = table.at(i, j);
            if (nij == 0) continue;
            const double pij = static_cast<double>(nij) / total;
            const double pi = static_cast<double>(row_sums[i]) / total;
            const double pj = static_cast<double>(col_sums[j]) / total;
            mutual += pij * std::log(pij / (pi * pj));
        }
    }

    const double mean_entropy =
        0.5 * (entropy(row_sums, total) + entropy(col_sums, total));
    if (mean_entropy == 0.0) {
        // Both labelings constant: identical partitions by convention.
        return 1.0;
    }
    return std::clamp(mutual / mean_entropy, 0.0, 1.0);
}

PairCounts pair_counts(std::int64_t n, std::int64_t clusters) {
    if (clusters < 1 || n < clusters) {
        throw ConfigError("pair counts need n >= K >= 1");
    }
    PairCounts pc;
    pc.total_unordered = n * (n - 1) / 2;

    // K·C(n/K, 2) = n(n−K)/(2K); exact integer arithmetic when divisible.
    const std::int64_t within_num = n * (n - clusters);
    if (within_num % (2 * clusters) == 0) {
        pc.within_estimate =
            static_cast<double>(within_num / (2 * clusters));
    } else {
        pc.within_estimate = static_cast<double>(n) *
                             static_cast<double>(n - clusters) /
                             (2.0 * static_cast<double>(clusters));
    }

    // ½n²(1 − 1/K) = n²(K−1)/(2K), same exact-path treatment.
    const std::int64_t between_num = n * n * (clusters - 1);
    if (between_num % (2 * clusters) == 0) {
        pc.between_estimate =
            static_cast<double>(between_num / (2 * clusters));
    } else {
        pc.between_estimate = 0.5 * static_cast<double>(n) *
                              static_cast<double>(n) *
                              (1.0 - 1.0 / static_cast<double>(clusters));
    }

    pc.balanced = (n % clusters == 0);
    if (pc.balanced) {
        const std::int64_t per = n / clusters;
        pc.within_exact = clusters * (per * (per - 1) / 2);
        pc.between_exact = pc.total_unordered - pc.within_exact;
    }
    return pc;
}

Matrix pca_project_2d(const Matrix& x) {
    if (x.rows() < 1) {
        throw ConfigError("cannot project an empty matrix");
    }
    if (x.cols() < 2) {
        throw DimensionError("projection needs at least 2 feature columns");
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    const Matrix cov = (centered.transpose() * centered) /
                       std::max<double>(1.0, static_cast<double>(x.rows() - 1));

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed in projection");
    }
    // Eigenvalues come in ascending order; take the last two columns.
    const Eigen::Index p = cov.cols();
    Matrix components(p, 2);
    components.col(0) = solver.eigenvectors().col(p - 1);
    components.col(1) = solver.eigenvectors().col(p - 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::Index argmax = 0;
        components.col(c).cwiseAbs().maxCoeff(&argmax);
        if (components(argmax, c) < 0.0) {
            components.col(c) = -components.col(c);
        }
    }
    return centered * components;
}

} // namespace dac
