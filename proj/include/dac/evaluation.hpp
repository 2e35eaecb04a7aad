#pragma once

#include <cstdint>
#include <vector>

#include "dac/matrix.hpp"

namespace dac {

/// K×K intersection counts between two labelings: entry (i, j) counts points
/// with truth label i and predicted label j.
struct ContingencyTable {
    int clusters = 0;
    std::vector<std::int64_t> counts; // row-major K×K

    std::int64_t at(int i, int j) const { return counts[i * clusters + j]; }
    std::int64_t& at(int i, int j) { return counts[i * clusters + j]; }
};

ContingencyTable contingency(const std::vector<int>& truth,
                             const std::vector<int>& predicted, int clusters);

/// Clustering accuracy: the best one-to-one relabeling of predicted clusters
/// onto truth labels, solved on the contingency table by an O(K³)
/// augmenting-path assignment. Guarded to K ≤ 1000.
double accuracy(const std::vector<int>& truth,
                const std::vector<int>& predicted, int clusters);

/// Exhaustive maximum over all K! bijections; oracle for the fast path.
double accuracy_bruteforce(const std::vector<int>& truth,
                           const std::vector<int>& predicted, int clusters);

/// Normalized mutual information with the arithmetic-mean-of-entropies
/// normalizer; 0·log 0 taken as 0. Identical labelings give 1, independence
/// gives 0.
double nmi(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Within- and between-cluster pair counts for a dataset of n points in K
/// balanced clusters. The estimates follow the balanced-cluster formulas
/// K·C(n/K, 2) and ½n²(1 − 1/K); the latter is ordered-pair styled and
/// exceeds the exact unordered count. Exact fields are meaningful only when
/// n is divisible by K (balanced == true).
struct PairCounts {
    double within_estimate = 0.0;
    double between_estimate = 0.0;
    std::int64_t total_unordered = 0; // C(n, 2)
    bool balanced = false;
    std::int64_t within_exact = 0;  // K·C(n/K, 2) when balanced
    std::int64_t between_exact = 0; // total − within when balanced
};

PairCounts pair_counts(std::int64_t n, std::int64_t clusters);

/// Projects rows onto the top-2 principal components (column-mean centered).
/// Component signs are fixed by making each component's largest-magnitude
/// coordinate positive, so the projection is deterministic.
Matrix pca_project_2d(const Matrix& x);

} // namespace dac
