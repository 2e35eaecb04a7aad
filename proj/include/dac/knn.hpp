#pragma once

#include <utility>
#include <vector>

#include "dac/matrix.hpp"

namespace dac {

/// Directed neighbor entry: j is among the k most cosine-similar points to i.
struct KnnEdge {
    int i = 0;
    int j = 0;
    double similarity = 0.0;
};

/// Per-batch k-nearest-neighbor graph over cosine similarity of the raw
/// (feature-scaled) rows. Each node carries exactly k outgoing entries.
struct KnnGraph {
    std::vector<KnnEdge> edges;
    int k = 0;
};

/// Unordered high-confidence pairs; each pair stored as (min, max), sorted.
struct AnchorSet {
    std::vector<std::pair<int, int>> pairs;
};

/// Builds the batch k-NN graph by full pairwise cosine similarity.
/// Ties are broken toward the smaller candidate index. Requires at least
/// k+1 rows and no degenerate (near-zero) rows.
KnnGraph build_knn_graph(const Matrix& x, int k);

/// Keeps the ceil(fraction * unique-edge-count) unordered pairs with the
/// largest similarity; ties broken by (min, max) lexicographic order.
AnchorSet extract_anchors(const KnnGraph& graph, double fraction);

} // namespace dac
