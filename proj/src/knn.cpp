#include "dac/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dac/error.hpp"

namespace dac {

KnnGraph build_knn_graph(const Matrix& x, int k) {
    if (k < 1) {
        throw ConfigError("neighbor count must be >= 1");
    }
    const int n = static_cast<int>(x.rows());
    if (n < k + 1) {
        throw ConfigError("batch too small for k-NN graph: need at least k+1 rows");
    }

    const Matrix normalized = row_normalized(x);
    Matrix sims = normalized * normalized.transpose();
    // Mirror the lower triangle so sims(i,j) and sims(j,i) are bitwise equal
    // regardless of the matrix product's summation order.
    for (Eigen::Index r = 0; r < sims.rows(); ++r) {
        for (Eigen::Index c = r + 1; c < sims.cols(); ++c) {
            sims(r, c) = sims(c, r);
        }
    }

    KnnGraph graph;
    graph.k = k;
    graph.edges.reserve(static_cast<std::size_t>(n) * k);
    std::vector<int> order(n - 1);
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j != i) order.push_back(j);
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&sims, i](int a, int b) {
                              if (sims(i, a) != sims(i, b)) {
                                  return sims(i, a) > sims(i, b);
                              }
                              return a < b;
                          });
        for (int rank = 0; rank < k; ++rank) {
            graph.edges.push_back({i, order[rank], sims(i, order[rank])});
        }
    }
    return graph;
}

AnchorSet extract_anchors(const KnnGraph& graph, double fraction) {
    if (graph.edges.empty()) {
        throw ConfigError("cannot extract anchors from an empty graph");
    }
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ConfigError("anchor fraction must lie in (0, 1]");
    }

    // Unique unordered edges; both directions of a pair carry the same
    // similarity because the matrix was mirrored at construction.
    std::map<std::pair<int, int>, double> unique;
    for (const KnnEdge& e : graph.edges) {
        unique.emplace(std::minmax(e.i, e.j), e.similarity);
    }

    std::vector<std::pair<std::pair<int, int>, double>> ranked(unique.begin(),
                                                               unique.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    const auto total = ranked.size();
    auto keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(total)));
    keep = std::min(std::max<std::size_t>(keep, 1), total);

    AnchorSet anchors;
    anchors.pairs.reserve(keep);
    for (std::size_t r = 0; r < keep; ++r) {
        anchors.pairs.push_back(ranked[r].first);
    }
    std::sort(anchors.pairs.begin(), anchors.pairs.end());
    return anchors;
}

} // namespace dac
