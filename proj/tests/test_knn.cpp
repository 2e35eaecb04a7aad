#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "dac/data.hpp"
#include "dac/knn.hpp"
#include "dac/matrix.hpp"
#include "dac/rng.hpp"
#include "test_helpers.hpp"

using dac::AnchorSet;
using dac::KnnGraph;
using dac::Matrix;
using dac::test::mat;

namespace {

std::vector<int> neighbors_of(const KnnGraph& graph, int node) {
    std::vector<int> out;
    for (const dac::KnnEdge& e : graph.edges) {
        if (e.i == node) {
            out.push_back(e.j);
        }
    }
    return out;
}

Matrix random_rows(dac::rng::Engine& eng, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = eng.uniform(0.05, 1.0);
        }
    }
    return m;
}

} // namespace

TEST_CASE("identical points have neighbor similarity exactly 1") {
    const Matrix x = mat({{0.4, 0.2}, {0.4, 0.2}, {0.4, 0.2}});
    const KnnGraph graph = dac::build_knn_graph(x, 1);
    REQUIRE(graph.edges.size() == 3);
    for (const dac::KnnEdge& e : graph.edges) {
        CHECK(e.i != e.j);
        CHECK(e.similarity == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("cosine ranking picks the nearly-parallel point") {
    const Matrix x = mat({{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.01}});
    const KnnGraph graph = dac::build_knn_graph(x, 1);
    const std::vector<int> n0 = neighbors_of(graph, 0);
    REQUIRE(n0.size() == 1);
    CHECK(n0[0] == 2);
}

TEST_CASE("ties break toward the smaller candidate index") {
    // Points 1 and 2 are identical, both orthogonal complements tie for 3.
    const Matrix x = mat({{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}, {1.0, 1.0}});
    const KnnGraph graph = dac::build_knn_graph(x, 1);
    const std::vector<int> n3 = neighbors_of(graph, 3);
    REQUIRE(n3.size() == 1);
    // Candidates 0, 1, 2 all share cosine 1/sqrt(2) with point 3.
    CHECK(n3[0] == 0);
}

TEST_CASE("graph matches a brute-force ranking oracle on random batches") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        dac::rng::Engine eng(900 + seed);
        const int n = 50;
        const Matrix x = random_rows(eng, n, 8);
        const int k = 4;
        const KnnGraph graph = dac::build_knn_graph(x, k);
        REQUIRE(static_cast<int>(graph.edges.size()) == n * k);

        const Matrix z = dac::row_normalized(x);
        for (int i = 0; i < n; ++i) {
            // Oracle: sort candidates by (similarity desc, index asc).
            std::vector<std::pair<double, int>> ranked;
            for (int j = 0; j < n; ++j) {
                if (j != i) {
                    ranked.emplace_back(z.row(i).dot(z.row(j)), j);
                }
            }
            std::sort(ranked.begin(), ranked.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
            const std::vector<int> got = neighbors_of(graph, i);
            REQUIRE(static_cast<int>(got.size()) == k);
            for (int r = 0; r < k; ++r) {
                CHECK(got[r] == ranked[r].second);
            }
        }
    }
}

TEST_CASE("graph construction rejects bad inputs") {
    const Matrix x = mat({{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(dac::build_knn_graph(x, 2), dac::ConfigError); // n < k+1
    CHECK_THROWS_AS(dac::build_knn_graph(x, 0), dac::ConfigError);
    const Matrix zero_row = mat({{1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(dac::build_knn_graph(zero_row, 1), dac::NumericError);
}

TEST_CASE("fraction 1 keeps every unique unordered edge") {
    dac::rng::Engine eng(31);
    const Matrix x = random_rows(eng, 12, 4);
    const KnnGraph graph = dac::build_knn_graph(x, 3);
    std::set<std::pair<int, int>> unique;
    for (const dac::KnnEdge& e : graph.edges) {
        unique.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
    }
    const AnchorSet anchors = dac::extract_anchors(graph, 1.0);
    CHECK(anchors.pairs.size() == unique.size());
    for (const auto& p : anchors.pairs) {
        CHECK(unique.count(p) == 1);
        CHECK(p.first < p.second);
    }
    CHECK(std::is_sorted(anchors.pairs.begin(), anchors.pairs.end()));
}

TEST_CASE("a one-third fraction keeps only the most similar pair") {
    // Angles 0, 10, 18, 40 degrees give asymmetric neighbor relations
    // (0->1, 1->2, 2->1, 3->2), i.e. three unique edges whose similarities
    // are cos 10, cos 8, and cos 22 degrees.
    const auto point = [](double degrees) {
        const double radians = degrees * 3.14159265358979323846 / 180.0;
        return std::pair<double, double>{std::cos(radians),
                                         std::sin(radians)};
    };
    Matrix x(4, 2);
    int row = 0;
    for (const double degrees : {0.0, 10.0, 18.0, 40.0}) {
        const auto [cx, cy] = point(degrees);
        x(row, 0) = cx;
        x(row, 1) = cy;
        ++row;
    }
    const KnnGraph graph = dac::build_knn_graph(x, 1);
    std::set<std::pair<int, int>> unique;
    for (const dac::KnnEdge& e : graph.edges) {
        unique.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
    }
    REQUIRE(unique.size() == 3);
    const AnchorSet anchors = dac::extract_anchors(graph, 1.0 / 3.0);
    REQUIRE(anchors.pairs.size() == 1); // ceil(3/3) = 1
    CHECK(anchors.pairs[0] == std::pair<int, int>{1, 2}); // cos 8 degrees
}

TEST_CASE("anchor count is the ceiling of fraction times unique edges") {
    dac::rng::Engine eng(32);
    const Matrix x = random_rows(eng, 30, 5);
    const KnnGraph graph = dac::build_knn_graph(x, 4);
    std::set<std::pair<int, int>> unique;
    for (const dac::KnnEdge& e : graph.edges) {
        unique.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
    }
    const double total = static_cast<double>(unique.size());
    for (const double fraction : {0.02, 0.1, 0.37, 0.5, 0.99}) {
        const AnchorSet anchors = dac::extract_anchors(graph, fraction);
        const auto expected =
            static_cast<std::size_t>(std::ceil(fraction * total));
        CHECK(anchors.pairs.size() == expected);
    }
}

TEST_CASE("anchors are invariant under edge-order permutation") {
    dac::rng::Engine eng(33);
    const Matrix x = random_rows(eng, 20, 6);
    KnnGraph graph = dac::build_knn_graph(x, 3);
    const AnchorSet before = dac::extract_anchors(graph, 0.25);

    dac::rng::Engine shuffler(77);
    shuffler.shuffle(graph.edges);
    const AnchorSet after = dac::extract_anchors(graph, 0.25);
    CHECK(before.pairs == after.pairs);
}

TEST_CASE("extract_anchors rejects bad arguments") {
    const KnnGraph empty;
    CHECK_THROWS_AS(dac::extract_anchors(empty, 0.5), dac::ConfigError);
    dac::rng::Engine eng(34);
    const Matrix x = random_rows(eng, 6, 3);
    const KnnGraph graph = dac::build_knn_graph(x, 2);
    CHECK_THROWS_AS(dac::extract_anchors(graph, 0.0), dac::ConfigError);
    CHECK_THROWS_AS(dac::extract_anchors(graph, 1.5), dac::ConfigError);
}

TEST_CASE("graph ranking is independent of row order") {
    dac::rng::Engine eng(35);
    const int n = 24;
    const Matrix x = random_rows(eng, n, 5);
    const KnnGraph graph = dac::build_knn_graph(x, 3);

    // Reverse the rows and map the expected neighbor lists.
    Matrix reversed(n, x.cols());
    for (int i = 0; i < n; ++i) {
        reversed.row(i) = x.row(n - 1 - i);
    }
    const KnnGraph rgraph = dac::build_knn_graph(reversed, 3);
    int mismatches = 0;
    for (int i = 0; i < n; ++i) {
        std::vector<int> expected = neighbors_of(graph, n - 1 - i);
        for (int& v : expected) {
            v = n - 1 - v;
        }
        // Distinct random rows make ties measure-zero: sets must agree.
        std::vector<int> got = neighbors_of(rgraph, i);
        std::sort(expected.begin(), expected.end());
        std::sort(got.begin(), got.end());
        if (expected != got) {
            ++mismatches;
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("anchors from separated clusters stay within-cluster") {
    // Well-separated blobs with the stated margins: every anchor pair must
    // connect two points of the same generator label.
    for (const std::uint64_t seed : {101, 202, 303}) {
        dac::BlobSpec spec;
        spec.clusters = 4;
        spec.points_per_cluster = 50;
        spec.dim = 20;
        spec.separation = 8.0;
        spec.sigma = 1.0;
        spec.seed = seed;
        const dac::Dataset data = dac::make_blobs(spec);

        const KnnGraph graph = dac::build_knn_graph(data.features, 5);
        const AnchorSet anchors = dac::extract_anchors(graph, 0.05);
        REQUIRE(!anchors.pairs.empty());
        const std::vector<int>& labels = *data.labels;
        for (const auto& [i, j] : anchors.pairs) {
            CHECK(labels[i] == labels[j]);
        }
    }
}
