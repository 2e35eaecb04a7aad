#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "dac/data.hpp"
#include "dac/losses.hpp"
#include "dac/matrix.hpp"
#include "dac/model.hpp"
#include "dac/rng.hpp"
#include "dac/training.hpp"
#include "test_helpers.hpp"

using dac::ClusterState;
using dac::Matrix;
using dac::TrainConfig;
using dac::test::bitwise_equal;
using dac::test::mat;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("dac-training-test-" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

Matrix random_unit_rows(std::uint64_t seed, int rows, int cols) {
    dac::rng::Engine eng(seed);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = eng.gaussian();
        }
    }
    return dac::row_normalized(m);
}

dac::AutoencoderModel small_model(const std::vector<int>& dims,
                                  std::uint64_t seed) {
    std::vector<dac::LayerSpec> encoder;
    std::vector<dac::LayerSpec> decoder;
    dac::symmetric_autoencoder_specs(dims, encoder, decoder);
    return dac::AutoencoderModel::init(encoder, decoder, seed);
}

TrainConfig tiny_config() {
    TrainConfig config;
    config.clusters = 3;
    config.batch_size = 60;
    config.neighbors = 4;
    config.max_iterations = 4;
    config.epochs_per_block = 1;
    config.tolerance = 0.0;
    config.seed = 11;
    return config;
}

dac::Dataset tiny_blobs(std::uint64_t seed) {
    dac::BlobSpec spec;
    spec.clusters = 3;
    spec.points_per_cluster = 20;
    spec.dim = 8;
    spec.separation = 8.0;
    spec.seed = seed;
    return dac::make_blobs(spec);
}

} // namespace

TEST_CASE("config validation: hard errors throw, soft issues warn") {
    CHECK(dac::validate_config(TrainConfig{}).empty());

    const auto throws_with = [](auto mutate) {
        TrainConfig config = tiny_config();
        mutate(config);
        CHECK_THROWS_AS(dac::validate_config(config), dac::ConfigError);
    };
    throws_with([](TrainConfig& c) { c.alpha = 0.0; });
    throws_with([](TrainConfig& c) { c.alpha = 1.0; });
    throws_with([](TrainConfig& c) { c.lambda = 0.0; });
    throws_with([](TrainConfig& c) { c.lambda = 1.5; });
    throws_with([](TrainConfig& c) { c.lambda_r = -0.1; });
    throws_with([](TrainConfig& c) { c.neighbors = 0; });
    throws_with([](TrainConfig& c) { c.anchor_fraction = 0.0; });
    throws_with([](TrainConfig& c) { c.anchor_fraction = 1.2; });
    throws_with([](TrainConfig& c) { c.clusters = 0; });
    throws_with([](TrainConfig& c) { c.batch_size = c.clusters; });
    throws_with([](TrainConfig& c) { c.batch_size = c.neighbors; });
    throws_with([](TrainConfig& c) { c.max_iterations = -1; });
    throws_with([](TrainConfig& c) { c.tolerance = -1e-9; });
    throws_with([](TrainConfig& c) { c.learning_rate = 0.0; });
    throws_with([](TrainConfig& c) { c.beta1 = 1.0; });
    throws_with([](TrainConfig& c) { c.beta2 = -0.1; });

    TrainConfig low = tiny_config();
    low.lambda_d = 0.5; // outside the recommended [1,5]
    CHECK(!dac::validate_config(low).empty());

    TrainConfig high = tiny_config();
    high.lambda_d_end = 7.0;
    CHECK(!dac::validate_config(high).empty());

    TrainConfig bridging = tiny_config();
    bridging.neighbors = bridging.clusters + 1;
    bridging.batch_size = 60;
    CHECK(!dac::validate_config(bridging).empty());
}

TEST_CASE("the discriminative weight decays linearly across blocks") {
    TrainConfig config;
    config.lambda_d = 5.0;
    config.max_iterations = 5;

    SUBCASE("constant when no end value is set") {
        config.lambda_d_end = -1.0;
        for (int block = 1; block <= 5; ++block) {
            CHECK(dac::lambda_d_at(config, block) == 5.0);
        }
    }
    SUBCASE("linear interpolation from start to end") {
        config.lambda_d_end = 1.0;
        CHECK(dac::lambda_d_at(config, 1) == doctest::Approx(5.0));
        CHECK(dac::lambda_d_at(config, 3) == doctest::Approx(3.0));
        CHECK(dac::lambda_d_at(config, 5) == doctest::Approx(1.0));
        // Out-of-range blocks clamp to the schedule.
        CHECK(dac::lambda_d_at(config, 9) == doctest::Approx(1.0));
    }
}

TEST_CASE("Adam matches an independent reference implementation") {
    const double lr = 0.05;
    const double beta1 = 0.9;
    const double beta2 = 0.999;
    const double eps = 1e-8;
    dac::AdamOptimizer optimizer(lr, beta1, beta2, eps);

    Matrix param = mat({{1.0, -2.0}, {0.5, 3.0}});
    Matrix reference = param;
    Matrix m = Matrix::Zero(2, 2);
    Matrix v = Matrix::Zero(2, 2);

    dac::rng::Engine eng(70);
    for (int step = 1; step <= 5; ++step) {
        Matrix g(2, 2);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                g(i, j) = eng.gaussian();
            }
        }
        optimizer.step({&param}, {g});

        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v.array().matrix() +
            (1.0 - beta2) * g.cwiseProduct(g);
        const double bias1 = 1.0 - std::pow(beta1, step);
        const double bias2 = 1.0 - std::pow(beta2, step);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                reference(i, j) -= lr * (m(i, j) / bias1) /
                                   (std::sqrt(v(i, j) / bias2) + eps);
            }
        }
        CHECK(dac::test::max_abs_diff(param, reference) < 1e-14);
    }
    CHECK(optimizer.state().step == 5);
}

TEST_CASE("Adam state survives a set_state round trip") {
    dac::AdamOptimizer a(0.01, 0.9, 0.999);
    Matrix pa = mat({{1.0}});
    const Matrix g = mat({{0.3}});
    a.step({&pa}, {g});
    a.step({&pa}, {g});

    dac::AdamOptimizer b(0.01, 0.9, 0.999);
    Matrix pb = pa;
    b.set_state(a.state());
    CHECK(b.primed());

    a.step({&pa}, {g});
    b.step({&pb}, {g});
    CHECK(pa(0, 0) == pb(0, 0));
    CHECK(a.state().step == b.state().step);
}

TEST_CASE("Adam rejects non-finite gradients and shape mismatches") {
    dac::AdamOptimizer optimizer(0.01, 0.9, 0.999);
    Matrix param = mat({{1.0}});
    Matrix bad = mat({{1.0}});
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(optimizer.step({&param}, {bad}), dac::NumericError);
    CHECK_THROWS_AS(optimizer.step({&param}, {mat({{1.0, 2.0}})}),
                    dac::ConfigError);
}

TEST_CASE("metrics lines serialize set fields only, never wall time") {
    dac::MetricsRecord record;
    record.epoch = 3;
    record.phase = "pretrain";
    record.l_d = 0.5;
    record.acc = 0.25;
    record.wall_seconds = 123.0; // console-only
    CHECK(dac::to_json_line(record) ==
          R"({"epoch":3,"phase":"pretrain","l_d":0.5,"acc":0.25})");

    dac::MetricsRecord full;
    full.epoch = 1;
    full.phase = "stage2";
    full.l_r = 1.0;
    full.l_c = 2.0;
    full.l_b = 3.0;
    full.l_w = 4.0;
    CHECK(dac::to_json_line(full) ==
          R"({"epoch":1,"phase":"stage2","l_r":1.0,"l_c":2.0,"l_b":3.0,"l_w":4.0})");
}

TEST_CASE("the metrics sink writes JSON lines and appends on request") {
    TempDir dir;
    const std::string path = dir.file("metrics.jsonl");
    {
        dac::MetricsSink sink(path, false, nullptr);
        dac::MetricsRecord record;
        record.epoch = 1;
        record.phase = "pretrain";
        record.l_d = 0.75;
        sink.write(record);
        CHECK(sink.records().size() == 1);
    }
    {
        dac::MetricsSink sink(path, true, nullptr);
        dac::MetricsRecord record;
        record.epoch = 2;
        record.phase = "pretrain";
        record.l_d = 0.5;
        sink.write(record);
    }
    std::ifstream in(path);
    std::string line1, line2, extra;
    REQUIRE(std::getline(in, line1));
    REQUIRE(std::getline(in, line2));
    CHECK(!std::getline(in, extra));
    CHECK(line1 == R"({"epoch":1,"phase":"pretrain","l_d":0.75})");
    CHECK(line2 == R"({"epoch":2,"phase":"pretrain","l_d":0.5})");
}

TEST_CASE("assignments pick the most aligned centroid, ties to smaller id") {
    const Matrix centroids = mat({{1.0, 0.0}, {0.0, 1.0}});
    const double r = std::sqrt(2.0) / 2.0;
    const Matrix embedding = mat({{0.6, 0.8}, {0.8, 0.6}, {r, r}});
    const std::vector<int> assignments =
        dac::update_assignments(embedding, centroids);
    CHECK(assignments == std::vector<int>{1, 0, 0}); // tie -> cluster 0
}

TEST_CASE("centroid update is the normalized assigned-row sum") {
    const Matrix embedding =
        mat({{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}});
    const std::vector<int> assignments = {0, 0, 1, 1};
    const Matrix centroids =
        dac::update_centroids(embedding, assignments, 2);
    const double r = std::sqrt(2.0) / 2.0;
    CHECK(centroids(0, 0) == doctest::Approx(r));
    CHECK(centroids(0, 1) == doctest::Approx(r));
    CHECK(centroids(1, 0) == doctest::Approx(-r));
    CHECK(centroids(1, 1) == doctest::Approx(-r));
}

TEST_CASE("empty and cancelled clusters are reseeded to a far point") {
    SUBCASE("empty cluster") {
        const Matrix embedding = mat({{1.0, 0.0}, {0.8, 0.6}, {0.0, 1.0}});
        const std::vector<int> assignments = {0, 0, 0};
        const Matrix centroids =
            dac::update_centroids(embedding, assignments, 2);
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(centroids.row(k).norm() ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
        // The reseeded centroid is the point least aligned with cluster 0's
        // centroid — here the orthogonal (0,1).
        CHECK(centroids(1, 0) == doctest::Approx(0.0));
        CHECK(centroids(1, 1) == doctest::Approx(1.0));
    }
    SUBCASE("antipodal cancellation") {
        const Matrix embedding =
            mat({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}});
        const std::vector<int> assignments = {0, 0, 1};
        const Matrix centroids =
            dac::update_centroids(embedding, assignments, 2);
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(centroids.row(k).norm() ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("a single cluster reduces to the normalized mean direction") {
    const Matrix embedding = random_unit_rows(71, 12, 5);
    const std::vector<int> assignments(12, 0);
    const Matrix centroid = dac::update_centroids(embedding, assignments, 1);
    Matrix s = embedding.colwise().sum();
    s /= s.norm();
    CHECK(dac::test::max_abs_diff(centroid, s) < 1e-14);

    ClusterState state{centroid, assignments};
    const double value = dac::clustering_value(embedding, state);
    double expected = 0.0;
    for (int i = 0; i < 12; ++i) {
        expected += embedding.row(i).dot(centroid.row(0));
    }
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("alternating assignment/centroid updates never decrease the "
          "objective and reach a fixed point") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const int n = 30;
        const int clusters = 4;
        const Matrix embedding = random_unit_rows(100 + seed, n, 6);
        Matrix centroids = random_unit_rows(200 + seed, clusters, 6);
        std::vector<int> assignments =
            dac::update_assignments(embedding, centroids);
        double previous = dac::clustering_value(
            embedding, ClusterState{centroids, assignments});

        for (int round = 0; round < 50; ++round) {
            centroids =
                dac::update_centroids(embedding, assignments, clusters);
            assignments = dac::update_assignments(embedding, centroids);
            const double value = dac::clustering_value(
                embedding, ClusterState{centroids, assignments});
            CHECK(value >= previous - 1e-12);
            previous = value;
        }

        // Fixed point: one more full alternation moves the value by < 1e-9.
        const Matrix c2 =
            dac::update_centroids(embedding, assignments, clusters);
        const std::vector<int> a2 = dac::update_assignments(embedding, c2);
        const double settled =
            dac::clustering_value(embedding, ClusterState{c2, a2});
        CHECK(std::abs(settled - previous) < 1e-9);
    }
}

TEST_CASE("closed-form centroids beat random unit vectors") {
    dac::rng::Engine eng(72);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 24;
        const int clusters = 3;
        const Matrix embedding =
            random_unit_rows(300 + trial, n, 5);
        std::vector<int> assignments(n);
        for (int i = 0; i < n; ++i) {
            assignments[i] = static_cast<int>(eng.below(clusters));
        }
        const Matrix centroids =
            dac::update_centroids(embedding, assignments, clusters);

        for (int k = 0; k < clusters; ++k) {
            double optimal = 0.0;
            for (int i = 0; i < n; ++i) {
                if (assignments[i] == k) {
                    optimal += embedding.row(i).dot(centroids.row(k));
                }
            }
            for (int draw = 0; draw < 200; ++draw) {
                Matrix candidate(1, 5);
                for (int j = 0; j < 5; ++j) {
                    candidate(0, j) = eng.gaussian();
                }
                candidate /= candidate.norm();
                double value = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (assignments[i] == k) {
                        value += embedding.row(i).dot(candidate.row(0));
                    }
                }
                CHECK(value <= optimal + 1e-12);
            }
        }
    }
}

TEST_CASE("centroid initialization is deterministic and internally synced") {
    const Matrix embedding = random_unit_rows(73, 40, 6);
    const ClusterState a = dac::init_centroids(embedding, 4, 9);
    const ClusterState b = dac::init_centroids(embedding, 4, 9);
    CHECK(bitwise_equal(a.centroids, b.centroids));
    CHECK(a.assignments == b.assignments);

    for (Eigen::Index k = 0; k < a.centroids.rows(); ++k) {
        CHECK(a.centroids.row(k).norm() ==
              doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(a.assignments == dac::update_assignments(embedding, a.centroids));

    const ClusterState c = dac::init_centroids(embedding, 4, 10);
    CHECK((!bitwise_equal(a.centroids, c.centroids) ||
           a.assignments == c.assignments));
}

TEST_CASE("pre-training reduces the discriminative loss on easy blobs") {
    const dac::Dataset data = tiny_blobs(31);
    dac::AutoencoderModel model = small_model({8, 8, 4}, 31);
    TrainConfig config = tiny_config();
    config.max_iterations = 6;
    dac::AdamOptimizer optimizer(config);
    dac::MetricsSink sink;

    const dac::PhaseResult result =
        dac::pretrain(data, model, optimizer, config, sink);
    CHECK(result.epochs_completed == 6);
    CHECK(!result.converged); // tolerance 0 never triggers here

    const auto& records = sink.records();
    REQUIRE(records.size() == 6);
    REQUIRE(records.front().l_d.has_value());
    REQUIRE(records.back().l_d.has_value());
    CHECK(*records.back().l_d < *records.front().l_d);
    for (const auto& record : records) {
        CHECK(record.phase == "pretrain");
        REQUIRE(record.acc.has_value()); // labeled dataset
        CHECK(*record.acc >= 1.0 / 3.0 - 1e-12);
    }
    // Epoch numbering is 1-based and consecutive.
    CHECK(records.front().epoch == 1);
    CHECK(records.back().epoch == 6);
}

TEST_CASE("pre-training stops once the loss delta is within tolerance") {
    const dac::Dataset data = tiny_blobs(32);
    dac::AutoencoderModel model = small_model({8, 8, 4}, 32);
    TrainConfig config = tiny_config();
    config.max_iterations = 30;
    config.tolerance = 1e9; // any delta counts as converged
    dac::AdamOptimizer optimizer(config);
    dac::MetricsSink sink;

    const dac::PhaseResult result =
        dac::pretrain(data, model, optimizer, config, sink);
    CHECK(result.converged);
    CHECK(result.epochs_completed == 2); // needs two epochs for a delta
}

TEST_CASE("a zero-block budget returns the k-means++ state untouched") {
    const dac::Dataset data = tiny_blobs(33);
    dac::AutoencoderModel model = small_model({8, 8, 4}, 33);
    const Matrix before = *std::as_const(model).parameters()[0];

    TrainConfig config = tiny_config();
    config.max_iterations = 0;
    dac::AdamOptimizer optimizer(config);
    dac::MetricsSink sink;

    const dac::StageResult result =
        dac::cluster_stage1(data, model, optimizer, config, sink);
    CHECK(result.phase.epochs_completed == 0);
    CHECK(!result.phase.converged);
    CHECK(sink.records().empty());
    CHECK(bitwise_equal(before, *std::as_const(model).parameters()[0]));

    // The returned state equals a fresh initialization on the same
    // embedding with the centroid stream seed.
    const Matrix latent = model.encode_values(data.features);
    const Matrix embedding = dac::row_normalized(latent);
    const ClusterState expected = dac::init_centroids(
        embedding, config.clusters, dac::rng::mix(config.seed, 0xC3));
    CHECK(bitwise_equal(result.state.centroids, expected.centroids));
    CHECK(result.state.assignments == expected.assignments);
}

TEST_CASE("both clustering stages run end to end and stay well-formed") {
    const dac::Dataset data = tiny_blobs(34);
    dac::AutoencoderModel model = small_model({8, 8, 4}, 34);
    TrainConfig config = tiny_config();
    config.max_iterations = 3;
    config.epochs_per_block = 2;

    dac::MetricsSink sink;
    dac::AdamOptimizer opt1(config);
    const dac::StageResult stage1 =
        dac::cluster_stage1(data, model, opt1, config, sink);
    CHECK(stage1.phase.epochs_completed == 3);
    REQUIRE(static_cast<Eigen::Index>(stage1.state.assignments.size()) ==
            data.size());

    dac::AdamOptimizer opt2(config);
    const dac::StageResult stage2 = dac::cluster_stage2(
        data, model, opt2, config, stage1.state, sink);
    CHECK(stage2.phase.epochs_completed == 3);

    for (Eigen::Index k = 0; k < stage2.state.centroids.rows(); ++k) {
        CHECK(stage2.state.centroids.row(k).norm() ==
              doctest::Approx(1.0).epsilon(1e-10));
    }
    for (const int a : stage2.state.assignments) {
        CHECK(a >= 0);
        CHECK(a < config.clusters);
    }

    // Metrics: stage-1 blocks carry l_d, stage-2 blocks l_b/l_w instead.
    const auto& records = sink.records();
    REQUIRE(records.size() == 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(records[i].phase == "stage1");
        CHECK(records[i].l_d.has_value());
        CHECK(records[i].l_c.has_value());
        CHECK(!records[i].l_b.has_value());
    }
    for (int i = 3; i < 6; ++i) {
        CHECK(records[i].phase == "stage2");
        CHECK(records[i].l_b.has_value());
        CHECK(records[i].l_w.has_value());
        CHECK(records[i].l_c.has_value());
        CHECK(!records[i].l_d.has_value());
    }
    // The returned centroids are the closed-form update of the returned
    // assignments on the final embedding (state and weights are in sync).
    const Matrix embedding =
        dac::row_normalized(model.encode_values(data.features));
    CHECK(bitwise_equal(stage2.state.centroids,
                        dac::update_centroids(embedding,
                                              stage2.state.assignments,
                                              config.clusters)));
}

TEST_CASE("embedding accuracy is defined only for labeled data") {
    dac::Dataset data = tiny_blobs(35);
    // Linear bottleneck: an untrained ReLU stack can zero out a latent row,
    // which the embedding path rejects as degenerate.
    const dac::AutoencoderModel model = small_model({8, 4}, 35);
    const TrainConfig config = tiny_config();
    const auto labeled = dac::embedding_accuracy(data, model, config);
    REQUIRE(labeled.has_value());
    CHECK(*labeled >= 1.0 / 3.0 - 1e-12);
    CHECK(*labeled <= 1.0);

    data.labels.reset();
    CHECK(!dac::embedding_accuracy(data, model, config).has_value());
}
