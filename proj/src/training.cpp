#include "dac/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dac/error.hpp"
#include "dac/evaluation.hpp"
#include "dac/knn.hpp"
#include "dac/rng.hpp"

namespace dac {

namespace {

// Distinct sub-streams of the run seed, one per consumer of randomness.
constexpr std::uint64_t kPretrainStream = 0x70;
constexpr std::uint64_t kStage1Stream = 0x71;
constexpr std::uint64_t kStage2Stream = 0x72;
constexpr std::uint64_t kCentroidStream = 0xC3;
constexpr std::uint64_t kAccuracyStream = 0xACC;

int min_batch_rows(const TrainConfig& config) {
    return std::max(2 * config.neighbors + 2, config.clusters + 1);
}

class StopWatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ =
        std::chrono::steady_clock::now();
};

} // namespace

std::vector<std::string> validate_config(const TrainConfig& c) {
    if (!(c.alpha > 0.0) || !(c.alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    if (!(c.lambda > 0.0) || c.lambda > 1.0) {
        throw ConfigError("lambda must lie in (0, 1]");
    }
    if (c.lambda_d < 0.0 || c.lambda_r < 0.0 || c.lambda_b < 0.0 ||
        c.lambda_w < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (c.neighbors < 1) {
        throw ConfigError("neighbor count must be >= 1");
    }
    if (!(c.anchor_fraction > 0.0) || c.anchor_fraction > 1.0) {
        throw ConfigError("anchor fraction must lie in (0, 1]");
    }
    if (c.clusters < 1) {
        throw ConfigError("cluster count must be >= 1");
    }
    if (c.batch_size <= c.clusters) {
        throw ConfigError("batch size must exceed the cluster count");
    }
    if (c.batch_size < c.neighbors + 1) {
        throw ConfigError("batch size must be at least k+1 for the k-NN graph");
    }
    if (c.max_iterations < 0 || c.epochs_per_block < 0) {
        throw ConfigError("iteration counts must be >= 0");
    }
    if (c.tolerance < 0.0) {
        throw ConfigError("tolerance must be >= 0");
    }
    if (!(c.learning_rate > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0) {
        throw ConfigError("optimizer betas must lie in [0, 1)");
    }

    std::vector<std::string> warnings;
    const double lambda_d_end =
        c.lambda_d_end < 0.0 ? c.lambda_d : c.lambda_d_end;
    if (c.lambda_d < 1.0 || c.lambda_d > 5.0 || lambda_d_end < 1.0 ||
        lambda_d_end > 5.0) {
        warnings.push_back(
            "discriminative weight outside the studied range [1, 5]");
    }
    if (c.neighbors > c.clusters) {
        warnings.push_back(
            "neighbor count k exceeds the cluster count K; the graph may "
            "bridge clusters");
    }
    return warnings;
}

double lambda_d_at(const TrainConfig& config, int block) {
    if (config.lambda_d_end < 0.0 || config.max_iterations <= 1) {
        return config.lambda_d;
    }
    const double t = static_cast<double>(std::clamp(block, 1,
                                                    config.max_iterations) -
                                         1) /
                     static_cast<double>(config.max_iterations - 1);
    return config.lambda_d + t * (config.lambda_d_end - config.lambda_d);
}

// --- optimizer ---------------------------------------------------------------

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2,
                             double epsilon)
    : learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
        throw ConfigError("optimizer rate and epsilon must be positive");
    }
}

void AdamOptimizer::set_state(AdamState state) {
    state_ = std::move(state);
    primed_ = true;
}

void AdamOptimizer::step(const std::vector<Matrix*>& params,
                         const std::vector<Matrix>& grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("parameter/gradient list sizes differ");
    }
    if (!primed_) {
        state_.step = 0;
        state_.m.clear();
        state_.v.clear();
        for (const Matrix* p : params) {
            state_.m.push_back(Matrix::Zero(p->rows(), p->cols()));
            state_.v.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
        primed_ = true;
    }
    if (state_.m.size() != params.size()) {
        throw DimensionError("optimizer state does not match parameter list");
    }

    ++state_.step;
    const double bias1 =
        1.0 - std::pow(beta1_, static_cast<double>(state_.step));
    const double bias2 =
        1.0 - std::pow(beta2_, static_cast<double>(state_.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = grads[i];
        require_same_shape(*params[i], g, "optimizer step");
        require_finite(g, "gradient");
        state_.m[i] = beta1_ * state_.m[i] + (1.0 - beta1_) * g;
        state_.v[i] =
            beta2_ * state_.v[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        params[i]->array() -=
            learning_rate_ * (state_.m[i].array() / bias1) /
            ((state_.v[i].array() / bias2).sqrt() + epsilon_);
    }
}

// --- metrics -----------------------------------------------------------------

std::string to_json_line(const MetricsRecord& record) {
    nlohmann::ordered_json line;
    line["epoch"] = record.epoch;
    line["phase"] = record.phase;
    auto put = [&line](const char* key, const std::optional<double>& value) {
        if (value.has_value()) line[key] = *value;
    };
    put("l_d", record.l_d);
    put("l_r", record.l_r);
    put("l_c", record.l_c);
    put("l_b", record.l_b);
    put("l_w", record.l_w);
    put("acc", record.acc);
    return line.dump();
}

MetricsSink::MetricsSink(const std::string& path, bool append,
                         std::ostream* console)
    : console_(console) {
    auto* file = new std::ofstream(
        path, append ? std::ios::app : std::ios::trunc);
    if (!*file) {
        delete file;
        throw DataError(DataErrorCode::Io,
                        "cannot open metrics file for writing: " + path);
    }
    file_ = file;
}

MetricsSink::~MetricsSink() {
    delete static_cast<std::ofstream*>(file_);
}

void MetricsSink::write(const MetricsRecord& record) {
    records_.push_back(record);
    if (file_ != nullptr) {
        auto& out = *static_cast<std::ofstream*>(file_);
        out << to_json_line(record) << '\n';
        out.flush();
        if (!out) {
            throw DataError(DataErrorCode::Io, "failed writing metrics file");
        }
    }
    if (console_ != nullptr) {
        std::ostringstream line;
        line << record.phase << " " << record.epoch;
        auto put = [&line](const char* key,
                           const std::optional<double>& value) {
            if (value.has_value()) line << "  " << key << "=" << *value;
        };
        put("l_d", record.l_d);
        put("l_r", record.l_r);
        put("l_c", record.l_c);
        put("l_b", record.l_b);
        put("l_w", record.l_w);
        put("acc", record.acc);
        line << "  (" << record.wall_seconds << "s)";
        *console_ << line.str() << std::endl;
    }
}

void MetricsSink::warn(const std::string& message) {
    if (console_ != nullptr) {
        *console_ << "warning: " << message << std::endl;
    } else {
        std::cerr << "warning: " << message << std::endl;
    }
}

// --- spherical k-means -------------------------------------------------------

std::vector<int> update_assignments(const Matrix& embedding,
                                    const Matrix& centroids) {
    if (embedding.cols() != centroids.cols()) {
        throw DimensionError("embedding/centroid dimensions differ");
    }
    const Matrix scores = embedding * centroids.transpose();
    std::vector<int> assignments(embedding.rows());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        int best = 0;
        for (Eigen::Index k = 1; k < scores.cols(); ++k) {
            if (scores(i, k) > scores(i, best)) {
                best = static_cast<int>(k);
            }
        }
        assignments[static_cast<std::size_t>(i)] = best;
    }
    return assignments;
}

Matrix update_centroids(const Matrix& embedding,
                        const std::vector<int>& assignments, int clusters) {
    if (static_cast<Eigen::Index>(assignments.size()) != embedding.rows()) {
        throw DimensionError("assignment count does not match embedding");
    }
    if (clusters < 1) {
        throw ConfigError("cluster count must be >= 1");
    }

    Matrix sums = Matrix::Zero(clusters, embedding.cols());
    std::vector<std::int64_t> sizes(clusters, 0);
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
        const int k = assignments[static_cast<std::size_t>(i)];
        if (k < 0 || k >= clusters) {
            throw ConfigError("assignment id out of range");
        }
        sums.row(k) += embedding.row(i);
        ++sizes[k];
    }

    Matrix centroids = Matrix::Zero(clusters, embedding.cols());
    std::vector<int> degenerate;
    std::vector<int> healthy;
    for (int k = 0; k < clusters; ++k) {
        const double norm = sums.row(k).norm();
        // A fully cancelling member set is as uninformative as an empty one.
        if (sizes[k] == 0 || norm < kDegenerateRowNorm) {
            degenerate.push_back(k);
        } else {
            centroids.row(k) = sums.row(k) / norm;
            healthy.push_back(k);
        }
    }
    if (healthy.empty()) {
        throw NumericError("every cluster is empty or degenerate");
    }

    // Reseed each degenerate cluster to the point least aligned with the
    // centroids placed so far (smallest maximum cosine; ties to the lowest
    // row index), then treat it as placed.
    for (int k : degenerate) {
        Eigen::Index farthest = 0;
        double farthest_score = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
            double score = -std::numeric_limits<double>::infinity();
            for (int h : healthy) {
                score = std::max(score, embedding.row(i).dot(centroids.row(h)));
            }
            if (score < farthest_score) {
                farthest_score = score;
                farthest = i;
            }
        }
        centroids.row(k) = embedding.row(farthest);
        healthy.push_back(k);
    }
    return centroids;
}

double clustering_value(const Matrix& embedding, const ClusterState& state) {
    if (static_cast<Eigen::Index>(state.assignments.size()) !=
        embedding.rows()) {
        throw DimensionError("assignment count does not match embedding");
    }
    double value = 0.0;
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
        value += embedding.row(i).dot(
            state.centroids.row(state.assignments[static_cast<std::size_t>(i)]));
    }
    return value;
}

namespace {

/// Cosine k-means++ seeding: the first centroid is a uniform row draw, each
/// further one is drawn with probability proportional to 1 − best alignment.
Matrix seed_centroids(const Matrix& embedding, int clusters,
                      rng::Engine& engine) {
    const Eigen::Index n = embedding.rows();
    Matrix centroids(clusters, embedding.cols());
    centroids.row(0) =
        embedding.row(static_cast<Eigen::Index>(engine.below(
            static_cast<std::uint64_t>(n))));
    std::vector<double> best(n, -1.0);
    for (int k = 1; k < clusters; ++k) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            best[i] = std::max(best[i],
                               embedding.row(i).dot(centroids.row(k - 1)));
            total += std::max(0.0, 1.0 - best[i]);
        }
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            const double u = engine.uniform(0.0, total);
            double cumulative = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                cumulative += std::max(0.0, 1.0 - best[i]);
                if (cumulative > u) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(
                engine.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(k) = embedding.row(pick);
    }
    return centroids;
}

} // namespace

ClusterState init_centroids(const Matrix& embedding, int clusters,
                            std::uint64_t seed) {
    if (clusters < 1) {
        throw ConfigError("cluster count must be >= 1");
    }
    if (embedding.rows() < clusters) {
        throw ConfigError("cluster count exceeds dataset size");
    }

    constexpr int kRestarts = 4;
    constexpr int kMaxRounds = 200;
    ClusterState best_state;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < kRestarts; ++restart) {
        rng::Engine engine(rng::mix(seed, static_cast<std::uint64_t>(restart)));
        ClusterState state;
        state.centroids = seed_centroids(embedding, clusters, engine);
        state.assignments = update_assignments(embedding, state.centroids);
        for (int round = 0; round < kMaxRounds; ++round) {
            state.centroids =
                update_centroids(embedding, state.assignments, clusters);
            std::vector<int> next =
                update_assignments(embedding, state.centroids);
            const bool stable = (next == state.assignments);
            state.assignments = std::move(next);
            if (stable) break;
        }
        const double value = clustering_value(embedding, state);
        if (value > best_value) {
            best_value = value;
            best_state = std::move(state);
        }
    }
    return best_state;
}

// --- training loops ----------------------------------------------------------

namespace {

std::vector<Matrix> collect_gradients(const ad::Tape& tape,
                                      const std::vector<ad::NodeId>& nodes,
                                      double sign) {
    std::vector<Matrix> grads;
    grads.reserve(nodes.size());
    for (ad::NodeId node : nodes) {
        grads.push_back(sign * tape.grad(node));
    }
    return grads;
}

Matrix normalized_embedding(const AutoencoderModel& model, const Matrix& x) {
    return row_normalized(model.encode_values(x));
}

std::optional<double> assignment_accuracy(const Dataset& data,
                                          const std::vector<int>& assignments,
                                          int clusters) {
    if (!data.labels.has_value()) {
        return std::nullopt;
    }
    const int label_space = std::max(clusters, data.k_hint);
    return accuracy(*data.labels, assignments, label_space);
}

} // namespace

std::optional<double> embedding_accuracy(const Dataset& data,
                                         const AutoencoderModel& model,
                                         const TrainConfig& config) {
    if (!data.labels.has_value()) {
        return std::nullopt;
    }
    const Matrix embedding = normalized_embedding(model, data.features);
    const ClusterState state = init_centroids(
        embedding, config.clusters, rng::mix(config.seed, kAccuracyStream));
    return assignment_accuracy(data, state.assignments, config.clusters);
}

PhaseResult pretrain(const Dataset& data, AutoencoderModel& model,
                     AdamOptimizer& optimizer, const TrainConfig& config,
                     MetricsSink& sink, int start_epoch) {
    validate_config(config);
    if (data.size() < config.batch_size) {
        throw ConfigError("dataset smaller than one batch");
    }

    PhaseResult result;
    double previous = std::numeric_limits<double>::quiet_NaN();
    for (int step = 1; step <= config.max_iterations; ++step) {
        const int epoch = start_epoch + step;
        StopWatch watch;
        const auto batches =
            batch_indices(data.size(), config.batch_size,
                          min_batch_rows(config),
                          rng::mix(config.seed, kPretrainStream), epoch);
        double sum_d = 0.0;
        double sum_r = 0.0;
        for (const auto& rows : batches) {
            const Matrix x = gather_rows(data.features, rows);
            const AnchorSet anchors = extract_anchors(
                build_knn_graph(x, config.neighbors), config.anchor_fraction);
            ad::Tape tape;
            const PretrainObjective objective = pretrain_objective(
                tape, model, x, anchors, config.alpha, config.lambda);
            tape.backward(objective.total);
            optimizer.step(model.parameters(),
                           collect_gradients(tape, objective.param_nodes, 1.0));
            sum_d += tape.scalar_value(objective.discriminative);
            sum_r += tape.scalar_value(objective.reconstruction);
        }
        const double count = static_cast<double>(batches.size());
        const double mean_d = sum_d / count;

        MetricsRecord record;
        record.epoch = epoch;
        record.phase = "pretrain";
        record.l_d = mean_d;
        record.l_r = sum_r / count;
        record.acc = embedding_accuracy(data, model, config);
        record.wall_seconds = watch.seconds();
        sink.write(record);

        ++result.epochs_completed;
        if (!std::isnan(previous) &&
            std::abs(mean_d - previous) <= config.tolerance) {
            result.converged = true;
            break;
        }
        previous = mean_d;
    }
    return result;
}

namespace {

/// Shared alternation scheme of the two clustering stages: per block, run
/// epochs-per-block optimizer epochs of the stage objective, refresh the
/// assignments and centroids on the full embedding, and stop when the
/// dataset-level alignment value settles. flush(record) runs after the
/// block's training so the stage can fill its per-batch mean terms.
template <typename StepFn, typename FlushFn>
StageResult run_stage(const Dataset& data, AutoencoderModel& model,
                      const TrainConfig& config, MetricsSink& sink,
                      ClusterState state, const char* phase,
                      std::uint64_t stream, StepFn&& epoch_step,
                      FlushFn&& flush) {
    StageResult result;
    double previous = std::numeric_limits<double>::quiet_NaN();
    int epoch_counter = 0;
    for (int block = 1; block <= config.max_iterations; ++block) {
        StopWatch watch;
        MetricsRecord record;
        record.epoch = block;
        record.phase = phase;
        for (int e = 0; e < config.epochs_per_block; ++e) {
            ++epoch_counter;
            const auto batches =
                batch_indices(data.size(), config.batch_size,
                              min_batch_rows(config),
                              rng::mix(config.seed, stream), epoch_counter);
            for (const auto& rows : batches) {
                epoch_step(block, rows, state);
            }
        }
        flush(record);

        const Matrix embedding = normalized_embedding(model, data.features);
        state.assignments = update_assignments(embedding, state.centroids);
        state.centroids =
            update_centroids(embedding, state.assignments, config.clusters);
        const double value = clustering_value(embedding, state);

        record.l_c = value;
        record.acc = assignment_accuracy(data, state.assignments,
                                         config.clusters);
        record.wall_seconds = watch.seconds();
        sink.write(record);

        ++result.phase.epochs_completed;
        if (!std::isnan(previous) &&
            std::abs(value - previous) < config.tolerance) {
            result.phase.converged = true;
            break;
        }
        previous = value;
    }
    result.state = std::move(state);
    return result;
}

/// Per-block running sums for batch-level loss terms.
struct TermSums {
    double d = 0.0;
    double r = 0.0;
    double w = 0.0;
    double b = 0.0;
    int steps = 0;
    int between_steps = 0;

    void reset() { *this = TermSums{}; }
};

} // namespace

StageResult cluster_stage1(const Dataset& data, AutoencoderModel& model,
                           AdamOptimizer& optimizer,
                           const TrainConfig& config, MetricsSink& sink) {
    validate_config(config);
    if (data.size() < config.batch_size) {
        throw ConfigError("dataset smaller than one batch");
    }

    ClusterState state = init_centroids(
        normalized_embedding(model, data.features), config.clusters,
        rng::mix(config.seed, kCentroidStream));

    TermSums sums;
    auto step = [&](int block, const std::vector<int>& rows,
                    ClusterState& current) {
        const Matrix x = gather_rows(data.features, rows);
        const AnchorSet anchors = extract_anchors(
            build_knn_graph(x, config.neighbors), config.anchor_fraction);
        ClusterState batch_state;
        batch_state.centroids = current.centroids;
        for (int row : rows) {
            batch_state.assignments.push_back(
                current.assignments[static_cast<std::size_t>(row)]);
        }
        ad::Tape tape;
        const Stage1Objective objective = stage1_objective(
            tape, model, x, anchors, batch_state, config.alpha,
            lambda_d_at(config, block), config.lambda_r);
        tape.backward(objective.total);
        // Maximization objective: descend on its negation.
        optimizer.step(model.parameters(),
                       collect_gradients(tape, objective.param_nodes, -1.0));
        sums.d += tape.scalar_value(objective.discriminative);
        sums.r += tape.scalar_value(objective.reconstruction);
        ++sums.steps;
    };
    auto flush = [&sums](MetricsRecord& record) {
        if (sums.steps > 0) {
            record.l_d = sums.d / sums.steps;
            record.l_r = sums.r / sums.steps;
        }
        sums.reset();
    };
    return run_stage(data, model, config, sink, std::move(state), "stage1",
                     kStage1Stream, step, flush);
}

StageResult cluster_stage2(const Dataset& data, AutoencoderModel& model,
                           AdamOptimizer& optimizer,
                           const TrainConfig& config, ClusterState state,
                           MetricsSink& sink) {
    validate_config(config);
    if (data.size() < config.batch_size) {
        throw ConfigError("dataset smaller than one batch");
    }
    if (state.cluster_count() != config.clusters ||
        static_cast<Eigen::Index>(state.assignments.size()) != data.size()) {
        throw DimensionError("cluster state does not match dataset/config");
    }

    TermSums sums;
    auto step = [&](int block, const std::vector<int>& rows,
                    ClusterState& current) {
        (void)block;
        const Matrix x = gather_rows(data.features, rows);
        ClusterState batch_state;
        batch_state.centroids = current.centroids;
        std::set<int> distinct;
        for (int row : rows) {
            const int a = current.assignments[static_cast<std::size_t>(row)];
            batch_state.assignments.push_back(a);
            distinct.insert(a);
        }
        const bool include_between = distinct.size() >= 2;
        if (!include_between) {
            sink.warn("batch holds a single cluster; skipping its "
                      "between-cluster term");
        }
        ad::Tape tape;
        const Stage2Objective objective = stage2_objective(
            tape, model, x, batch_state, config.lambda_w, config.lambda_b,
            config.lambda_r, include_between);
        tape.backward(objective.total);
        optimizer.step(model.parameters(),
                       collect_gradients(tape, objective.param_nodes, -1.0));
        sums.w += tape.scalar_value(objective.within);
        sums.r += tape.scalar_value(objective.reconstruction);
        ++sums.steps;
        if (objective.has_between) {
            sums.b += tape.scalar_value(objective.between);
            ++sums.between_steps;
        }
    };
    auto flush = [&sums](MetricsRecord& record) {
        if (sums.steps > 0) {
            record.l_w = sums.w / sums.steps;
            record.l_r = sums.r / sums.steps;
        }
        if (sums.between_steps > 0) {
            record.l_b = sums.b / sums.between_steps;
        }
        sums.reset();
    };
    return run_stage(data, model, config, sink, std::move(state), "stage2",
                     kStage2Stream, step, flush);
}

} // namespace dac
