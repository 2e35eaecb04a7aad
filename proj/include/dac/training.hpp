#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dac/data.hpp"
#include "dac/losses.hpp"
#include "dac/matrix.hpp"
#include "dac/model.hpp"

namespace dac {

/// Every knob of the pipeline. Defaults follow the reference recipe:
/// reconstruction weight 1e-3, discriminative weight 1, between/within
/// weights 1 and 0.3, k=5 neighbors, 2% anchors, batches of 1000.
struct TrainConfig {
    double alpha = 0.9;          // anchor confidence, in (0,1)
    double lambda = 0.001;       // pre-training reconstruction weight, (0,1]
    double lambda_d = 1.0;       // stage-1 discriminative weight
    double lambda_d_end = -1.0;  // ≥0 enables linear decay to this value
    double lambda_r = 0.001;     // stage-1/2 reconstruction weight
    double lambda_b = 1.0;       // stage-2 between-cluster weight
    double lambda_w = 0.3;       // stage-2 within-cluster weight
    int neighbors = 5;           // k of the raw-space k-NN graph
    double anchor_fraction = 0.02;
    int batch_size = 1000;
    int clusters = 10;           // K
    int max_iterations = 50;     // N_i: epochs (pretrain) / blocks (stages)
    double tolerance = 1e-5;     // ε on successive loss deltas
    int epochs_per_block = 4;    // optimizer epochs per alternation block
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
};

/// Throws ConfigError on hard violations; returns human-readable warnings
/// for soft ones (λ_d outside [1,5], k exceeding K).
std::vector<std::string> validate_config(const TrainConfig& config);

/// Discriminative weight for a 1-based alternation block under the optional
/// linear decay schedule (constant when lambda_d_end < 0).
double lambda_d_at(const TrainConfig& config, int block);

/// Adam-style adaptive-moment descent. Gradients are validated finite so a
/// diverging run aborts with a diagnostic instead of poisoning parameters.
class AdamOptimizer {
public:
    AdamOptimizer(double learning_rate, double beta1, double beta2,
                  double epsilon = 1e-8);
    explicit AdamOptimizer(const TrainConfig& config)
        : AdamOptimizer(config.learning_rate, config.beta1, config.beta2) {}

    void step(const std::vector<Matrix*>& params,
              const std::vector<Matrix>& grads);

    const AdamState& state() const { return state_; }
    bool primed() const { return primed_; }
    /// Restores accumulators (checkpoint resume).
    void set_state(AdamState state);

private:
    double learning_rate_;
    double beta1_;
    double beta2_;
    double epsilon_;
    AdamState state_;
    bool primed_ = false;
};

/// One line of training history. Loss terms are set only where the phase
/// defines them; wall_seconds is console-only and never serialized, so
/// metrics files are bitwise reproducible.
struct MetricsRecord {
    int epoch = 0; // epoch (pretrain) or alternation block (stages), 1-based
    std::string phase;
    std::optional<double> l_d;
    std::optional<double> l_r;
    std::optional<double> l_c;
    std::optional<double> l_b;
    std::optional<double> l_w;
    std::optional<double> acc;
    double wall_seconds = 0.0;
};

std::string to_json_line(const MetricsRecord& record);

/// Collects records, optionally appending each as a JSON line to a file and
/// echoing a human-readable line (with wall time) to a console stream.
class MetricsSink {
public:
    MetricsSink() = default;
    MetricsSink(const std::string& path, bool append, std::ostream* console);
    ~MetricsSink();
    MetricsSink(const MetricsSink&) = delete;
    MetricsSink& operator=(const MetricsSink&) = delete;

    void write(const MetricsRecord& record);
    void warn(const std::string& message); // console + stderr fallback
    const std::vector<MetricsRecord>& records() const { return records_; }

private:
    std::vector<MetricsRecord> records_;
    std::ostream* console_ = nullptr;
    void* file_ = nullptr; // std::ofstream, kept out of the header
};

struct PhaseResult {
    int epochs_completed = 0; // epochs or blocks, phase-dependent
    bool converged = false;   // loss-delta criterion met before N_i
};

/// Discriminative pre-training: per epoch, shuffle, and for every batch
/// build the raw-space k-NN graph, extract anchors, and take one optimizer
/// step on L_d + λ·L_r. Stops at N_i epochs or when the epoch-mean L_d
/// moves by ≤ ε. start_epoch continues a resumed run's numbering.
PhaseResult pretrain(const Dataset& data, AutoencoderModel& model,
                     AdamOptimizer& optimizer, const TrainConfig& config,
                     MetricsSink& sink, int start_epoch = 0);

/// Spherical k-means over unit-norm rows: cosine k-means++ seeding (best of
/// 4 restarts by the alignment objective) followed by alternation until
/// assignments stabilize. Deterministic per seed.
ClusterState init_centroids(const Matrix& embedding, int clusters,
                            std::uint64_t seed);

/// Hard assignment to the most-aligned centroid; ties go to the smallest
/// cluster id.
std::vector<int> update_assignments(const Matrix& embedding,
                                    const Matrix& centroids);

/// Closed-form optimal centroids μ_k = s_k/‖s_k‖ for s_k the sum of
/// assigned rows. An empty (or fully cancelling) cluster is reseeded to the
/// point least aligned with the centroids computed so far.
Matrix update_centroids(const Matrix& embedding,
                        const std::vector<int>& assignments, int clusters);

/// Σ_i μ_{a(i)}ᵀ z̃_i for unit-norm rows — the dataset-level alignment value.
double clustering_value(const Matrix& embedding, const ClusterState& state);

struct StageResult {
    PhaseResult phase;
    ClusterState state;
};

/// Alternating stage-1 optimization: k-means++ initialization over the full
/// embedding, then per block epochs-per-block optimizer epochs maximizing
/// L_c − λ_d·L_d − λ_r·L_r followed by a full-dataset assignment/centroid
/// refresh; stops at N_i blocks or when dataset-level L_c moves by < ε.
StageResult cluster_stage1(const Dataset& data, AutoencoderModel& model,
                           AdamOptimizer& optimizer,
                           const TrainConfig& config, MetricsSink& sink);

/// Stage 2 continues from stage-1 state with the maximization target
/// L_c + λ_w·L_w − λ_b·L_b − λ_r·L_r; per-batch memberships come from the
/// current assignments restricted to the batch. A batch with fewer than two
/// non-empty clusters skips its between-cluster term with a warning.
StageResult cluster_stage2(const Dataset& data, AutoencoderModel& model,
                           AdamOptimizer& optimizer,
                           const TrainConfig& config, ClusterState state,
                           MetricsSink& sink);

/// ACC of spherical k-means on the current embedding against dataset labels
/// (nullopt when the dataset is unlabeled).
std::optional<double> embedding_accuracy(const Dataset& data,
                                         const AutoencoderModel& model,
                                         const TrainConfig& config);

} // namespace dac
