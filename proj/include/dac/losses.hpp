#pragma once

#include <cstdint>
#include <vector>

#include "dac/autodiff.hpp"
#include "dac/knn.hpp"
#include "dac/matrix.hpp"
#include "dac/model.hpp"

namespace dac {

/// Pairwise weights over a batch. Anchor entries (both ordered directions of
/// each unordered anchor) are −(1−α)/|A| with |A| the ordered anchor count;
/// remaining off-diagonal entries are 1/(|B|²−|A|); the diagonal is zero.
struct PairWeights {
    Matrix weights;      // |B|×|B|, symmetric; anchor entries negative
    Matrix anchor_mask;  // 0/1, symmetric, zero diagonal
    double alpha = 0.0;
    std::int64_t ordered_anchor_count = 0;
};

PairWeights pair_weights(int batch_size, const AnchorSet& anchors,
                         double alpha);

/// Unit-norm centroids plus hard assignments (one cluster id per row).
/// For batch-level objectives the assignments are the global ones gathered
/// down to the batch rows, paired with the global centroids.
struct ClusterState {
    Matrix centroids;             // K×d, rows unit-norm
    std::vector<int> assignments; // values in [0, K)

    int cluster_count() const { return static_cast<int>(centroids.rows()); }
    /// 0/1 indicator matrix S with exactly one 1 per row.
    Matrix assignment_matrix() const;
};

/// Mean absolute off-diagonal cosine similarity over non-anchor ordered
/// pairs minus the anchor attraction term; built on the tape from the raw
/// latent node (row normalization included here).
ad::NodeId discriminative_loss(ad::Tape& tape, ad::NodeId latent,
                               const AnchorSet& anchors, double alpha);

/// Label-informed variant used as a diagnostic/oracle only: mean |cosine|
/// over between-cluster ordered pairs minus mean signed cosine over
/// within-cluster ordered pairs (clusters with < 2 members contribute no
/// within pairs; an empty within set drops that term).
ad::NodeId oracle_discriminative_loss(ad::Tape& tape, ad::NodeId latent,
                                      const std::vector<int>& labels);

/// Squared Frobenius reconstruction error divided by the batch size.
ad::NodeId reconstruction_loss(ad::Tape& tape, const Matrix& x,
                               ad::NodeId reconstruction);

/// Σ_i Σ_k S_ik μ_kᵀ z̃_i — total cosine alignment of each embedding with
/// its assigned centroid (higher is better). Centroids enter as constants.
ad::NodeId clustering_objective(ad::Tape& tape, ad::NodeId latent,
                                const ClusterState& state);

/// Worst-case mean absolute cross-cluster similarity. The max over cluster
/// pairs is differentiated through the achieving pair only (lexicographic
/// tie-break). Requires ≥ 2 non-empty clusters among the rows.
ad::NodeId between_cluster_loss(ad::Tape& tape, ad::NodeId latent,
                                const std::vector<int>& assignments);

/// Σ_k |C_k|⁻² Σ_{i,j∈C_k} z̃_iᵀz̃_j over ordered pairs including i=j.
ad::NodeId within_cluster_loss(ad::Tape& tape, ad::NodeId latent,
                               const std::vector<int>& assignments);

/// Composite objectives. Individual term nodes are exposed so callers can
/// read their values for metrics without rebuilding graphs.

struct PretrainObjective {
    ad::NodeId total; // minimize: L_d + λ·L_r
    ad::NodeId discriminative;
    ad::NodeId reconstruction;
    std::vector<ad::NodeId> param_nodes;
};

PretrainObjective pretrain_objective(ad::Tape& tape,
                                     const AutoencoderModel& model,
                                     const Matrix& x,
                                     const AnchorSet& anchors, double alpha,
                                     double lambda);

struct Stage1Objective {
    ad::NodeId total; // maximize: L_c − λ_d·L_d − λ_r·L_r
    ad::NodeId clustering;
    ad::NodeId discriminative;
    ad::NodeId reconstruction;
    std::vector<ad::NodeId> param_nodes;
};

Stage1Objective stage1_objective(ad::Tape& tape,
                                 const AutoencoderModel& model,
                                 const Matrix& x, const AnchorSet& anchors,
                                 const ClusterState& state, double alpha,
                                 double lambda_d, double lambda_r);

struct Stage2Objective {
    ad::NodeId total; // maximize: L_c + λ_w·L_w − λ_b·L_b − λ_r·L_r
    ad::NodeId clustering;
    ad::NodeId within;
    ad::NodeId between;       // unset when include_between is false
    bool has_between = false;
    ad::NodeId reconstruction;
    std::vector<ad::NodeId> param_nodes;
};

/// state.assignments must correspond to the rows of x (batch view).
/// include_between=false omits the between-cluster term (the trainer's
/// fallback for a batch with < 2 non-empty clusters).
Stage2Objective stage2_objective(ad::Tape& tape,
                                 const AutoencoderModel& model,
                                 const Matrix& x, const ClusterState& state,
                                 double lambda_w, double lambda_b,
                                 double lambda_r,
                                 bool include_between = true);

} // namespace dac
