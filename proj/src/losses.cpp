#include "dac/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dac/error.hpp"

namespace dac {

namespace {

void check_assignments(const std::vector<int>& assignments, Eigen::Index rows,
                       int cluster_count, const char* context) {
    if (static_cast<Eigen::Index>(assignments.size()) != rows) {
        throw DimensionError(std::string(context) +
                             ": assignment count does not match row count");
    }
    for (int a : assignments) {
        if (a < 0 || a >= cluster_count) {
            throw ConfigError(std::string(context) +
                              ": assignment id out of range");
        }
    }
}

/// Rows grouped by cluster id; member lists ascending. Size = max id + 1.
std::vector<std::vector<int>> group_members(const std::vector<int>& assignments,
                                            int cluster_count) {
    std::vector<std::vector<int>> members(cluster_count);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        members[assignments[i]].push_back(static_cast<int>(i));
    }
    return members;
}

} // namespace

Matrix ClusterState::assignment_matrix() const {
    Matrix s = Matrix::Zero(static_cast<Eigen::Index>(assignments.size()),
                            centroids.rows());
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] < 0 || assignments[i] >= centroids.rows()) {
            throw ConfigError("assignment id out of range");
        }
        s(static_cast<Eigen::Index>(i), assignments[i]) = 1.0;
    }
    return s;
}

PairWeights pair_weights(int batch_size, const AnchorSet& anchors,
                         double alpha) {
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
        throw ConfigError("anchor confidence alpha must lie in (0, 1)");
    }
    if (batch_size < 1) {
        throw ConfigError("batch size must be >= 1");
    }

    PairWeights w;
    w.alpha = alpha;
    w.anchor_mask = Matrix::Zero(batch_size, batch_size);
    for (const auto& [i, j] : anchors.pairs) {
        if (i < 0 || j < 0 || i >= batch_size || j >= batch_size) {
            throw ConfigError("anchor index outside batch range");
        }
        if (i == j) {
            throw ConfigError("anchor pair must join two distinct points");
        }
        w.anchor_mask(i, j) = 1.0;
        w.anchor_mask(j, i) = 1.0;
    }
    // Each unordered anchor contributes two ordered entries.
    w.ordered_anchor_count =
        static_cast<std::int64_t>(w.anchor_mask.sum() + 0.5);

    const double n2 = static_cast<double>(batch_size) * batch_size;
    const double repel =
        1.0 / (n2 - static_cast<double>(w.ordered_anchor_count));
    const double attract =
        w.ordered_anchor_count > 0
            ? -(1.0 - alpha) / static_cast<double>(w.ordered_anchor_count)
            : 0.0;

    w.weights = Matrix::Constant(batch_size, batch_size, repel);
    w.weights.diagonal().setZero();
    for (const auto& [i, j] : anchors.pairs) {
        w.weights(i, j) = attract;
        w.weights(j, i) = attract;
    }
    return w;
}

ad::NodeId discriminative_loss(ad::Tape& tape, ad::NodeId latent,
                               const AnchorSet& anchors, double alpha) {
    const int n = static_cast<int>(tape.value(latent).rows());
    if (n < 1) {
        throw DimensionError("discriminative loss needs a nonempty batch");
    }
    const PairWeights w = pair_weights(n, anchors, alpha);

    const ad::NodeId normalized = tape.row_normalize(latent);
    const ad::NodeId cosine = tape.gram(normalized);

    // Repulsion over non-anchor off-diagonal entries, attraction (negative
    // weights, signed) over anchor entries; diagonal weights are zero.
    const Matrix repel_weights =
        w.weights.cwiseProduct(Matrix::Ones(n, n) - w.anchor_mask);
    const Matrix attract_weights = w.weights.cwiseProduct(w.anchor_mask);

    const ad::NodeId repel =
        tape.weighted_abs_sum(cosine, repel_weights, ad::WeightMode::Absolute);
    const ad::NodeId attract =
        tape.weighted_abs_sum(cosine, attract_weights, ad::WeightMode::Signed);
    return tape.add(repel, attract);
}

ad::NodeId oracle_discriminative_loss(ad::Tape& tape, ad::NodeId latent,
                                      const std::vector<int>& labels) {
    const Eigen::Index n = tape.value(latent).rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw DimensionError("labels must cover every row");
    }

    Matrix between = Matrix::Zero(n, n);
    Matrix within = Matrix::Zero(n, n);
    std::int64_t between_count = 0;
    std::int64_t within_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            if (labels[i] == labels[j]) {
                within(i, j) = 1.0;
                ++within_count;
            } else {
                between(i, j) = 1.0;
                ++between_count;
            }
        }
    }
    // Singleton clusters contribute no within pairs; when none exist the
    // within term is dropped entirely (likewise for the between term).
    if (between_count > 0) {
        between *= 1.0 / static_cast<double>(between_count);
    }
    if (within_count > 0) {
        within *= -1.0 / static_cast<double>(within_count);
    }

    const ad::NodeId cosine = tape.gram(tape.row_normalize(latent));
    const ad::NodeId between_term =
        tape.weighted_abs_sum(cosine, between, ad::WeightMode::Absolute);
    const ad::NodeId within_term =
        tape.weighted_abs_sum(cosine, within, ad::WeightMode::Signed);
    return tape.add(between_term, within_term);
}

ad::NodeId reconstruction_loss(ad::Tape& tape, const Matrix& x,
                               ad::NodeId reconstruction) {
    if (x.rows() < 1) {
        throw DimensionError("reconstruction loss needs a nonempty batch");
    }
    const ad::NodeId sq = tape.frobenius_sq(reconstruction, tape.input(x));
    return tape.scale(sq, 1.0 / static_cast<double>(x.rows()));
}

ad::NodeId clustering_objective(ad::Tape& tape, ad::NodeId latent,
                                const ClusterState& state) {
    const Matrix& z = tape.value(latent);
    if (state.centroids.cols() != z.cols()) {
        throw DimensionError("centroid dimension does not match embedding");
    }
    check_assignments(state.assignments, z.rows(), state.cluster_count(),
                      "clustering objective");

    const ad::NodeId scores =
        tape.matmul(latent, tape.input(state.centroids.transpose()));
    return tape.weighted_abs_sum(scores, state.assignment_matrix(),
                                 ad::WeightMode::Signed);
}

ad::NodeId between_cluster_loss(ad::Tape& tape, ad::NodeId latent,
                                const std::vector<int>& assignments) {
    const Eigen::Index n = tape.value(latent).rows();
    const int cluster_count =
        assignments.empty()
            ? 0
            : *std::max_element(assignments.begin(), assignments.end()) + 1;
    check_assignments(assignments, n, std::max(cluster_count, 1),
                      "between-cluster loss");
    const auto members = group_members(assignments, cluster_count);

    std::vector<int> nonempty;
    for (int k = 0; k < cluster_count; ++k) {
        if (!members[k].empty()) nonempty.push_back(k);
    }
    if (nonempty.size() < 2) {
        throw NumericError(
            "between-cluster loss undefined: fewer than 2 non-empty clusters");
    }

    const ad::NodeId cosine = tape.gram(latent);
    const Matrix& c = tape.value(cosine);

    // Locate the worst cluster pair on forward values; the loss node then
    // carries only that pair's entries, so the gradient flows through the
    // achieving pair alone. Strict comparison keeps the lexicographically
    // first pair on ties.
    double worst = -1.0;
    int worst_a = -1;
    int worst_b = -1;
    for (std::size_t a = 0; a < nonempty.size(); ++a) {
        for (std::size_t b = a + 1; b < nonempty.size(); ++b) {
            const auto& rows = members[nonempty[a]];
            const auto& cols = members[nonempty[b]];
            double sum = 0.0;
            for (int i : rows) {
                for (int j : cols) {
                    sum += std::abs(c(i, j));
                }
            }
            const double mean =
                sum / (static_cast<double>(rows.size()) * cols.size());
            if (mean > worst) {
                worst = mean;
                worst_a = nonempty[a];
                worst_b = nonempty[b];
            }
        }
    }

    Matrix weights = Matrix::Zero(n, n);
    const double scale = 1.0 / (static_cast<double>(members[worst_a].size()) *
                                members[worst_b].size());
    for (int i : members[worst_a]) {
        for (int j : members[worst_b]) {
            weights(i, j) = scale;
        }
    }
    return tape.weighted_abs_sum(cosine, weights, ad::WeightMode::Absolute);
}

ad::NodeId within_cluster_loss(ad::Tape& tape, ad::NodeId latent,
                               const std::vector<int>& assignments) {
    const Eigen::Index n = tape.value(latent).rows();
    const int cluster_count =
        assignments.empty()
            ? 0
            : *std::max_element(assignments.begin(), assignments.end()) + 1;
    check_assignments(assignments, n, std::max(cluster_count, 1),
                      "within-cluster loss");
    const auto members = group_members(assignments, cluster_count);

    // All ordered member pairs including i=j, normalized by |C_k| squared.
    Matrix weights = Matrix::Zero(n, n);
    for (const auto& rows : members) {
        if (rows.empty()) continue;
        const double scale =
            1.0 / (static_cast<double>(rows.size()) * rows.size());
        for (int i : rows) {
            for (int j : rows) {
                weights(i, j) = scale;
            }
        }
    }
    const ad::NodeId cosine = tape.gram(latent);
    return tape.weighted_abs_sum(cosine, weights, ad::WeightMode::Signed);
}

PretrainObjective pretrain_objective(ad::Tape& tape,
                                     const AutoencoderModel& model,
                                     const Matrix& x,
                                     const AnchorSet& anchors, double alpha,
                                     double lambda) {
    PretrainObjective obj;
    const ForwardPass pass = forward(model, tape, x);
    obj.param_nodes = pass.param_nodes;
    obj.discriminative = discriminative_loss(tape, pass.latent, anchors, alpha);
    obj.reconstruction = reconstruction_loss(tape, x, pass.reconstruction);
    obj.total =
        tape.add(obj.discriminative, tape.scale(obj.reconstruction, lambda));
    return obj;
}

Stage1Objective stage1_objective(ad::Tape& tape,
                                 const AutoencoderModel& model,
                                 const Matrix& x, const AnchorSet& anchors,
                                 const ClusterState& state, double alpha,
                                 double lambda_d, double lambda_r) {
    Stage1Objective obj;
    const ForwardPass pass = forward(model, tape, x);
    obj.param_nodes = pass.param_nodes;
    obj.clustering =
        clustering_objective(tape, tape.row_normalize(pass.latent), state);
    obj.discriminative = discriminative_loss(tape, pass.latent, anchors, alpha);
    obj.reconstruction = reconstruction_loss(tape, x, pass.reconstruction);
    obj.total = tape.add(
        tape.add(obj.clustering, tape.scale(obj.discriminative, -lambda_d)),
        tape.scale(obj.reconstruction, -lambda_r));
    return obj;
}

Stage2Objective stage2_objective(ad::Tape& tape,
                                 const AutoencoderModel& model,
                                 const Matrix& x, const ClusterState& state,
                                 double lambda_w, double lambda_b,
                                 double lambda_r, bool include_between) {
    Stage2Objective obj;
    const ForwardPass pass = forward(model, tape, x);
    obj.param_nodes = pass.param_nodes;
    const ad::NodeId normalized = tape.row_normalize(pass.latent);
    obj.clustering = clustering_objective(tape, normalized, state);
    obj.within = within_cluster_loss(tape, normalized, state.assignments);
    obj.reconstruction = reconstruction_loss(tape, x, pass.reconstruction);

    ad::NodeId total =
        tape.add(obj.clustering, tape.scale(obj.within, lambda_w));
    if (include_between) {
        obj.between = between_cluster_loss(tape, normalized, state.assignments);
        obj.has_between = true;
        total = tape.add(total, tape.scale(obj.between, -lambda_b));
    }
    obj.total = tape.add(total, tape.scale(obj.reconstruction, -lambda_r));
    return obj;
}

} // namespace dac
