#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "dac/matrix.hpp"

namespace dac::ad {

/// Handle to a node owned by a Tape.
struct NodeId {
    std::int32_t index = -1;
    bool valid() const { return index >= 0; }
};

enum class WeightMode {
    Absolute, // sum of w_ij * |a_ij|
    Signed,   // sum of w_ij * a_ij
};

/// Reverse-mode tape over dense matrices. The operation set is deliberately
/// closed: matrix product, bias broadcast, ReLU, row normalization, Gram
/// product, weighted (absolute) sums, squared Frobenius distance and scalar
/// combination. Nodes are appended in topological order by construction, so
/// backward() is a single reverse sweep.
///
/// Subgradient conventions: ReLU'(0) = 0 and d|x|/dx at 0 = 0.
/// Every produced value is checked finite; NaN/Inf raises NumericError.
class Tape {
public:
    /// Leaf node. Use for inputs, parameters and constants alike; gradients
    /// are available for every leaf after backward().
    NodeId input(Matrix value);

    /// Matrix product a * b.
    NodeId matmul(NodeId a, NodeId b);

    /// Elementwise sum, same shapes.
    NodeId add(NodeId a, NodeId b);

    /// Adds a 1 x cols bias row to every row of a.
    NodeId add_bias(NodeId a, NodeId bias);

    /// Multiplication by a compile-time constant scalar.
    NodeId scale(NodeId a, double factor);

    /// Elementwise max(0, x).
    NodeId relu(NodeId a);

    /// Scales every row to unit L2 norm; a row norm below min_norm signals a
    /// collapsed embedding and raises NumericError. Backward applies the
    /// projection Jacobian (I - y y^T) / ||z|| per row.
    NodeId row_normalize(NodeId a, double min_norm = kDegenerateRowNorm);

    /// a * a^T, exactly symmetric by construction (upper triangle mirrored).
    NodeId gram(NodeId a);

    /// Scalar sum_ij w_ij * |a_ij| (Absolute) or sum_ij w_ij * a_ij (Signed).
    /// The weights are constants; no gradient flows into them.
    NodeId weighted_abs_sum(NodeId a, Matrix weights,
                            WeightMode mode = WeightMode::Absolute);

    /// Scalar ||a - b||_F^2.
    NodeId frobenius_sq(NodeId a, NodeId b);

    const Matrix& value(NodeId id) const;

    /// Gradient of the last backward() root with respect to this node.
    /// Zero for nodes the root does not depend on.
    const Matrix& grad(NodeId id) const;

    /// Convenience accessor for 1x1 nodes.
    double scalar_value(NodeId id) const;

    /// Reverse sweep from a scalar root. Clears previous gradients first, so
    /// repeated calls yield identical results. Raises ConfigError if the root
    /// is not 1x1.
    void backward(NodeId root);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad; // allocated and zeroed on creation
        std::array<std::int32_t, 2> parents{-1, -1};
        // Accumulates this node's grad into its parents' grads.
        std::function<void(Tape&, const Node&)> pull;
    };

    NodeId push(Matrix value, std::int32_t p0, std::int32_t p1,
                std::function<void(Tape&, const Node&)> pull);
    const Node& at(NodeId id) const;
    Matrix& grad_of(std::int32_t index) { return nodes_[index].grad; }

    std::vector<Node> nodes_;
};

} // namespace dac::ad
