#include "dac/autodiff.hpp"

#include <string>
#include <utility>

namespace dac::ad {

NodeId Tape::push(Matrix value, std::int32_t p0, std::int32_t p1,
                  std::function<void(Tape&, const Node&)> pull) {
    require_finite(value, "tape node");
    Node node;
    node.grad = Matrix::Zero(value.rows(), value.cols());
    node.value = std::move(value);
    node.parents = {p0, p1};
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::at(NodeId id) const {
    if (!id.valid() || id.index >= static_cast<std::int32_t>(nodes_.size())) {
        throw ConfigError("invalid tape node id");
    }
    return nodes_[id.index];
}

const Matrix& Tape::value(NodeId id) const { return at(id).value; }

const Matrix& Tape::grad(NodeId id) const { return at(id).grad; }

double Tape::scalar_value(NodeId id) const {
    const Matrix& v = at(id).value;
    if (v.rows() != 1 || v.cols() != 1) {
        throw ConfigError("scalar_value on a non-scalar node");
    }
    return v(0, 0);
}

NodeId Tape::input(Matrix value) {
    return push(std::move(value), -1, -1, nullptr);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Matrix& va = at(a).value;
    const Matrix& vb = at(b).value;
    if (va.cols() != vb.rows()) {
        throw DimensionError("matmul: " + std::to_string(va.rows()) + "x" +
                             std::to_string(va.cols()) + " * " +
                             std::to_string(vb.rows()) + "x" +
                             std::to_string(vb.cols()));
    }
    return push(va * vb, a.index, b.index,
                [](Tape& t, const Node& self) {
                    const Matrix& g = self.grad;
                    const Matrix& va = t.nodes_[self.parents[0]].value;
                    const Matrix& vb = t.nodes_[self.parents[1]].value;
                    t.grad_of(self.parents[0]) += g * vb.transpose();
                    t.grad_of(self.parents[1]) += va.transpose() * g;
                });
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Matrix& va = at(a).value;
    const Matrix& vb = at(b).value;
    require_same_shape(va, vb, "add");
    return push(va + vb, a.index, b.index, [](Tape& t, const Node& self) {
        t.grad_of(self.parents[0]) += self.grad;
        t.grad_of(self.parents[1]) += self.grad;
    });
}

NodeId Tape::add_bias(NodeId a, NodeId bias) {
    const Matrix& va = at(a).value;
    const Matrix& vb = at(bias).value;
    if (vb.rows() != 1 || vb.cols() != va.cols()) {
        throw DimensionError("add_bias: bias must be 1x" +
                             std::to_string(va.cols()));
    }
    Matrix out = va;
    out.rowwise() += vb.row(0);
    return push(std::move(out), a.index, bias.index,
                [](Tape& t, const Node& self) {
                    t.grad_of(self.parents[0]) += self.grad;
                    t.grad_of(self.parents[1]).row(0) +=
                        self.grad.colwise().sum();
                });
}

NodeId Tape::scale(NodeId a, double factor) {
    return push(at(a).value * factor, a.index, -1,
                [factor](Tape& t, const Node& self) {
                    t.grad_of(self.parents[0]) += factor * self.grad;
                });
}

NodeId Tape::relu(NodeId a) {
    const Matrix& va = at(a).value;
    return push(va.cwiseMax(0.0), a.index, -1,
                [](Tape& t, const Node& self) {
                    const Matrix& va = t.nodes_[self.parents[0]].value;
                    t.grad_of(self.parents[0]) +=
                        (va.array() > 0.0).cast<double>().matrix().cwiseProduct(
                            self.grad);
                });
}

NodeId Tape::row_normalize(NodeId a, double min_norm) {
    return push(row_normalized(at(a).value, min_norm), a.index, -1,
                [](Tape& t, const Node& self) {
                    const Matrix& va = t.nodes_[self.parents[0]].value;
                    const Matrix& y = self.value;
                    Matrix& pg = t.grad_of(self.parents[0]);
                    for (Eigen::Index i = 0; i < va.rows(); ++i) {
                        const double norm = va.row(i).norm();
                        const double radial = self.grad.row(i).dot(y.row(i));
                        pg.row(i) +=
                            (self.grad.row(i) - radial * y.row(i)) / norm;
                    }
                });
}

NodeId Tape::gram(NodeId a) {
    const Matrix& va = at(a).value;
    Matrix out = va * va.transpose();
    // Mirror the upper triangle so symmetry holds bitwise.
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < out.cols(); ++j) {
            out(j, i) = out(i, j);
        }
    }
    return push(std::move(out), a.index, -1, [](Tape& t, const Node& self) {
        const Matrix& va = t.nodes_[self.parents[0]].value;
        const Matrix& g = self.grad;
        t.grad_of(self.parents[0]) += (g + g.transpose()) * va;
    });
}

NodeId Tape::weighted_abs_sum(NodeId a, Matrix weights, WeightMode mode) {
    const Matrix& va = at(a).value;
    require_same_shape(va, weights, "weighted_abs_sum");
    double total = 0.0;
    if (mode == WeightMode::Absolute) {
        total = weights.cwiseProduct(va.cwiseAbs()).sum();
    } else {
        total = weights.cwiseProduct(va).sum();
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), a.index, -1,
                [w = std::move(weights), mode](Tape& t, const Node& self) {
                    const double g = self.grad(0, 0);
                    const Matrix& va = t.nodes_[self.parents[0]].value;
                    Matrix& pg = t.grad_of(self.parents[0]);
                    if (mode == WeightMode::Absolute) {
                        // sign(0) = 0 keeps the subgradient bounded
                        pg += g * w.cwiseProduct(
                                      va.array().sign().matrix());
                    } else {
                        pg += g * w;
                    }
                });
}

NodeId Tape::frobenius_sq(NodeId a, NodeId b) {
    const Matrix& va = at(a).value;
    const Matrix& vb = at(b).value;
    require_same_shape(va, vb, "frobenius_sq");
    Matrix out(1, 1);
    out(0, 0) = (va - vb).squaredNorm();
    return push(std::move(out), a.index, b.index,
                [](Tape& t, const Node& self) {
                    const double g = self.grad(0, 0);
                    const Matrix diff = t.nodes_[self.parents[0]].value -
                                        t.nodes_[self.parents[1]].value;
                    t.grad_of(self.parents[0]) += 2.0 * g * diff;
                    t.grad_of(self.parents[1]) -= 2.0 * g * diff;
                });
}

void Tape::backward(NodeId root) {
    const Node& r = at(root);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
        throw ConfigError("backward: root must be a scalar (1x1) node");
    }
    for (Node& n : nodes_) {
        n.grad.setZero();
    }
    // Mark nodes the root actually depends on.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<std::int32_t> stack{root.index};
    while (!stack.empty()) {
        const std::int32_t i = stack.back();
        stack.pop_back();
        if (reachable[i]) continue;
        reachable[i] = 1;
        for (const std::int32_t p : nodes_[i].parents) {
            if (p >= 0 && !reachable[p]) stack.push_back(p);
        }
    }
    nodes_[root.index].grad(0, 0) = 1.0;
    // Creation order is a topological order, so one reverse pass suffices.
    for (std::int32_t i = root.index; i >= 0; --i) {
        if (reachable[i] && nodes_[i].pull) {
            nodes_[i].pull(*this, nodes_[i]);
        }
    }
}

} // namespace dac::ad
