#include "dac/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "dac/error.hpp"
#include "dac/losses.hpp"
#include "dac/rng.hpp"

namespace dac {

std::vector<Matrix> finite_difference(const ScalarFn& f,
                                      std::vector<Matrix> points,
                                      double step) {
    if (step <= 0.0) {
        throw ConfigError("finite-difference step must be positive");
    }
    std::vector<Matrix> grads;
    grads.reserve(points.size());
    for (const Matrix& p : points) {
        grads.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
        Matrix& p = points[k];
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                const double saved = p(r, c);
                p(r, c) = saved + step;
                const double up = f(points);
                p(r, c) = saved - step;
                const double down = f(points);
                p(r, c) = saved;
                grads[k](r, c) = (up - down) / (2.0 * step);
            }
        }
    }
    return grads;
}

GradCheckReport compare_gradients(const std::vector<Matrix>& analytic,
                                  const std::vector<Matrix>& numeric,
                                  double tolerance) {
    if (analytic.size() != numeric.size()) {
        throw DimensionError("gradient list sizes differ");
    }
    GradCheckReport report;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        require_same_shape(analytic[k], numeric[k], "gradcheck");
        for (Eigen::Index r = 0; r < analytic[k].rows(); ++r) {
            for (Eigen::Index c = 0; c < analytic[k].cols(); ++c) {
                const double a = analytic[k](r, c);
                const double n = numeric[k](r, c);
                const double abs_err = std::abs(a - n);
                const double scale =
                    std::max({1.0, std::abs(a), std::abs(n)});
                const double rel_err = abs_err / scale;
                report.max_abs_error = std::max(report.max_abs_error, abs_err);
                if (rel_err > report.max_rel_error) {
                    report.max_rel_error = rel_err;
                    std::ostringstream where;
                    where << "matrix " << k << " (" << r << "," << c << ")";
                    report.worst_entry = where.str();
                }
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    return report;
}

namespace {

/// Fixed desk-scale instance for the suite. K=3 clusters over an 8-point
/// batch, two anchors, all loss weights away from 0 and 1e-3 so every term
/// contributes at a visible scale.
struct SuiteInstance {
    AutoencoderModel model;
    Matrix x; // 8×input
    AnchorSet anchors;
    ClusterState state;
    double alpha = 0.7;
    double lambda = 0.3;
    double lambda_d = 1.5;
    double lambda_r = 0.25;
    double lambda_w = 0.5;
    double lambda_b = 1.2;
};

constexpr int kBatch = 8;
constexpr double kKinkMargin = 1e-4;

/// True when the instance sits safely away from every non-smooth point:
/// ReLU pre-activations, |cosine| kinks, and the worst-pair argmax of the
/// between-cluster term.
bool well_conditioned(const SuiteInstance& inst) {
    // Pre-activations of every layer, re-run plainly layer by layer.
    auto layers_ok = [](const Matrix& input,
                        const std::vector<LayerSpec>& specs,
                        const std::vector<const Matrix*>& params,
                        std::size_t param_offset, Matrix& out) {
        Matrix h = input;
        for (std::size_t l = 0; l < specs.size(); ++l) {
            const Matrix& w = *params[param_offset + 2 * l];
            const Matrix& b = *params[param_offset + 2 * l + 1];
            Matrix pre = (h * w).rowwise() + b.row(0);
            if (specs[l].activation == Activation::Relu) {
                if (pre.cwiseAbs().minCoeff() < kKinkMargin) return false;
                h = pre.cwiseMax(0.0);
            } else {
                h = pre;
            }
        }
        out = h;
        return true;
    };

    const auto params = inst.model.parameters();
    const auto encoder = inst.model.encoder_specs();
    const auto decoder = inst.model.decoder_specs();
    Matrix latent;
    if (!layers_ok(inst.x, encoder, params, 0, latent)) return false;
    Matrix reconstruction;
    if (!layers_ok(latent, decoder, params, 2 * encoder.size(),
                   reconstruction)) {
        return false;
    }

    const Matrix z = row_normalized(latent);
    const Matrix cosine = z * z.transpose();
    for (Eigen::Index i = 0; i < cosine.rows(); ++i) {
        for (Eigen::Index j = 0; j < cosine.cols(); ++j) {
            if (i != j && std::abs(cosine(i, j)) < kKinkMargin) return false;
        }
    }

    // Worst cluster pair must win by a clear margin.
    const int clusters = inst.state.cluster_count();
    std::vector<std::vector<int>> members(clusters);
    for (int i = 0; i < kBatch; ++i) {
        members[inst.state.assignments[i]].push_back(i);
    }
    std::vector<double> means;
    for (int a = 0; a < clusters; ++a) {
        for (int b = a + 1; b < clusters; ++b) {
            if (members[a].empty() || members[b].empty()) continue;
            double sum = 0.0;
            for (int i : members[a]) {
                for (int j : members[b]) {
                    sum += std::abs(cosine(i, j));
                }
            }
            means.push_back(sum / (static_cast<double>(members[a].size()) *
                                   members[b].size()));
        }
    }
    std::sort(means.begin(), means.end());
    return means.size() < 2 ||
           means.back() - means[means.size() - 2] >= kKinkMargin;
}

SuiteInstance make_instance(std::uint64_t seed) {
    constexpr int kInput = 7;
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;
    symmetric_autoencoder_specs({kInput, 6, 4}, encoder, decoder);

    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        SuiteInstance inst;
        const std::uint64_t stream = rng::mix(seed, attempt);
        inst.model = AutoencoderModel::init(encoder, decoder, stream);
        rng::Engine engine(rng::mix(stream, 1));
        inst.x = Matrix(kBatch, kInput);
        for (Eigen::Index r = 0; r < inst.x.rows(); ++r) {
            for (Eigen::Index c = 0; c < inst.x.cols(); ++c) {
                inst.x(r, c) = engine.uniform(0.05, 1.0);
            }
        }
        inst.anchors.pairs = {{0, 1}, {2, 3}};
        inst.state.assignments = {0, 1, 2, 0, 1, 2, 0, 1};
        inst.state.centroids = Matrix(3, 4);
        for (Eigen::Index r = 0; r < 3; ++r) {
            Eigen::RowVectorXd v(4);
            for (Eigen::Index c = 0; c < 4; ++c) {
                v(c) = engine.gaussian();
            }
            inst.state.centroids.row(r) = v / v.norm();
        }
        if (well_conditioned(inst)) {
            return inst;
        }
    }
    throw NumericError("could not find a well-conditioned gradcheck instance");
}

using LossBuilder = std::function<ad::NodeId(
    ad::Tape&, const AutoencoderModel&, const SuiteInstance&,
    std::vector<ad::NodeId>&)>;

LossGradCheck check_loss(const std::string& name, const SuiteInstance& inst,
                         const LossBuilder& build, double tolerance,
                         double step) {
    // Analytic pass.
    ad::Tape tape;
    std::vector<ad::NodeId> param_nodes;
    const ad::NodeId loss = build(tape, inst.model, inst, param_nodes);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    for (ad::NodeId node : param_nodes) {
        analytic.push_back(tape.grad(node));
    }

    // Central differences over every parameter matrix.
    std::vector<Matrix> points;
    for (const Matrix* p : inst.model.parameters()) {
        points.push_back(*p);
    }
    AutoencoderModel probe = inst.model;
    const ScalarFn f = [&probe, &inst, &build](const std::vector<Matrix>& ps) {
        const auto slots = probe.parameters();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            *slots[i] = ps[i];
        }
        ad::Tape t;
        std::vector<ad::NodeId> ignored;
        return t.scalar_value(build(t, probe, inst, ignored));
    };
    const std::vector<Matrix> numeric = finite_difference(f, points, step);

    LossGradCheck result;
    result.name = name;
    result.report = compare_gradients(analytic, numeric, tolerance);
    return result;
}

} // namespace

std::vector<LossGradCheck> run_gradient_suite(std::uint64_t seed,
                                              double tolerance, double step) {
    const SuiteInstance inst = make_instance(seed);

    std::vector<std::pair<std::string, LossBuilder>> cases;
    cases.reserve(8);
    cases.emplace_back("discriminative",
                       [&](ad::Tape& t, const AutoencoderModel& m,
                           const SuiteInstance& in,
                           std::vector<ad::NodeId>& params) {
                           ForwardPass pass = forward(m, t, in.x);
                           params = pass.param_nodes;
                           return discriminative_loss(t, pass.latent,
                                                      in.anchors, in.alpha);
                       });
    cases.emplace_back("reconstruction",
                       [&](ad::Tape& t, const AutoencoderModel& m,
                           const SuiteInstance& in,
                           std::vector<ad::NodeId>& params) {
                           ForwardPass pass = forward(m, t, in.x);
                           params = pass.param_nodes;
                           return reconstruction_loss(t, in.x,
                                                      pass.reconstruction);
                       });
    cases.emplace_back("clustering",
                       [&](ad::Tape& t, const AutoencoderModel& m,
                           const SuiteInstance& in,
                           std::vector<ad::NodeId>& params) {
                           ForwardPass pass = forward(m, t, in.x);
                           params = pass.param_nodes;
                           return clustering_objective(
                               t, t.row_normalize(pass.latent), in.state);
                       });
    cases.emplace_back("between",
                       [&](ad::Tape& t, const AutoencoderModel& m,
                           const SuiteInstance& in,
                           std::vector<ad::NodeId>& params) {
                           ForwardPass pass = forward(m, t, in.x);
                           params = pass.param_nodes;
                           return between_cluster_loss(
                               t, t.row_normalize(pass.latent),
                               in.state.assignments);
                       });
    cases.emplace_back("within",
                       [&](ad::Tape& t, const AutoencoderModel& m,
                           const SuiteInstance& in,
                           std::vector<ad::NodeId>& params) {
                           ForwardPass pass = forward(m, t, in.x);
                           params = pass.param_nodes;
                           return within_cluster_loss(
                               t, t.row_normalize(pass.latent),
                               in.state.assignments);
                       });
    cases.emplace_back("pretrain-composite",
                       [](ad::Tape& t, const AutoencoderModel& m,
                          const SuiteInstance& in,
                          std::vector<ad::NodeId>& params) {
                           PretrainObjective obj = pretrain_objective(
                               t, m, in.x, in.anchors, in.alpha, in.lambda);
                           params = obj.param_nodes;
                           return obj.total;
                       });
    cases.emplace_back("stage1-composite",
                       [](ad::Tape& t, const AutoencoderModel& m,
                          const SuiteInstance& in,
                          std::vector<ad::NodeId>& params) {
                           Stage1Objective obj = stage1_objective(
                               t, m, in.x, in.anchors, in.state, in.alpha,
                               in.lambda_d, in.lambda_r);
                           params = obj.param_nodes;
                           return obj.total;
                       });
    cases.emplace_back("stage2-composite",
                       [](ad::Tape& t, const AutoencoderModel& m,
                          const SuiteInstance& in,
                          std::vector<ad::NodeId>& params) {
                           Stage2Objective obj = stage2_objective(
                               t, m, in.x, in.state, in.lambda_w, in.lambda_b,
                               in.lambda_r);
                           params = obj.param_nodes;
                           return obj.total;
                       });

    std::vector<LossGradCheck> results;
    results.reserve(cases.size());
    for (const auto& [name, build] : cases) {
        results.push_back(check_loss(name, inst, build, tolerance, step));
    }
    return results;
}

} // namespace dac
