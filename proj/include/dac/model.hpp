#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dac/autodiff.hpp"
#include "dac/matrix.hpp"

namespace dac {

enum class Activation { Relu, Linear };

enum class Phase { Pretrained, Stage1, Stage2 };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& name);

struct LayerSpec {
    int input_dim = 0;
    int output_dim = 0;
    Activation activation = Activation::Linear;
};

/// Adam accumulators stored alongside a checkpointed model so training can
/// resume mid-phase. Matrices mirror the parameter list order.
struct AdamState {
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

/// Dense autoencoder: encoder f(.; theta_e) mapping p -> d and decoder
/// g(.; theta_d) mapping d -> p. Weight matrices are stored input x output;
/// biases are 1 x output rows.
class AutoencoderModel {
public:
    AutoencoderModel() = default;

    /// Uniform init with He-style bound sqrt(6 / fan_in); biases zero.
    /// Deterministic per seed (weights filled encoder-first, row-major).
    static AutoencoderModel init(const std::vector<LayerSpec>& encoder,
                                 const std::vector<LayerSpec>& decoder,
                                 std::uint64_t seed);

    int input_dim() const { return encoder_.front().spec.input_dim; }
    int latent_dim() const { return encoder_.back().spec.output_dim; }

    const std::vector<LayerSpec> encoder_specs() const;
    const std::vector<LayerSpec> decoder_specs() const;

    /// All parameters in checkpoint order: encoder (W, b per layer), then
    /// decoder (W, b per layer).
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::int64_t parameter_count() const;

    /// Builds the encoder subgraph on the tape; returns the latent node.
    /// When param_nodes is given, leaf ids are appended in parameter order.
    ad::NodeId encode(ad::Tape& tape, const Matrix& x,
                      std::vector<ad::NodeId>* param_nodes = nullptr) const;

    /// Builds the decoder subgraph from a latent node.
    ad::NodeId decode(ad::Tape& tape, ad::NodeId z,
                      std::vector<ad::NodeId>* param_nodes = nullptr) const;

    /// Graph-free forward passes for evaluation and export.
    Matrix encode_values(const Matrix& x) const;
    Matrix decode_values(const Matrix& z) const;

private:
    struct DenseLayer {
        LayerSpec spec;
        Matrix weight;
        Matrix bias;
    };
    std::vector<DenseLayer> encoder_;
    std::vector<DenseLayer> decoder_;

    friend struct CheckpointCodec;
};

/// Encoder + decoder for a symmetric stack described by its encoder dimension
/// chain, e.g. {784, 256, 60}: hidden layers ReLU, bottleneck and final
/// reconstruction linear.
void symmetric_autoencoder_specs(const std::vector<int>& dims,
                                 std::vector<LayerSpec>& encoder,
                                 std::vector<LayerSpec>& decoder);

struct ForwardPass {
    ad::NodeId latent;
    ad::NodeId reconstruction;
    std::vector<ad::NodeId> param_nodes; // parameter order
};

ForwardPass forward(const AutoencoderModel& model, ad::Tape& tape,
                    const Matrix& x);

/// On-disk checkpoint. Layout: a line-oriented ASCII manifest terminated by
/// an "end" line, immediately followed by a raw payload of IEEE-754 doubles
/// in little-endian byte order. The payload holds every parameter matrix
/// row-major in parameter order; when optimizer state is present the Adam
/// first-moment and second-moment matrices follow in the same order.
/// Round-trips are bitwise exact.
struct Checkpoint {
    AutoencoderModel model;
    Phase phase = Phase::Pretrained;
    std::uint64_t seed = 0;
    int epoch = 0; // epochs completed within the stored phase
    std::optional<AdamState> optimizer;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace dac
