#include "dac/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dac/error.hpp"
#include "dac/rng.hpp"

namespace dac {

std::string to_string(Phase phase) {
    switch (phase) {
    case Phase::Pretrained: return "pretrained";
    case Phase::Stage1: return "stage1";
    case Phase::Stage2: return "stage2";
    }
    throw ConfigError("unknown phase value");
}

Phase phase_from_string(const std::string& name) {
    if (name == "pretrained") return Phase::Pretrained;
    if (name == "stage1") return Phase::Stage1;
    if (name == "stage2") return Phase::Stage2;
    throw ConfigError("unknown phase name: " + name);
}

namespace {

std::string to_string(Activation a) {
    return a == Activation::Relu ? "relu" : "linear";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "linear") return Activation::Linear;
    throw DataError(DataErrorCode::Parse, "unknown activation: " + name);
}

void validate_specs(const std::vector<LayerSpec>& encoder,
                    const std::vector<LayerSpec>& decoder) {
    if (encoder.empty() || decoder.empty()) {
        throw ConfigError("encoder and decoder each need at least one layer");
    }
    auto check_chain = [](const std::vector<LayerSpec>& layers,
                          const char* name) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].input_dim < 1 || layers[i].output_dim < 1) {
                throw ConfigError(std::string(name) +
                                  " layer dimensions must be >= 1");
            }
            if (i > 0 && layers[i].input_dim != layers[i - 1].output_dim) {
                throw DimensionError(std::string(name) +
                                     " layer chain is inconsistent");
            }
        }
    };
    check_chain(encoder, "encoder");
    check_chain(decoder, "decoder");
    if (decoder.front().input_dim != encoder.back().output_dim) {
        throw DimensionError("decoder input must match encoder latent dim");
    }
    if (decoder.back().output_dim != encoder.front().input_dim) {
        throw DimensionError("decoder output must match encoder input dim");
    }
}

} // namespace

AutoencoderModel AutoencoderModel::init(const std::vector<LayerSpec>& encoder,
                                        const std::vector<LayerSpec>& decoder,
                                        std::uint64_t seed) {
    validate_specs(encoder, decoder);
    AutoencoderModel model;
    rng::Engine engine(seed);
    auto build = [&engine](const std::vector<LayerSpec>& specs,
                           std::vector<DenseLayer>& out) {
        for (const LayerSpec& spec : specs) {
            DenseLayer layer;
            layer.spec = spec;
            const double bound = std::sqrt(6.0 / spec.input_dim);
            layer.weight = Matrix(spec.input_dim, spec.output_dim);
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                    layer.weight(r, c) = engine.uniform(-bound, bound);
                }
            }
            layer.bias = Matrix::Zero(1, spec.output_dim);
            out.push_back(std::move(layer));
        }
    };
    build(encoder, model.encoder_);
    build(decoder, model.decoder_);
    return model;
}

const std::vector<LayerSpec> AutoencoderModel::encoder_specs() const {
    std::vector<LayerSpec> specs;
    for (const DenseLayer& layer : encoder_) specs.push_back(layer.spec);
    return specs;
}

const std::vector<LayerSpec> AutoencoderModel::decoder_specs() const {
    std::vector<LayerSpec> specs;
    for (const DenseLayer& layer : decoder_) specs.push_back(layer.spec);
    return specs;
}

std::vector<Matrix*> AutoencoderModel::parameters() {
    std::vector<Matrix*> params;
    for (DenseLayer& layer : encoder_) {
        params.push_back(&layer.weight);
        params.push_back(&layer.bias);
    }
    for (DenseLayer& layer : decoder_) {
        params.push_back(&layer.weight);
        params.push_back(&layer.bias);
    }
    return params;
}

std::vector<const Matrix*> AutoencoderModel::parameters() const {
    std::vector<const Matrix*> params;
    for (const DenseLayer& layer : encoder_) {
        params.push_back(&layer.weight);
        params.push_back(&layer.bias);
    }
    for (const DenseLayer& layer : decoder_) {
        params.push_back(&layer.weight);
        params.push_back(&layer.bias);
    }
    return params;
}

std::int64_t AutoencoderModel::parameter_count() const {
    std::int64_t count = 0;
    for (const Matrix* p : parameters()) count += p->size();
    return count;
}

namespace {

ad::NodeId run_layers(ad::Tape& tape, ad::NodeId x, const auto& layers,
                      std::vector<ad::NodeId>* param_nodes) {
    ad::NodeId h = x;
    for (const auto& layer : layers) {
        ad::NodeId w = tape.input(layer.weight);
        ad::NodeId b = tape.input(layer.bias);
        if (param_nodes != nullptr) {
            param_nodes->push_back(w);
            param_nodes->push_back(b);
        }
        h = tape.add_bias(tape.matmul(h, w), b);
        if (layer.spec.activation == Activation::Relu) {
            h = tape.relu(h);
        }
    }
    return h;
}

} // namespace

ad::NodeId AutoencoderModel::encode(ad::Tape& tape, const Matrix& x,
                                    std::vector<ad::NodeId>* param_nodes) const {
    if (x.cols() != input_dim()) {
        throw DimensionError("encode: input has wrong column count");
    }
    return run_layers(tape, tape.input(x), encoder_, param_nodes);
}

ad::NodeId AutoencoderModel::decode(ad::Tape& tape, ad::NodeId z,
                                    std::vector<ad::NodeId>* param_nodes) const {
    if (tape.value(z).cols() != latent_dim()) {
        throw DimensionError("decode: latent has wrong column count");
    }
    return run_layers(tape, z, decoder_, param_nodes);
}

namespace {

// Mirrors the graph ops step for step (materialized product, then bias, then
// clamp) so evaluation sees bitwise the same activations as training.
Matrix run_layers_plain(const Matrix& x, const auto& layers) {
    Matrix h = x;
    for (const auto& layer : layers) {
        Matrix linear = h * layer.weight;
        linear.rowwise() += layer.bias.row(0);
        if (layer.spec.activation == Activation::Relu) {
            linear = linear.cwiseMax(0.0);
        }
        h = std::move(linear);
    }
    require_finite(h, "forward pass");
    return h;
}

} // namespace

Matrix AutoencoderModel::encode_values(const Matrix& x) const {
    if (x.cols() != input_dim()) {
        throw DimensionError("encode: input has wrong column count");
    }
    return run_layers_plain(x, encoder_);
}

Matrix AutoencoderModel::decode_values(const Matrix& z) const {
    if (z.cols() != latent_dim()) {
        throw DimensionError("decode: latent has wrong column count");
    }
    return run_layers_plain(z, decoder_);
}

void symmetric_autoencoder_specs(const std::vector<int>& dims,
                                 std::vector<LayerSpec>& encoder,
                                 std::vector<LayerSpec>& decoder) {
    if (dims.size() < 2) {
        throw ConfigError("need at least input and latent dimensions");
    }
    encoder.clear();
    decoder.clear();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = (i + 2 == dims.size());
        encoder.push_back({dims[i], dims[i + 1],
                           last ? Activation::Linear : Activation::Relu});
    }
    for (std::size_t i = dims.size() - 1; i > 0; --i) {
        const bool last = (i == 1);
        decoder.push_back({dims[i], dims[i - 1],
                           last ? Activation::Linear : Activation::Relu});
    }
}

ForwardPass forward(const AutoencoderModel& model, ad::Tape& tape,
                    const Matrix& x) {
    ForwardPass pass;
    pass.latent = model.encode(tape, x, &pass.param_nodes);
    pass.reconstruction = model.decode(tape, pass.latent, &pass.param_nodes);
    return pass;
}

// --- checkpoint I/O ---------------------------------------------------------

struct CheckpointCodec {
    static void write_doubles(std::ostream& out, const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const auto bits = std::bit_cast<std::uint64_t>(m(r, c));
                char buf[8];
                for (int i = 0; i < 8; ++i) {
                    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
                }
                out.write(buf, 8);
            }
        }
    }

    static void read_doubles(std::istream& in, Matrix& m,
                             const std::string& path) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                char buf[8];
                if (!in.read(buf, 8)) {
                    throw DataError(DataErrorCode::Truncated,
                                    "checkpoint payload truncated: " + path);
                }
                std::uint64_t bits = 0;
                for (int i = 0; i < 8; ++i) {
                    bits |= static_cast<std::uint64_t>(
                                static_cast<unsigned char>(buf[i]))
                            << (8 * i);
                }
                m(r, c) = std::bit_cast<double>(bits);
            }
        }
    }

    static void save(const Checkpoint& cp, const std::string& path) {
        if (cp.optimizer.has_value()) {
            const std::size_t params = cp.model.parameters().size();
            if (cp.optimizer->m.size() != params ||
                cp.optimizer->v.size() != params) {
                throw ConfigError(
                    "checkpoint optimizer state does not cover every "
                    "parameter; omit it instead");
            }
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw DataError(DataErrorCode::Io,
                            "cannot open checkpoint for writing: " + path);
        }
        out << "dac-checkpoint 1\n";
        out << "phase " << dac::to_string(cp.phase) << "\n";
        out << "seed " << cp.seed << "\n";
        out << "epoch " << cp.epoch << "\n";
        auto write_layers = [&out](const char* name, const auto& layers) {
            out << name << " " << layers.size() << "\n";
            for (const auto& layer : layers) {
                out << "layer " << layer.spec.input_dim << " "
                    << layer.spec.output_dim << " "
                    << to_string(layer.spec.activation) << "\n";
            }
        };
        write_layers("encoder", cp.model.encoder_);
        write_layers("decoder", cp.model.decoder_);
        if (cp.optimizer.has_value()) {
            out << "optimizer adam " << cp.optimizer->step << "\n";
        } else {
            out << "optimizer none\n";
        }
        out << "end\n";
        for (const Matrix* p : cp.model.parameters()) {
            write_doubles(out, *p);
        }
        if (cp.optimizer.has_value()) {
            for (const Matrix& m : cp.optimizer->m) write_doubles(out, m);
            for (const Matrix& v : cp.optimizer->v) write_doubles(out, v);
        }
        if (!out) {
            throw DataError(DataErrorCode::Io,
                            "failed writing checkpoint: " + path);
        }
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw DataError(DataErrorCode::Io,
                            "cannot open checkpoint: " + path);
        }
        auto next_line = [&in, &path]() {
            std::string line;
            if (!std::getline(in, line)) {
                throw DataError(DataErrorCode::Truncated,
                                "checkpoint manifest truncated: " + path);
            }
            return line;
        };
        auto parse_error = [&path](const std::string& line) {
            return DataError(DataErrorCode::Parse,
                             "bad checkpoint line \"" + line + "\": " + path);
        };

        std::string line = next_line();
        if (line != "dac-checkpoint 1") {
            throw DataError(DataErrorCode::BadMagic,
                            "not a checkpoint file: " + path);
        }

        Checkpoint cp;
        std::vector<LayerSpec> encoder;
        std::vector<LayerSpec> decoder;
        bool has_adam = false;
        std::int64_t adam_step = 0;
        while ((line = next_line()) != "end") {
            std::istringstream fields(line);
            std::string key;
            fields >> key;
            if (key == "phase") {
                std::string value;
                if (!(fields >> value)) throw parse_error(line);
                cp.phase = phase_from_string(value);
            } else if (key == "seed") {
                if (!(fields >> cp.seed)) throw parse_error(line);
            } else if (key == "epoch") {
                if (!(fields >> cp.epoch)) throw parse_error(line);
            } else if (key == "encoder" || key == "decoder") {
                std::size_t count = 0;
                if (!(fields >> count)) throw parse_error(line);
                auto& target = (key == "encoder") ? encoder : decoder;
                for (std::size_t i = 0; i < count; ++i) {
                    std::string layer_line = next_line();
                    std::istringstream layer_fields(layer_line);
                    std::string tag, activation;
                    LayerSpec spec;
                    if (!(layer_fields >> tag >> spec.input_dim >>
                          spec.output_dim >> activation) ||
                        tag != "layer") {
                        throw parse_error(layer_line);
                    }
                    spec.activation = activation_from_string(activation);
                    target.push_back(spec);
                }
            } else if (key == "optimizer") {
                std::string kind;
                if (!(fields >> kind)) throw parse_error(line);
                if (kind == "adam") {
                    if (!(fields >> adam_step)) throw parse_error(line);
                    has_adam = true;
                } else if (kind != "none") {
                    throw parse_error(line);
                }
            } else {
                throw parse_error(line);
            }
        }
        if (encoder.empty() || decoder.empty()) {
            throw DataError(DataErrorCode::Parse,
                            "checkpoint manifest lacks layer specs: " + path);
        }

        validate_specs(encoder, decoder);
        auto build = [](const std::vector<LayerSpec>& specs,
                        std::vector<AutoencoderModel::DenseLayer>& out) {
            for (const LayerSpec& spec : specs) {
                AutoencoderModel::DenseLayer layer;
                layer.spec = spec;
                layer.weight = Matrix(spec.input_dim, spec.output_dim);
                layer.bias = Matrix(1, spec.output_dim);
                out.push_back(std::move(layer));
            }
        };
        build(encoder, cp.model.encoder_);
        build(decoder, cp.model.decoder_);
        for (Matrix* p : cp.model.parameters()) {
            read_doubles(in, *p, path);
        }
        if (has_adam) {
            AdamState state;
            state.step = adam_step;
            for (const Matrix* p : cp.model.parameters()) {
                Matrix m(p->rows(), p->cols());
                read_doubles(in, m, path);
                state.m.push_back(std::move(m));
            }
            for (const Matrix* p : cp.model.parameters()) {
                Matrix v(p->rows(), p->cols());
                read_doubles(in, v, path);
                state.v.push_back(std::move(v));
            }
            cp.optimizer = std::move(state);
        }
        char extra = 0;
        if (in.read(&extra, 1)) {
            throw DataError(DataErrorCode::CountMismatch,
                            "checkpoint has trailing bytes: " + path);
        }
        return cp;
    }
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    CheckpointCodec::save(checkpoint, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    return CheckpointCodec::load(path);
}

} // namespace dac
