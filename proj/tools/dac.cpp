// Command-line front end for the discriminative-autoencoder clustering
// pipeline: synthetic data generation, pre-training, two-stage clustering,
// evaluation, embedding export, and gradient checking.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dac/data.hpp"
#include "dac/error.hpp"
#include "dac/evaluation.hpp"
#include "dac/gradcheck.hpp"
#include "dac/losses.hpp"
#include "dac/model.hpp"
#include "dac/rng.hpp"
#include "dac/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kModelInitStream = 0xD1;

/// Everything a pipeline command needs: training knobs, dataset source,
/// model shape, output locations.
struct RunConfig {
    dac::TrainConfig train;
    std::string features;       // features CSV or IDX image file
    std::string labels;         // labels CSV/IDX file ("" = unlabeled)
    int label_column = -1;      // CSV column holding labels (-1 = none)
    std::string format = "csv"; // csv | idx
    std::vector<int> hidden_dims = {256};
    int latent_dim = 60;
    std::string output_dir = "out";
};

// --- config file handling -----------------------------------------------------

ordered_json config_to_json(const RunConfig& rc) {
    ordered_json j;
    j["alpha"] = rc.train.alpha;
    j["lambda"] = rc.train.lambda;
    j["lambda_d"] = rc.train.lambda_d;
    j["lambda_d_end"] = rc.train.lambda_d_end;
    j["lambda_r"] = rc.train.lambda_r;
    j["lambda_b"] = rc.train.lambda_b;
    j["lambda_w"] = rc.train.lambda_w;
    j["neighbors"] = rc.train.neighbors;
    j["anchor_fraction"] = rc.train.anchor_fraction;
    j["batch_size"] = rc.train.batch_size;
    j["clusters"] = rc.train.clusters;
    j["max_iterations"] = rc.train.max_iterations;
    j["tolerance"] = rc.train.tolerance;
    j["epochs_per_block"] = rc.train.epochs_per_block;
    j["learning_rate"] = rc.train.learning_rate;
    j["beta1"] = rc.train.beta1;
    j["beta2"] = rc.train.beta2;
    j["seed"] = rc.train.seed;
    j["hidden_dims"] = rc.hidden_dims;
    j["latent_dim"] = rc.latent_dim;
    j["features"] = rc.features;
    j["labels"] = rc.labels;
    j["label_column"] = rc.label_column;
    j["format"] = rc.format;
    j["output_dir"] = rc.output_dir;
    return j;
}

void apply_json(RunConfig& rc, const ordered_json& j) {
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "alpha") rc.train.alpha = value.get<double>();
            else if (key == "lambda") rc.train.lambda = value.get<double>();
            else if (key == "lambda_d") rc.train.lambda_d = value.get<double>();
            else if (key == "lambda_d_end")
                rc.train.lambda_d_end = value.get<double>();
            else if (key == "lambda_r") rc.train.lambda_r = value.get<double>();
            else if (key == "lambda_b") rc.train.lambda_b = value.get<double>();
            else if (key == "lambda_w") rc.train.lambda_w = value.get<double>();
            else if (key == "neighbors") rc.train.neighbors = value.get<int>();
            else if (key == "anchor_fraction")
                rc.train.anchor_fraction = value.get<double>();
            else if (key == "batch_size")
                rc.train.batch_size = value.get<int>();
            else if (key == "clusters") rc.train.clusters = value.get<int>();
            else if (key == "max_iterations")
                rc.train.max_iterations = value.get<int>();
            else if (key == "tolerance")
                rc.train.tolerance = value.get<double>();
            else if (key == "epochs_per_block")
                rc.train.epochs_per_block = value.get<int>();
            else if (key == "learning_rate")
                rc.train.learning_rate = value.get<double>();
            else if (key == "beta1") rc.train.beta1 = value.get<double>();
            else if (key == "beta2") rc.train.beta2 = value.get<double>();
            else if (key == "seed")
                rc.train.seed = value.get<std::uint64_t>();
            else if (key == "hidden_dims")
                rc.hidden_dims = value.get<std::vector<int>>();
            else if (key == "latent_dim") rc.latent_dim = value.get<int>();
            else if (key == "features")
                rc.features = value.get<std::string>();
            else if (key == "labels") rc.labels = value.get<std::string>();
            else if (key == "label_column")
                rc.label_column = value.get<int>();
            else if (key == "format") rc.format = value.get<std::string>();
            else if (key == "output_dir")
                rc.output_dir = value.get<std::string>();
            else
                throw dac::ConfigError("unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw dac::ConfigError(std::string("bad config value: ") + e.what());
    }
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw dac::ConfigError("cannot open config file: " + path);
    }
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw dac::ConfigError(std::string("config is not valid JSON: ") +
                               e.what());
    }
    if (!j.is_object()) {
        throw dac::ConfigError("config root must be a JSON object: " + path);
    }
    RunConfig rc;
    apply_json(rc, j);
    return rc;
}

/// Scans argv for --config so file values become the defaults the remaining
/// flags override.
RunConfig preload_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) {
            return load_config_file(argv[i + 1]);
        }
        if (arg.rfind("--config=", 0) == 0) {
            return load_config_file(arg.substr(9));
        }
    }
    return RunConfig{};
}

void write_effective_config(const RunConfig& rc) {
    fs::create_directories(rc.output_dir);
    const fs::path path = fs::path(rc.output_dir) / "effective-config.json";
    std::ofstream out(path);
    if (!out) {
        throw dac::DataError(dac::DataErrorCode::Io,
                             "cannot write " + path.string());
    }
    out << config_to_json(rc).dump(2) << '\n';
}

/// Registers the shared pipeline flags on a subcommand, bound to rc.
void add_run_options(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--config", "JSON config file (flags override it)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--alpha", rc.train.alpha,
                    "anchor confidence in (0,1)");
    cmd->add_option("--lambda", rc.train.lambda,
                    "pre-training reconstruction weight in (0,1]");
    cmd->add_option("--lambda-d", rc.train.lambda_d,
                    "stage-1 discriminative weight");
    cmd->add_option("--lambda-d-end", rc.train.lambda_d_end,
                    "end value for a linear decay of the discriminative "
                    "weight (<0 keeps it constant)");
    cmd->add_option("--lambda-r", rc.train.lambda_r,
                    "stage reconstruction weight");
    cmd->add_option("--lambda-b", rc.train.lambda_b,
                    "between-cluster weight");
    cmd->add_option("--lambda-w", rc.train.lambda_w, "within-cluster weight");
    cmd->add_option("--neighbors", rc.train.neighbors,
                    "k of the raw-space k-NN graph");
    cmd->add_option("--anchor-fraction", rc.train.anchor_fraction,
                    "fraction of unique graph edges kept as anchors");
    cmd->add_option("--batch-size", rc.train.batch_size, "rows per batch");
    cmd->add_option("--clusters", rc.train.clusters, "cluster count K");
    cmd->add_option("--max-iterations", rc.train.max_iterations,
                    "epoch/block budget");
    cmd->add_option("--tolerance", rc.train.tolerance,
                    "convergence tolerance on successive loss deltas");
    cmd->add_option("--epochs-per-block", rc.train.epochs_per_block,
                    "optimizer epochs per alternation block");
    cmd->add_option("--learning-rate", rc.train.learning_rate,
                    "optimizer step size");
    cmd->add_option("--beta1", rc.train.beta1, "first-moment decay");
    cmd->add_option("--beta2", rc.train.beta2, "second-moment decay");
    cmd->add_option("--seed", rc.train.seed, "run seed");
    cmd->add_option("--hidden-dims", rc.hidden_dims,
                    "encoder hidden widths, input->latent order");
    cmd->add_option("--latent-dim", rc.latent_dim, "embedding dimension d");
    cmd->add_option("--features", rc.features,
                    "features file (CSV, or IDX images with --format idx)");
    cmd->add_option("--labels", rc.labels,
                    "labels file (CSV column or IDX labels)");
    cmd->add_option("--label-column", rc.label_column,
                    "zero-based label column inside the features CSV");
    cmd->add_option("--format", rc.format, "input format: csv or idx")
        ->check(CLI::IsMember({"csv", "idx"}));
    cmd->add_option("--output-dir", rc.output_dir, "artifact directory");
}

dac::Dataset load_dataset(const RunConfig& rc) {
    if (rc.features.empty()) {
        throw dac::ConfigError("no features file configured");
    }
    dac::Dataset dataset;
    if (rc.format == "idx") {
        if (rc.labels.empty()) {
            throw dac::ConfigError("IDX input needs a labels file");
        }
        dataset = dac::load_idx(rc.features, rc.labels);
    } else {
        dataset = dac::load_csv(rc.features,
                                rc.label_column >= 0
                                    ? std::optional<int>(rc.label_column)
                                    : std::nullopt);
        if (!rc.labels.empty()) {
            std::vector<int> labels = dac::load_label_file(rc.labels);
            if (static_cast<Eigen::Index>(labels.size()) != dataset.size()) {
                throw dac::DataError(dac::DataErrorCode::CountMismatch,
                                     "label count does not match row count");
            }
            dataset.k_hint =
                1 + *std::max_element(labels.begin(), labels.end());
            dataset.labels = std::move(labels);
        }
    }
    return dataset;
}

std::vector<std::string> numbered_names(const std::string& prefix, int n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (int i = 0; i < n; ++i) {
        names.push_back(prefix + std::to_string(i));
    }
    return names;
}

void report_warnings(const std::vector<std::string>& warnings) {
    for (const std::string& w : warnings) {
        std::cerr << "warning: " << w << std::endl;
    }
}

// --- commands ------------------------------------------------------------------

int cmd_generate(const dac::BlobSpec& spec, const std::string& output_dir) {
    const dac::Dataset dataset = dac::make_blobs(spec);
    fs::create_directories(output_dir);
    const fs::path dir(output_dir);
    dac::write_matrix_csv((dir / "features.csv").string(), dataset.features,
                          numbered_names("x", static_cast<int>(dataset.dim())));
    dac::write_labels_csv((dir / "labels.csv").string(), *dataset.labels,
                          "label");

    ordered_json echo;
    echo["clusters"] = spec.clusters;
    echo["points_per_cluster"] = spec.points_per_cluster;
    echo["dim"] = spec.dim;
    echo["separation"] = spec.separation;
    echo["sigma"] = spec.sigma;
    echo["seed"] = spec.seed;
    std::ofstream out(dir / "blob-spec.json");
    out << echo.dump(2) << '\n';

    std::cout << "wrote " << dataset.size() << " rows to " << output_dir
              << std::endl;
    return 0;
}

int cmd_pretrain(RunConfig rc, const std::string& resume_path,
                 std::string checkpoint_out) {
    report_warnings(dac::validate_config(rc.train));
    const dac::Dataset dataset = load_dataset(rc);
    write_effective_config(rc);

    dac::AutoencoderModel model;
    dac::AdamOptimizer optimizer(rc.train);
    int start_epoch = 0;
    if (!resume_path.empty()) {
        dac::Checkpoint cp = dac::load_checkpoint(resume_path);
        if (cp.model.input_dim() != dataset.dim()) {
            throw dac::DimensionError(
                "checkpoint input width does not match the dataset");
        }
        model = std::move(cp.model);
        start_epoch = cp.epoch;
        if (cp.optimizer.has_value()) {
            optimizer.set_state(std::move(*cp.optimizer));
        }
    } else {
        std::vector<int> dims;
        dims.push_back(static_cast<int>(dataset.dim()));
        dims.insert(dims.end(), rc.hidden_dims.begin(), rc.hidden_dims.end());
        dims.push_back(rc.latent_dim);
        std::vector<dac::LayerSpec> encoder;
        std::vector<dac::LayerSpec> decoder;
        dac::symmetric_autoencoder_specs(dims, encoder, decoder);
        model = dac::AutoencoderModel::init(
            encoder, decoder, dac::rng::mix(rc.train.seed, kModelInitStream));
    }

    const fs::path dir(rc.output_dir);
    dac::MetricsSink sink((dir / "metrics-pretrain.jsonl").string(),
                          /*append=*/!resume_path.empty(), &std::cout);
    const dac::PhaseResult result =
        dac::pretrain(dataset, model, optimizer, rc.train, sink, start_epoch);

    dac::Checkpoint cp;
    cp.model = std::move(model);
    cp.phase = dac::Phase::Pretrained;
    cp.seed = rc.train.seed;
    cp.epoch = start_epoch + result.epochs_completed;
    if (optimizer.primed()) {
        cp.optimizer = optimizer.state();
    }
    if (checkpoint_out.empty()) {
        checkpoint_out = (dir / "pretrained.ckpt").string();
    }
    dac::save_checkpoint(cp, checkpoint_out);

    std::cout << (result.converged ? "converged" : "epoch budget exhausted")
              << " after " << cp.epoch << " epochs; checkpoint: "
              << checkpoint_out << std::endl;
    return 0;
}

int cmd_cluster(RunConfig rc, const std::string& checkpoint_in,
                bool skip_stage2) {
    report_warnings(dac::validate_config(rc.train));
    const dac::Dataset dataset = load_dataset(rc);
    write_effective_config(rc);

    dac::Checkpoint cp = dac::load_checkpoint(checkpoint_in);
    if (cp.model.input_dim() != dataset.dim()) {
        throw dac::DimensionError(
            "checkpoint input width does not match the dataset");
    }
    dac::AutoencoderModel model = std::move(cp.model);

    const fs::path dir(rc.output_dir);
    dac::MetricsSink sink((dir / "metrics-cluster.jsonl").string(),
                          /*append=*/false, &std::cout);

    dac::AdamOptimizer stage1_opt(rc.train);
    dac::StageResult stage =
        dac::cluster_stage1(dataset, model, stage1_opt, rc.train, sink);
    dac::Phase phase = dac::Phase::Stage1;
    int blocks = stage.phase.epochs_completed;
    if (!skip_stage2) {
        dac::AdamOptimizer stage2_opt(rc.train);
        stage = dac::cluster_stage2(dataset, model, stage2_opt, rc.train,
                                    std::move(stage.state), sink);
        phase = dac::Phase::Stage2;
        blocks = stage.phase.epochs_completed;
    }

    dac::write_labels_csv((dir / "assignments.csv").string(),
                          stage.state.assignments, "cluster");
    dac::write_matrix_csv(
        (dir / "centroids.csv").string(), stage.state.centroids,
        numbered_names("z", static_cast<int>(stage.state.centroids.cols())));

    dac::Checkpoint out;
    out.model = std::move(model);
    out.phase = phase;
    out.seed = rc.train.seed;
    out.epoch = blocks;
    const std::string checkpoint_out =
        (dir / (skip_stage2 ? "stage1.ckpt" : "stage2.ckpt")).string();
    dac::save_checkpoint(out, checkpoint_out);

    std::cout << "assignments: " << (dir / "assignments.csv").string()
              << "; checkpoint: " << checkpoint_out << std::endl;
    return 0;
}

int cmd_evaluate(const std::string& assignments_path,
                 const std::string& labels_path, int clusters,
                 const std::string& output_path) {
    const std::vector<int> predicted = dac::load_label_file(assignments_path);
    const std::vector<int> truth = dac::load_label_file(labels_path);
    if (predicted.size() != truth.size()) {
        throw dac::DataError(dac::DataErrorCode::CountMismatch,
                             "assignment/label counts differ");
    }
    if (clusters <= 0) {
        const auto max_of = [](const std::vector<int>& v) {
            return *std::max_element(v.begin(), v.end());
        };
        clusters = 1 + std::max(max_of(predicted), max_of(truth));
    }

    ordered_json report;
    report["n"] = truth.size();
    report["clusters"] = clusters;
    report["acc"] = dac::accuracy(truth, predicted, clusters);
    report["nmi"] = dac::nmi(truth, predicted);
    const std::string text = report.dump(2);
    std::cout << text << std::endl;
    if (!output_path.empty()) {
        std::ofstream out(output_path);
        if (!out) {
            throw dac::DataError(dac::DataErrorCode::Io,
                                 "cannot write " + output_path);
        }
        out << text << '\n';
    }
    return 0;
}

int cmd_export_embedding(RunConfig rc, const std::string& checkpoint_in) {
    const dac::Dataset dataset = load_dataset(rc);
    dac::Checkpoint cp = dac::load_checkpoint(checkpoint_in);
    if (cp.model.input_dim() != dataset.dim()) {
        throw dac::DimensionError(
            "checkpoint input width does not match the dataset");
    }

    const dac::Matrix embedding = cp.model.encode_values(dataset.features);
    const dac::Matrix projection = dac::pca_project_2d(embedding);

    fs::create_directories(rc.output_dir);
    const fs::path dir(rc.output_dir);
    const std::vector<int>* labels =
        dataset.labels.has_value() ? &*dataset.labels : nullptr;
    dac::write_matrix_csv(
        (dir / "embedding.csv").string(), embedding,
        numbered_names("z", static_cast<int>(embedding.cols())), labels);
    dac::write_matrix_csv((dir / "projection.csv").string(), projection,
                          {"pc0", "pc1"}, labels);
    std::cout << "wrote " << embedding.rows() << " embeddings to "
              << rc.output_dir << std::endl;
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, double step) {
    const auto results = dac::run_gradient_suite(seed, tolerance, step);
    bool all_passed = true;
    for (const auto& r : results) {
        std::cout << r.name << "  max-rel-err " << r.report.max_rel_error
                  << "  (worst at " << r.report.worst_entry << ")  "
                  << (r.report.passed ? "PASS" : "FAIL") << std::endl;
        all_passed = all_passed && r.report.passed;
    }
    if (!all_passed) {
        std::cerr << "gradient check failed at tolerance " << tolerance
                  << std::endl;
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discriminative-autoencoder clustering pipeline"};
    app.require_subcommand(1);
    app.add_option("--config", "JSON config file (flags override it)")
        ->check(CLI::ExistingFile);

    // Values from --config become defaults; explicit flags then override.
    RunConfig rc;
    try {
        rc = preload_config(argc, argv);
    } catch (const dac::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }

    // generate
    dac::BlobSpec blob;
    std::string generate_dir = "out";
    CLI::App* generate =
        app.add_subcommand("generate", "write a synthetic blob dataset");
    generate->add_option("--clusters", blob.clusters, "cluster count");
    generate->add_option("--per-cluster", blob.points_per_cluster,
                         "points per cluster");
    generate->add_option("--dim", blob.dim, "ambient dimension");
    generate->add_option("--separation", blob.separation,
                         "center separation in units of sigma");
    generate->add_option("--sigma", blob.sigma, "cluster noise scale");
    generate->add_option("--seed", blob.seed, "generator seed");
    generate->add_option("--output-dir", generate_dir, "artifact directory");

    // pretrain
    std::string resume_path;
    std::string checkpoint_out;
    CLI::App* pretrain_cmd = app.add_subcommand(
        "pretrain", "discriminative auto-encoder pre-training");
    add_run_options(pretrain_cmd, rc);
    pretrain_cmd->add_option("--resume", resume_path,
                             "continue from this checkpoint")
        ->check(CLI::ExistingFile);
    pretrain_cmd->add_option("--checkpoint-out", checkpoint_out,
                             "checkpoint path (default: "
                             "<output-dir>/pretrained.ckpt)");

    // cluster
    std::string checkpoint_in;
    bool skip_stage2 = false;
    CLI::App* cluster_cmd =
        app.add_subcommand("cluster", "two-stage joint clustering");
    add_run_options(cluster_cmd, rc);
    cluster_cmd
        ->add_option("--checkpoint", checkpoint_in, "pretrained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cluster_cmd->add_flag("--skip-stage2", skip_stage2,
                          "stop after the first clustering stage");

    // evaluate
    std::string assignments_path;
    std::string labels_path;
    int eval_clusters = 0;
    std::string eval_output;
    CLI::App* evaluate_cmd =
        app.add_subcommand("evaluate", "ACC/NMI of assignments vs labels");
    evaluate_cmd
        ->add_option("--assignments", assignments_path,
                     "cluster ids, one per row")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--labels", labels_path, "ground-truth labels")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--clusters", eval_clusters,
                             "label space size (default: inferred)");
    evaluate_cmd->add_option("--output", eval_output,
                             "also write the report to this file");

    // export-embedding
    std::string export_checkpoint;
    CLI::App* export_cmd = app.add_subcommand(
        "export-embedding", "latent matrix and 2D projection as CSV");
    add_run_options(export_cmd, rc);
    export_cmd
        ->add_option("--checkpoint", export_checkpoint, "model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);

    // gradcheck
    std::uint64_t gradcheck_seed = 7;
    double gradcheck_tolerance = 1e-5;
    double gradcheck_step = 1e-6;
    CLI::App* gradcheck_cmd = app.add_subcommand(
        "gradcheck", "finite-difference check of every loss gradient");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "instance seed");
    gradcheck_cmd->add_option("--tolerance", gradcheck_tolerance,
                              "max allowed relative error");
    gradcheck_cmd->add_option("--step", gradcheck_step,
                              "central-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) {
            return cmd_generate(blob, generate_dir);
        }
        if (pretrain_cmd->parsed()) {
            return cmd_pretrain(std::move(rc), resume_path, checkpoint_out);
        }
        if (cluster_cmd->parsed()) {
            return cmd_cluster(std::move(rc), checkpoint_in, skip_stage2);
        }
        if (evaluate_cmd->parsed()) {
            return cmd_evaluate(assignments_path, labels_path, eval_clusters,
                                eval_output);
        }
        if (export_cmd->parsed()) {
            return cmd_export_embedding(std::move(rc), export_checkpoint);
        }
        if (gradcheck_cmd->parsed()) {
            return cmd_gradcheck(gradcheck_seed, gradcheck_tolerance,
                                 gradcheck_step);
        }
    } catch (const dac::DataError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 2;
    } catch (const dac::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << std::endl;
        return 3;
    } catch (const dac::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
