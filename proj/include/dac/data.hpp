#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dac/matrix.hpp"

namespace dac {

/// A loaded dataset: features scaled to [0,1], optional integer labels.
struct Dataset {
    Matrix features;                        // n×p
    std::optional<std::vector<int>> labels; // length n, values in [0, k_hint)
    std::string name;
    int k_hint = 0; // expected cluster count; 0 when unknown

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

/// Per-column affine scaling captured by min_max_scale_in_place so raw
/// values can be recovered: raw = scaled * range + min (range 0 marks a
/// constant column, which scales to 0).
struct ColumnScale {
    std::vector<double> min;
    std::vector<double> range;
};

ColumnScale min_max_scale_in_place(Matrix& m);

/// IDX image/label pair (big-endian headers; magic 0x00000803 for images
/// with count/rows/cols dims, 0x00000801 for labels). Pixels are flattened
/// row-major and scaled by 1/255.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

/// Rectangular numeric text table, delimiter auto-detected among comma and
/// tab, with optional single header row (detected by non-numeric cells).
/// Features are min-max scaled per column. label_column, when given,
/// extracts that zero-based column as integer labels.
Dataset load_csv(const std::string& path,
                 std::optional<int> label_column = std::nullopt);

/// Single-column integer file (optional header), e.g. labels or cluster
/// assignments written by the pipeline.
std::vector<int> load_label_file(const std::string& path);

/// Synthetic Gaussian clusters on an orthogonal frame: K unit directions
/// u_k, centers at sep·σ/√2 · u_k (pairwise center distance exactly sep·σ),
/// isotropic noise σ, features min-max scaled to [0,1] afterwards.
struct BlobSpec {
    int clusters = 5;
    int points_per_cluster = 100;
    int dim = 10;
    double separation = 8.0; // in units of sigma
    double sigma = 1.0;
    std::uint64_t seed = 0;
};

Dataset make_blobs(const BlobSpec& spec);

/// Seeded per-epoch batching: shuffles row indices with a stream derived
/// from (seed, epoch) and cuts consecutive slices. A final short batch is
/// dropped when smaller than min_batch (callers pass max(2k+2, K+1) so the
/// neighbor graph and cluster terms stay well-posed).
std::vector<std::vector<int>> batch_indices(Eigen::Index row_count,
                                            int batch_size, int min_batch,
                                            std::uint64_t seed, int epoch);

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows);

/// Delimited-text writers (one-line headers) for pipeline artifacts.
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& column_names,
                      const std::vector<int>* labels = nullptr);
void write_labels_csv(const std::string& path, const std::vector<int>& labels,
                      const std::string& column_name);

} // namespace dac
