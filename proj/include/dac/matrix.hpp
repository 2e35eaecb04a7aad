#pragma once

#include <Eigen/Dense>

#include "dac/error.hpp"

namespace dac {

/// Dense double-precision matrix, row-major so that on-disk payloads and
/// flattened feature rows share the in-memory layout.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row norms below this are treated as a collapsed embedding.
inline constexpr double kDegenerateRowNorm = 1e-8;

inline void require_finite(const Matrix& m, const char* context) {
    if (!m.allFinite()) {
        throw NumericError(std::string("non-finite values in ") + context);
    }
}

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* context) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(context) + ": shape mismatch (" +
                             std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
    }
}

/// Scales every row to unit L2 norm. Rows with norm < min_norm signal a
/// collapsed representation and raise NumericError.
inline Matrix row_normalized(const Matrix& m,
                             double min_norm = kDegenerateRowNorm) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double norm = m.row(i).norm();
        if (!(norm >= min_norm)) {
            throw NumericError("degenerate row " + std::to_string(i) +
                               ": norm " + std::to_string(norm) + " < " +
                               std::to_string(min_norm));
        }
        out.row(i) = m.row(i) / norm;
    }
    return out;
}

} // namespace dac
