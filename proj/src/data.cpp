#include "dac/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

#include "dac/error.hpp"
#include "dac/rng.hpp"

namespace dac {

ColumnScale min_max_scale_in_place(Matrix& m) {
    ColumnScale scale;
    scale.min.resize(m.cols());
    scale.range.resize(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double lo = m.col(c).minCoeff();
        const double hi = m.col(c).maxCoeff();
        scale.min[c] = lo;
        scale.range[c] = hi - lo;
        if (scale.range[c] == 0.0) {
            m.col(c).setZero(); // constant column carries no information
        } else {
            m.col(c) = (m.col(c).array() - lo) / scale.range[c];
        }
    }
    return scale;
}

// --- IDX ---------------------------------------------------------------------

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw DataError(DataErrorCode::Truncated,
                        "unexpected end of file: " + path);
    }
    return (static_cast<std::uint32_t>(bytes[0]) << 24) |
           (static_cast<std::uint32_t>(bytes[1]) << 16) |
           (static_cast<std::uint32_t>(bytes[2]) << 8) |
           static_cast<std::uint32_t>(bytes[3]);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

} // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) {
        throw DataError(DataErrorCode::Io, "cannot open: " + images_path);
    }
    if (read_u32_be(images, images_path) != kImagesMagic) {
        throw DataError(DataErrorCode::BadMagic,
                        "not an IDX image file: " + images_path);
    }
    const std::uint32_t count = read_u32_be(images, images_path);
    const std::uint32_t rows = read_u32_be(images, images_path);
    const std::uint32_t cols = read_u32_be(images, images_path);
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;

    Dataset dataset;
    dataset.name = std::filesystem::path(images_path).stem().string();
    dataset.features = Matrix(count, pixels);
    std::vector<unsigned char> buffer(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!images.read(reinterpret_cast<char*>(buffer.data()),
                         static_cast<std::streamsize>(pixels))) {
            throw DataError(DataErrorCode::Truncated,
                            "image payload truncated: " + images_path);
        }
        for (std::size_t p = 0; p < pixels; ++p) {
            dataset.features(i, static_cast<Eigen::Index>(p)) =
                buffer[p] / 255.0;
        }
    }

    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) {
        throw DataError(DataErrorCode::Io, "cannot open: " + labels_path);
    }
    if (read_u32_be(labels, labels_path) != kLabelsMagic) {
        throw DataError(DataErrorCode::BadMagic,
                        "not an IDX label file: " + labels_path);
    }
    const std::uint32_t label_count = read_u32_be(labels, labels_path);
    if (label_count != count) {
        throw DataError(DataErrorCode::CountMismatch,
                        "image/label counts differ: " + images_path);
    }
    std::vector<int> values(label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) {
        unsigned char byte;
        if (!labels.read(reinterpret_cast<char*>(&byte), 1)) {
            throw DataError(DataErrorCode::Truncated,
                            "label payload truncated: " + labels_path);
        }
        values[i] = byte;
    }
    dataset.k_hint =
        values.empty()
            ? 0
            : 1 + *std::max_element(values.begin(), values.end());
    dataset.labels = std::move(values);
    return dataset;
}

// --- delimited text -----------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delimiter) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delimiter, start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

bool parse_double(std::string_view cell, double& out) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto result = std::from_chars(begin, end, out);
    return result.ec == std::errc() && result.ptr == end && !cell.empty();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(DataErrorCode::Io, "cannot open: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

char detect_delimiter(const std::string& line) {
    const auto commas = std::count(line.begin(), line.end(), ',');
    const auto tabs = std::count(line.begin(), line.end(), '\t');
    return tabs > commas ? '\t' : ',';
}

} // namespace

Dataset load_csv(const std::string& path, std::optional<int> label_column) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) {
        throw DataError(DataErrorCode::Parse, "file has no rows: " + path);
    }
    const char delimiter = detect_delimiter(lines.front());

    // A header is a first row with at least one non-numeric cell.
    const auto first_cells = split(lines.front(), delimiter);
    bool has_header = false;
    for (const auto& cell : first_cells) {
        double ignored;
        if (!parse_double(cell, ignored)) {
            has_header = true;
            break;
        }
    }

    const std::size_t first_data = has_header ? 1 : 0;
    const std::size_t row_count = lines.size() - first_data;
    if (row_count == 0) {
        throw DataError(DataErrorCode::Parse,
                        "file has a header but no data rows: " + path);
    }
    const std::size_t col_count = first_cells.size();
    if (label_column.has_value() &&
        (*label_column < 0 ||
         static_cast<std::size_t>(*label_column) >= col_count)) {
        throw ConfigError("label column index out of range");
    }

    Matrix table(row_count, col_count);
    for (std::size_t r = 0; r < row_count; ++r) {
        const auto cells = split(lines[first_data + r], delimiter);
        if (cells.size() != col_count) {
            throw DataError(DataErrorCode::Parse,
                            "ragged row at line " +
                                std::to_string(first_data + r + 1) + ": " +
                                path);
        }
        for (std::size_t c = 0; c < col_count; ++c) {
            double value;
            if (!parse_double(cells[c], value)) {
                throw DataError(DataErrorCode::Parse,
                                "non-numeric cell at line " +
                                    std::to_string(first_data + r + 1) + ": " +
                                    path);
            }
            table(r, c) = value;
        }
    }

    Dataset dataset;
    dataset.name = std::filesystem::path(path).stem().string();
    if (label_column.has_value()) {
        std::vector<int> labels(row_count);
        for (std::size_t r = 0; r < row_count; ++r) {
            const double raw = table(r, *label_column);
            const double rounded = std::round(raw);
            if (std::abs(raw - rounded) > 1e-9 || rounded < 0) {
                throw DataError(DataErrorCode::Parse,
                                "label column holds non-integer values: " +
                                    path);
            }
            labels[r] = static_cast<int>(rounded);
        }
        dataset.k_hint =
            1 + *std::max_element(labels.begin(), labels.end());
        dataset.labels = std::move(labels);
        dataset.features = Matrix(row_count, col_count - 1);
        Eigen::Index out = 0;
        for (std::size_t c = 0; c < col_count; ++c) {
            if (static_cast<int>(c) == *label_column) continue;
            dataset.features.col(out++) = table.col(c);
        }
    } else {
        dataset.features = std::move(table);
    }
    min_max_scale_in_place(dataset.features);
    return dataset;
}

std::vector<int> load_label_file(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) {
        throw DataError(DataErrorCode::Parse, "file has no rows: " + path);
    }
    std::vector<int> labels;
    labels.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view cell = trim(lines[i]);
        double value;
        if (!parse_double(cell, value)) {
            if (i == 0) continue; // single header line
            throw DataError(DataErrorCode::Parse,
                            "non-numeric label at line " +
                                std::to_string(i + 1) + ": " + path);
        }
        const double rounded = std::round(value);
        if (std::abs(value - rounded) > 1e-9) {
            throw DataError(DataErrorCode::Parse,
                            "non-integer label at line " +
                                std::to_string(i + 1) + ": " + path);
        }
        labels.push_back(static_cast<int>(rounded));
    }
    if (labels.empty()) {
        throw DataError(DataErrorCode::Parse,
                        "no label values found: " + path);
    }
    return labels;
}

// --- synthetic blobs -----------------------------------------------------------

Dataset make_blobs(const BlobSpec& spec) {
    if (spec.clusters < 1 || spec.points_per_cluster < 1 || spec.dim < 1) {
        throw ConfigError("blob counts must be >= 1");
    }
    if (!(spec.separation > 0.0) || !(spec.sigma > 0.0)) {
        throw ConfigError("blob separation and sigma must be positive");
    }
    if (spec.dim < spec.clusters) {
        throw ConfigError(
            "orthogonal cluster frame needs dimension >= cluster count");
    }

    rng::Engine engine(spec.seed);

    // K orthonormal directions by Gram-Schmidt over Gaussian draws (repeated
    // once for numerical stability). Centers sit at radius sep·σ/√2, making
    // every pairwise center distance exactly sep·σ.
    Matrix directions(spec.clusters, spec.dim);
    for (int k = 0; k < spec.clusters; ++k) {
        Eigen::RowVectorXd v(spec.dim);
        double norm = 0.0;
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (int c = 0; c < spec.dim; ++c) {
                v(c) = engine.gaussian();
            }
            for (int pass = 0; pass < 2; ++pass) {
                for (int l = 0; l < k; ++l) {
                    v -= v.dot(directions.row(l)) * directions.row(l);
                }
            }
            norm = v.norm();
            if (norm > 1e-6) break;
        }
        if (norm <= 1e-6) {
            throw NumericError("failed to build an orthogonal cluster frame");
        }
        directions.row(k) = v / norm;
    }
    const double radius = spec.separation * spec.sigma / std::sqrt(2.0);

    const Eigen::Index n =
        static_cast<Eigen::Index>(spec.clusters) * spec.points_per_cluster;
    Dataset dataset;
    dataset.name = "blobs";
    dataset.k_hint = spec.clusters;
    dataset.features = Matrix(n, spec.dim);
    std::vector<int> labels(n);
    Eigen::Index row = 0;
    for (int k = 0; k < spec.clusters; ++k) {
        const Eigen::RowVectorXd center = radius * directions.row(k);
        for (int i = 0; i < spec.points_per_cluster; ++i, ++row) {
            for (int c = 0; c < spec.dim; ++c) {
                dataset.features(row, c) =
                    center(c) + spec.sigma * engine.gaussian();
            }
            labels[row] = k;
        }
    }
    dataset.labels = std::move(labels);
    min_max_scale_in_place(dataset.features);
    return dataset;
}

// --- batching -------------------------------------------------------------------

std::vector<std::vector<int>> batch_indices(Eigen::Index row_count,
                                            int batch_size, int min_batch,
                                            std::uint64_t seed, int epoch) {
    if (batch_size < 1) {
        throw ConfigError("batch size must be >= 1");
    }
    if (batch_size > row_count) {
        throw ConfigError("batch size exceeds dataset size");
    }
    std::vector<int> order(row_count);
    for (Eigen::Index i = 0; i < row_count; ++i) {
        order[i] = static_cast<int>(i);
    }
    rng::Engine engine(rng::mix(seed, static_cast<std::uint64_t>(epoch)));
    engine.shuffle(order);

    std::vector<std::vector<int>> batches;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop =
            std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        const std::size_t size = stop - start;
        if (size < static_cast<std::size_t>(batch_size) &&
            size < static_cast<std::size_t>(std::max(min_batch, 1))) {
            break; // drop the short remainder
        }
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= m.rows()) {
            throw DimensionError("row index out of range");
        }
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

// --- writers --------------------------------------------------------------------

namespace {

void append_double(std::string& line, double value) {
    char buf[32];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    line.append(buf, result.ptr);
}

} // namespace

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& column_names,
                      const std::vector<int>* labels) {
    if (static_cast<Eigen::Index>(column_names.size()) != m.cols()) {
        throw DimensionError("column name count does not match matrix");
    }
    if (labels != nullptr &&
        static_cast<Eigen::Index>(labels->size()) != m.rows()) {
        throw DimensionError("label count does not match matrix rows");
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError(DataErrorCode::Io, "cannot open for writing: " + path);
    }
    std::string line;
    for (std::size_t c = 0; c < column_names.size(); ++c) {
        if (c > 0) line += ',';
        line += column_names[c];
    }
    if (labels != nullptr) {
        if (!column_names.empty()) line += ',';
        line += "label";
    }
    out << line << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        line.clear();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) line += ',';
            append_double(line, m(r, c));
        }
        if (labels != nullptr) {
            if (m.cols() > 0) line += ',';
            line += std::to_string((*labels)[static_cast<std::size_t>(r)]);
        }
        out << line << '\n';
    }
    if (!out) {
        throw DataError(DataErrorCode::Io, "failed writing: " + path);
    }
}

void write_labels_csv(const std::string& path, const std::vector<int>& labels,
                      const std::string& column_name) {
    std::ofstream out(path);
    if (!out) {
        throw DataError(DataErrorCode::Io, "cannot open for writing: " + path);
    }
    out << column_name << '\n';
    for (int value : labels) {
        out << value << '\n';
    }
    if (!out) {
        throw DataError(DataErrorCode::Io, "failed writing: " + path);
    }
}

} // namespace dac
