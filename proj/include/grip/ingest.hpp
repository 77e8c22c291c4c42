#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "grip/types.hpp"

namespace grip::ingest {

enum class ColumnKind { numeric, categorical, binary };

// One raw column. Numeric and binary cells are parsed values; categorical
// cells keep their text. A missing cell is std::nullopt.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<std::optional<double>> numbers;
    std::vector<std::optional<std::string>> labels;

    std::size_t size() const noexcept { return kind == ColumnKind::categorical ? labels.size() : numbers.size(); }
};

class TabularDataset {
public:
    TabularDataset() = default;
    explicit TabularDataset(std::vector<Column> columns);

    std::size_t rows() const noexcept { return rows_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }
    void add(Column c);

private:
    std::vector<Column> columns_;
    std::size_t rows_ = 0;
};

struct CsvOptions {
    char delimiter = ',';
    std::string missing = "NA";  // empty cells are always missing
    // Columns with any unparseable non-missing cell become categorical.
    // Numeric columns whose observed values are all 0/1 become binary.
    bool detect_binary = true;
};

TabularDataset read_csv(std::istream& in, const CsvOptions& opts = {});
TabularDataset read_csv_file(const std::string& path, const CsvOptions& opts = {});

struct Design {
    Matrix x;
    std::vector<std::string> names;
};

// Keeps the given rows, in order.
TabularDataset select_rows(const TabularDataset& t, const std::vector<std::size_t>& rows);

// All columns must be numeric or binary with no missing cells.
Design numeric_design(const TabularDataset& t);

struct ResponseColumn {
    Vector y;
    std::vector<std::size_t> kept_rows;  // rows with an observed response
};

// Named numeric column (first column when `name` is empty); missing rows
// are dropped.
ResponseColumn response_column(const TabularDataset& t, const std::string& name = {});

inline constexpr double kStdGuard = 1e-8;

/// Numeric: median imputation, then (x − mean)/sd. Categorical: mode
/// imputation, then one column per level ("name=level", levels sorted).
/// Binary columns pass through with mode imputation. A final feature-wise
/// standardization uses sd + 1e-8 so constant columns become zeros.
Design preprocess_mixed(const TabularDataset& t);

struct Dedup {
    Design design;
    std::vector<std::string> dropped;
};

/// Greedy left-to-right scan: a column is dropped when |corr| with any kept
/// earlier column exceeds `threshold` (or is within 1e-12 of 1 when the
/// threshold is 1).
Dedup dedup_features(const Matrix& x, const std::vector<std::string>& names, double threshold = 0.98);

struct Clustering {
    Design design;
    std::vector<int> cluster_of;           // per input column
    std::vector<std::size_t> representative;  // input column index per cluster
};

/// Complete-linkage agglomerative clustering on d = 1 − |corr|, cut at
/// 1 − threshold. Each cluster keeps its largest-variance column, lowest
/// index on ties.
Clustering cluster_representatives(const Matrix& x, const std::vector<std::string>& names,
                                   double threshold = 0.90);

// Drops columns with fewer than `min_count` ones and exact duplicates
// (keeping the first).
Design filter_binary_design(const Matrix& x, const std::vector<std::string>& names, int min_count = 3);

// Optional log, then (y − mean)/(sd + 1e-8).
Vector transform_response(const Vector& y_raw, bool log_transform);

// Pairwise Pearson correlation; zero-variance columns correlate 0 with all.
Matrix correlation(const Matrix& x);

}  // namespace grip::ingest
