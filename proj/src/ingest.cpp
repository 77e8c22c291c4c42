#include "grip/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>

#include "grip/error.hpp"

namespace grip::ingest {

namespace {

std::vector<std::string> split_record(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

double mean_of(const Eigen::Ref<const Vector>& v) { return v.sum() / static_cast<double>(v.size()); }

// Population standard deviation.
double sd_of(const Eigen::Ref<const Vector>& v) {
    const double m = mean_of(v);
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size()));
}

void standardize_in_place(Eigen::Ref<Vector> v) {
    const double m = mean_of(v);
    const double sd = sd_of(v);
    v = (v.array() - m) / (sd + kStdGuard);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Most frequent value; ties resolve to the smallest.
template <typename T>
T mode_of(const std::vector<T>& v) {
    std::map<T, std::size_t> counts;
    for (const auto& x : v) ++counts[x];
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

void check_names(const Matrix& x, const std::vector<std::string>& names) {
    if (static_cast<Index>(names.size()) != x.cols())
        throw Error(ErrorCode::LengthMismatch, "one name per column is required");
}

Design keep_columns(const Matrix& x, const std::vector<std::string>& names, const std::vector<std::size_t>& keep) {
    Design d;
    d.x.resize(x.rows(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        d.x.col(static_cast<Index>(k)) = x.col(static_cast<Index>(keep[k]));
        d.names.push_back(names[keep[k]]);
    }
    return d;
}

}  // namespace

TabularDataset::TabularDataset(std::vector<Column> columns) {
    for (auto& c : columns) add(std::move(c));
}

void TabularDataset::add(Column c) {
    if (c.kind == ColumnKind::categorical ? !c.numbers.empty() : !c.labels.empty())
        throw Error(ErrorCode::InvalidArgument, "column " + c.name + " mixes numeric and label cells");
    if (c.kind == ColumnKind::binary)
        for (const auto& v : c.numbers)
            if (v && *v != 0.0 && *v != 1.0)
                throw Error(ErrorCode::NotBinary, "binary column " + c.name + " holds a value outside {0,1}");
    if (columns_.empty()) {
        rows_ = c.size();
    } else if (c.size() != rows_) {
        throw Error(ErrorCode::LengthMismatch, "column " + c.name + " has " + std::to_string(c.size()) +
                                                   " rows, expected " + std::to_string(rows_));
    }
    columns_.push_back(std::move(c));
}

TabularDataset read_csv(std::istream& in, const CsvOptions& opts) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::EmptyDataset, "CSV input is empty");
    std::vector<std::string> header = split_record(line, opts.delimiter);
    for (auto& h : header) h = trim(h);
    const std::size_t p = header.size();

    std::vector<std::vector<std::string>> cells(p);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_record(line, opts.delimiter);
        if (fields.size() != p)
            throw Error(ErrorCode::LengthMismatch, "line " + std::to_string(lineno) + " has " +
                                                       std::to_string(fields.size()) + " fields, expected " +
                                                       std::to_string(p));
        for (std::size_t j = 0; j < p; ++j) cells[j].push_back(trim(fields[j]));
    }

    TabularDataset t;
    for (std::size_t j = 0; j < p; ++j) {
        Column c;
        c.name = header[j];
        std::vector<std::optional<double>> parsed;
        bool numeric = true;
        for (const auto& s : cells[j]) {
            if (s.empty() || s == opts.missing) {
                parsed.emplace_back();
                continue;
            }
            auto v = parse_double(s);
            if (!v) {
                numeric = false;
                break;
            }
            parsed.push_back(v);
        }
        if (numeric) {
            const bool binary = opts.detect_binary &&
                                std::any_of(parsed.begin(), parsed.end(), [](const auto& v) { return v.has_value(); }) &&
                                std::all_of(parsed.begin(), parsed.end(),
                                            [](const auto& v) { return !v || *v == 0.0 || *v == 1.0; });
            c.kind = binary ? ColumnKind::binary : ColumnKind::numeric;
            c.numbers = std::move(parsed);
        } else {
            c.kind = ColumnKind::categorical;
            for (const auto& s : cells[j])
                c.labels.push_back(s.empty() || s == opts.missing ? std::nullopt : std::optional<std::string>(s));
        }
        t.add(std::move(c));
    }
    return t;
}

TabularDataset read_csv_file(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    return read_csv(in, opts);
}

TabularDataset select_rows(const TabularDataset& t, const std::vector<std::size_t>& rows) {
    TabularDataset out;
    for (const auto& c : t.columns()) {
        Column k;
        k.name = c.name;
        k.kind = c.kind;
        for (auto r : rows) {
            if (r >= t.rows()) throw Error(ErrorCode::InvalidArgument, "row index out of range");
            if (c.kind == ColumnKind::categorical)
                k.labels.push_back(c.labels[r]);
            else
                k.numbers.push_back(c.numbers[r]);
        }
        out.add(std::move(k));
    }
    return out;
}

Design numeric_design(const TabularDataset& t) {
    if (t.columns().empty() || t.rows() == 0) throw Error(ErrorCode::EmptyDataset, "dataset has no cells");
    Design d;
    d.x.resize(static_cast<Index>(t.rows()), static_cast<Index>(t.columns().size()));
    for (std::size_t j = 0; j < t.columns().size(); ++j) {
        const auto& c = t.columns()[j];
        if (c.kind == ColumnKind::categorical)
            throw Error(ErrorCode::InvalidArgument, "column " + c.name + " is not numeric");
        for (std::size_t i = 0; i < t.rows(); ++i) {
            if (!c.numbers[i])
                throw Error(ErrorCode::InvalidArgument,
                            "column " + c.name + " has a missing value at row " + std::to_string(i + 1));
            d.x(static_cast<Index>(i), static_cast<Index>(j)) = *c.numbers[i];
        }
        d.names.push_back(c.name);
    }
    return d;
}

ResponseColumn response_column(const TabularDataset& t, const std::string& name) {
    if (t.columns().empty()) throw Error(ErrorCode::EmptyDataset, "response file has no columns");
    const Column* col = &t.columns().front();
    if (!name.empty()) {
        auto it = std::find_if(t.columns().begin(), t.columns().end(),
                               [&](const Column& c) { return c.name == name; });
        if (it == t.columns().end()) throw Error(ErrorCode::InvalidArgument, "no column named " + name);
        col = &*it;
    }
    if (col->kind == ColumnKind::categorical)
        throw Error(ErrorCode::InvalidArgument, "response column " + col->name + " is not numeric");
    ResponseColumn r;
    std::vector<double> values;
    for (std::size_t i = 0; i < col->numbers.size(); ++i) {
        if (!col->numbers[i]) continue;
        r.kept_rows.push_back(i);
        values.push_back(*col->numbers[i]);
    }
    r.y = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    return r;
}

Design preprocess_mixed(const TabularDataset& t) {
    const std::size_t n = t.rows();
    if (t.columns().empty() || n < 2) throw Error(ErrorCode::EmptyDataset, "need at least two rows and one column");

    std::vector<Vector> cols;
    Design d;
    for (const auto& c : t.columns()) {
        if (c.kind == ColumnKind::categorical) {
            std::vector<std::string> seen;
            for (const auto& l : c.labels)
                if (l) seen.push_back(*l);
            if (seen.empty()) throw Error(ErrorCode::EmptyDataset, "column " + c.name + " has no observed values");
            const std::string fill = mode_of(seen);
            std::sort(seen.begin(), seen.end());
            seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
            for (const auto& level : seen) {
                Vector v(static_cast<Index>(n));
                for (std::size_t i = 0; i < n; ++i)
                    v(static_cast<Index>(i)) = c.labels[i].value_or(fill) == level ? 1.0 : 0.0;
                cols.push_back(std::move(v));
                d.names.push_back(c.name + "=" + level);
            }
            continue;
        }
        std::vector<double> seen;
        for (const auto& v : c.numbers)
            if (v) seen.push_back(*v);
        if (seen.empty()) throw Error(ErrorCode::EmptyDataset, "column " + c.name + " has no observed values");
        const double fill = c.kind == ColumnKind::binary ? mode_of(seen) : median_of(seen);
        Vector v(static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) v(static_cast<Index>(i)) = c.numbers[i].value_or(fill);
        if (c.kind == ColumnKind::numeric) standardize_in_place(v);
        cols.push_back(std::move(v));
        d.names.push_back(c.name);
    }

    d.x.resize(static_cast<Index>(n), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        standardize_in_place(cols[j]);
        d.x.col(static_cast<Index>(j)) = cols[j];
    }
    return d;
}

Matrix correlation(const Matrix& x) {
    const Index p = x.cols();
    Matrix centered = x.rowwise() - x.colwise().mean();
    Vector norms = centered.colwise().norm().transpose();
    for (Index j = 0; j < p; ++j)
        if (norms(j) > 0.0) centered.col(j) /= norms(j);
    Matrix r = centered.transpose() * centered;
    for (Index j = 0; j < p; ++j) {
        if (norms(j) == 0.0) {
            r.row(j).setZero();
            r.col(j).setZero();
        }
    }
    return r;
}

Dedup dedup_features(const Matrix& x, const std::vector<std::string>& names, double threshold) {
    check_names(x, names);
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "dedup threshold must lie in (0, 1]");
    const Matrix r = correlation(x);
    constexpr double kExactTol = 1e-12;
    std::vector<std::size_t> kept;
    Dedup out;
    for (Index j = 0; j < x.cols(); ++j) {
        bool redundant = false;
        for (auto k : kept) {
            const double c = std::abs(r(j, static_cast<Index>(k)));
            if (threshold >= 1.0 ? c >= 1.0 - kExactTol : c > threshold) {
                redundant = true;
                break;
            }
        }
        if (redundant)
            out.dropped.push_back(names[static_cast<std::size_t>(j)]);
        else
            kept.push_back(static_cast<std::size_t>(j));
    }
    out.design = keep_columns(x, names, kept);
    return out;
}

Clustering cluster_representatives(const Matrix& x, const std::vector<std::string>& names, double threshold) {
    check_names(x, names);
    if (!(threshold > 0.0 && threshold < 1.0))
        throw Error(ErrorCode::InvalidArgument, "cluster threshold must lie in (0, 1)");
    const Index p = x.cols();
    const double cut = 1.0 - threshold;

    // Cluster-to-cluster complete-linkage distances, updated by the
    // Lance-Williams rule d(k, i∪j) = max(d(k, i), d(k, j)).
    Matrix dist = 1.0 - correlation(x).array().abs();
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(p));
    std::vector<bool> alive(static_cast<std::size_t>(p), true);
    for (Index j = 0; j < p; ++j) members[static_cast<std::size_t>(j)] = {static_cast<std::size_t>(j)};

    for (;;) {
        double best = std::numeric_limits<double>::infinity();
        Index bi = -1, bj = -1;
        for (Index i = 0; i < p; ++i) {
            if (!alive[static_cast<std::size_t>(i)]) continue;
            for (Index j = i + 1; j < p; ++j) {
                if (!alive[static_cast<std::size_t>(j)]) continue;
                if (dist(i, j) < best) {
                    best = dist(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi < 0 || !(best < cut)) break;
        for (Index k = 0; k < p; ++k) {
            const double merged = std::max(dist(bi, k), dist(bj, k));
            dist(bi, k) = merged;
            dist(k, bi) = merged;
        }
        auto& into = members[static_cast<std::size_t>(bi)];
        const auto& from = members[static_cast<std::size_t>(bj)];
        into.insert(into.end(), from.begin(), from.end());
        std::sort(into.begin(), into.end());
        alive[static_cast<std::size_t>(bj)] = false;
    }

    Vector variance(p);
    for (Index j = 0; j < p; ++j) {
        const double m = x.col(j).mean();
        variance(j) = (x.col(j).array() - m).square().sum();
    }

    // Surviving slots are indexed by their smallest member, so iterating in
    // slot order numbers clusters by first column.
    Clustering out;
    out.cluster_of.assign(static_cast<std::size_t>(p), -1);
    for (Index i = 0; i < p; ++i) {
        if (!alive[static_cast<std::size_t>(i)]) continue;
        const auto& m = members[static_cast<std::size_t>(i)];
        const int id = static_cast<int>(out.representative.size());
        std::size_t rep = m.front();
        for (auto j : m) {
            out.cluster_of[j] = id;
            if (variance(static_cast<Index>(j)) > variance(static_cast<Index>(rep))) rep = j;
        }
        out.representative.push_back(rep);
    }
    out.design = keep_columns(x, names, out.representative);
    return out;
}

Design filter_binary_design(const Matrix& x, const std::vector<std::string>& names, int min_count) {
    check_names(x, names);
    if (!(x.array() == 0.0 || x.array() == 1.0).all())
        throw Error(ErrorCode::NotBinary, "binary design holds a value outside {0,1}");
    std::vector<std::size_t> kept;
    for (Index j = 0; j < x.cols(); ++j) {
        if (x.col(j).sum() < static_cast<double>(min_count)) continue;
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return x.col(static_cast<Index>(k)) == x.col(j);
        });
        if (!duplicate) kept.push_back(static_cast<std::size_t>(j));
    }
    return keep_columns(x, names, kept);
}

Vector transform_response(const Vector& y_raw, bool log_transform) {
    if (y_raw.size() == 0) throw Error(ErrorCode::EmptyDataset, "empty response");
    Vector y = y_raw;
    if (log_transform) {
        for (Index i = 0; i < y.size(); ++i) {
            if (!(y(i) > 0.0))
                throw Error(ErrorCode::NonPositiveForLog,
                            "response value " + std::to_string(y(i)) + " at row " + std::to_string(i + 1) +
                                " is not positive");
        }
        y = y.array().log();
    }
    standardize_in_place(y);
    return y;
}

}  // namespace grip::ingest
