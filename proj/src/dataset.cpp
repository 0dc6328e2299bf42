#include "iotad/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>
#include <system_error>

#include "iotad/errors.hpp"
#include "iotad/rng.hpp"

namespace iotad {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Reads one RFC-4180 record; quoted fields may contain commas, doubled quotes
// and line breaks. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
    fields.clear();
    std::string line;
    if (!std::getline(in, line)) return false;
    ++line_no;

    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (true) {
        if (i == line.size()) {
            if (quoted) {
                std::string next;
                if (!std::getline(in, next)) throw DataError("unterminated quoted field at line " + std::to_string(line_no));
                ++line_no;
                field.push_back('\n');
                line = std::move(next);
                i = 0;
                continue;
            }
            break;
        }
        const char c = line[i++];
        if (quoted) {
            if (c == '"') {
                if (i < line.size() && line[i] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    return true;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

void TelemetryFrame::validate() const {
    if (feature_names.empty()) throw DataError("frame has no feature columns");
    if (features.cols() != feature_names.size() && features.rows() != 0) {
        throw DataError("feature matrix width does not match feature names");
    }
    if (features.rows() != labels.size()) throw DataError("feature rows do not match label count");
    for (double v : features.values()) {
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    for (Label l : labels) {
        if (l > 1) throw DataError("label outside {0,1}");
    }
}

TelemetryFrame TelemetryFrame::select_rows(std::span<const std::size_t> indices) const {
    TelemetryFrame out;
    out.feature_names = feature_names;
    out.features = features.select_rows(indices);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels[i]);
    return out;
}

TelemetryFrame parse_csv(std::istream& in, const IngestSchema& schema) {
    std::vector<std::string> header;
    std::size_t line_no = 0;
    if (!read_record(in, header, line_no)) throw DataError("empty CSV: no header row");
    for (auto& h : header) h = std::string(trim(h));
    if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) header.front().erase(0, 3);

    const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
    if (label_it == header.end()) throw DataError("missing label column \"" + schema.label_column + "\"");
    const std::size_t label_index = static_cast<std::size_t>(label_it - header.begin());

    TelemetryFrame frame;
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == label_index || header[c] == schema.type_column) continue;
        if (std::find(schema.drop_columns.begin(), schema.drop_columns.end(), header[c]) !=
            schema.drop_columns.end()) {
            continue;
        }
        kept.push_back(c);
        frame.feature_names.push_back(header[c]);
    }
    if (kept.empty()) throw DataError("no feature columns remain after dropping");
    frame.features.reset_columns(kept.size());

    std::vector<std::string> fields;
    std::vector<double> row(kept.size());
    std::size_t data_row = 0;
    while (read_record(in, fields, line_no)) {
        if (fields.size() == 1 && trim(fields.front()).empty()) continue;  // blank line
        ++data_row;
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(data_row) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        for (std::size_t k = 0; k < kept.size(); ++k) {
            if (!parse_double(fields[kept[k]], row[k])) {
                throw DataError("row " + std::to_string(data_row) + ", column \"" + header[kept[k]] +
                                "\": non-numeric value \"" + fields[kept[k]] + "\"");
            }
        }
        frame.features.append_row(row);
        const std::string label_text(trim(fields[label_index]));
        frame.labels.push_back(schema.label_positive_values.contains(label_text) ? 1 : 0);
    }
    if (frame.row_count() == 0) throw DataError("empty data section: header only");
    return frame;
}

TelemetryFrame load_csv(const std::filesystem::path& path, const IngestSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CSV file: " + path.string());
    return parse_csv(in, schema);
}

void write_csv(const TelemetryFrame& frame, std::ostream& out) {
    for (const auto& name : frame.feature_names) out << name << ',';
    out << "label\n";
    char buf[32];
    for (std::size_t r = 0; r < frame.row_count(); ++r) {
        for (double v : frame.features.row(r)) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out.write(buf, res.ptr - buf);
            out << ',';
        }
        out << static_cast<int>(frame.labels[r]) << '\n';
    }
}

void write_csv(const TelemetryFrame& frame, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write CSV file: " + path.string());
    write_csv(frame, out);
    if (!out) throw RuntimeError("write failed: " + path.string());
}

ScalerParams fit_minmax(const TelemetryFrame& train) {
    if (train.row_count() == 0) throw DataError("cannot fit min-max scaler on an empty frame");
    const std::size_t d = train.features.cols();
    ScalerParams params;
    params.minimum.assign(train.features.row(0).begin(), train.features.row(0).end());
    params.maximum = params.minimum;
    for (std::size_t r = 1; r < train.row_count(); ++r) {
        auto row = train.features.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            params.minimum[j] = std::min(params.minimum[j], row[j]);
            params.maximum[j] = std::max(params.maximum[j], row[j]);
        }
    }
    return params;
}

Matrix apply_minmax(const Matrix& features, const ScalerParams& params) {
    if (features.cols() != params.dimension()) {
        throw DataError("scaler dimension mismatch: frame has " + std::to_string(features.cols()) +
                        " columns, scaler has " + std::to_string(params.dimension()));
    }
    Matrix out = features;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double range = params.maximum[j] - params.minimum[j];
            row[j] = range > 0.0 ? (row[j] - params.minimum[j]) / range : 0.0;
        }
    }
    return out;
}

TelemetryFrame apply_minmax(const TelemetryFrame& frame, const ScalerParams& params) {
    TelemetryFrame out;
    out.feature_names = frame.feature_names;
    out.features = apply_minmax(frame.features, params);
    out.labels = frame.labels;
    return out;
}

std::pair<TelemetryFrame, TelemetryFrame> split_train_test(const TelemetryFrame& frame,
                                                           double train_ratio,
                                                           std::uint64_t seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
        throw ConfigError("train ratio must lie in (0, 1), got " + std::to_string(train_ratio));
    }
    const std::size_t n = frame.row_count();
    if (n < 2) throw DataError("need at least 2 rows to split, got " + std::to_string(n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);

    const auto train_n = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
    const std::span<const std::size_t> all(order);
    return {frame.select_rows(all.first(train_n)), frame.select_rows(all.subspan(train_n))};
}

TelemetryFrame filter_normal(const TelemetryFrame& frame) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < frame.row_count(); ++i) {
        if (frame.labels[i] == 0) keep.push_back(i);
    }
    if (keep.empty()) throw DataError("no normal samples");
    return frame.select_rows(keep);
}

void SyntheticSpec::validate() const {
    if (normal_count == 0) throw ConfigError("synthetic normal_count must be positive");
    if (dimension == 0) throw ConfigError("synthetic dimension must be positive");
    if (!(normal_cluster_spread > 0.0)) throw ConfigError("synthetic normal_cluster_spread must be positive");
    if (!(anomaly_box_halfwidth > 3.0 * normal_cluster_spread)) {
        throw ConfigError("synthetic anomaly_box_halfwidth must exceed 3 x normal_cluster_spread");
    }
}

TelemetryFrame generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t d = spec.dimension;
    TelemetryFrame frame;
    for (std::size_t j = 0; j < d; ++j) frame.feature_names.push_back("f" + std::to_string(j));
    frame.features.reset_columns(d);

    Rng rng(seed);
    std::vector<double> row(d);
    for (std::size_t i = 0; i < spec.normal_count; ++i) {
        for (auto& v : row) v = spec.normal_cluster_spread * rng.normal();
        frame.features.append_row(row);
        frame.labels.push_back(0);
    }
    const double exclusion = 3.0 * spec.normal_cluster_spread;
    const double h = spec.anomaly_box_halfwidth;
    for (std::size_t i = 0; i < spec.anomaly_count; ++i) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& v : row) {
                v = rng.uniform(-h, h);
                norm2 += v * v;
            }
        } while (norm2 <= exclusion * exclusion);
        frame.features.append_row(row);
        frame.labels.push_back(1);
    }
    return frame;
}

}  // namespace iotad
