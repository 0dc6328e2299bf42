#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iotad/matrix.hpp"

namespace iotad {

using Label = std::uint8_t;  // 0 = normal, 1 = anomaly
using Labels = std::vector<Label>;

// Labeled telemetry table. features.rows() == labels.size(),
// features.cols() == feature_names.size().
struct TelemetryFrame {
    std::vector<std::string> feature_names;
    Matrix features;
    Labels labels;

    std::size_t row_count() const noexcept { return labels.size(); }
    std::size_t dimension() const noexcept { return feature_names.size(); }

    // Throws DataError if any structural invariant is broken.
    void validate() const;

    TelemetryFrame select_rows(std::span<const std::size_t> indices) const;

    bool operator==(const TelemetryFrame&) const = default;
};

struct IngestSchema {
    std::vector<std::string> drop_columns{"ts", "date", "time"};
    std::string label_column = "label";
    // Attack category column. Read past, never used as a feature.
    std::string type_column = "type";
    std::set<std::string> label_positive_values{"1"};
};

struct ScalerParams {
    std::vector<double> minimum;
    std::vector<double> maximum;

    std::size_t dimension() const noexcept { return minimum.size(); }
    bool operator==(const ScalerParams&) const = default;
};

struct SyntheticSpec {
    std::size_t normal_count = 2000;
    std::size_t anomaly_count = 200;
    std::size_t dimension = 4;
    double normal_cluster_spread = 1.0;
    double anomaly_box_halfwidth = 6.0;

    void validate() const;
};

TelemetryFrame load_csv(const std::filesystem::path& path, const IngestSchema& schema = {});
TelemetryFrame parse_csv(std::istream& in, const IngestSchema& schema = {});

// Writes columns feature_names..., label; the same layout load_csv reads back.
void write_csv(const TelemetryFrame& frame, std::ostream& out);
void write_csv(const TelemetryFrame& frame, const std::filesystem::path& path);

ScalerParams fit_minmax(const TelemetryFrame& train);

// Constant columns map to 0. Values outside the fitted range are not clamped.
TelemetryFrame apply_minmax(const TelemetryFrame& frame, const ScalerParams& params);
Matrix apply_minmax(const Matrix& features, const ScalerParams& params);

// Seeded shuffle, then the first floor(train_ratio * n) rows go to train.
std::pair<TelemetryFrame, TelemetryFrame> split_train_test(const TelemetryFrame& frame,
                                                           double train_ratio,
                                                           std::uint64_t seed);

TelemetryFrame filter_normal(const TelemetryFrame& frame);

TelemetryFrame generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace iotad
