#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotad/dataset.hpp"

namespace iotad::eval {

// Anomaly (label 1) is the positive class.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

inline constexpr const char* kFlagNoPositivePredictions = "no positive predictions";
inline constexpr const char* kFlagNoPositiveTruths = "no positive truths";
inline constexpr const char* kFlagNoNegativeTruths = "no negative truths";

// Percentages in [0, 100]; raw fractions kept alongside to avoid rounding
// ambiguity.
struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy_fraction = 0.0;
    double precision_fraction = 0.0;
    double recall_fraction = 0.0;
    double f1_fraction = 0.0;
    std::vector<std::string> flags;

    bool has_flag(const std::string& flag) const;
};

// Row-normalised confusion matrix. A rate pair is nullopt when its truth row
// is empty.
struct NormalizedConfusion {
    std::optional<double> tpr, fnr;  // anomaly row
    std::optional<double> tnr, fpr;  // normal row
};

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted);

double accuracy(const ConfusionMatrix& cm);
// Degenerate denominators return 0.0; `degenerate`, when given, is set.
double precision(const ConfusionMatrix& cm, bool* degenerate = nullptr);
double recall(const ConfusionMatrix& cm, bool* degenerate = nullptr);
double f1(double precision_percent, double recall_percent);

MetricsReport metrics(const ConfusionMatrix& cm);
NormalizedConfusion normalized_confusion(const ConfusionMatrix& cm);

}  // namespace iotad::eval
