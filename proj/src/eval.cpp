#include "iotad/eval.hpp"

#include <algorithm>
#include <string>

#include "iotad/errors.hpp"

namespace iotad::eval {

bool MetricsReport::has_flag(const std::string& flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.size() != predicted.size()) {
        throw DataError("confusion: length mismatch (" + std::to_string(truth.size()) + " truths, " +
                        std::to_string(predicted.size()) + " predictions)");
    }
    if (truth.empty()) throw DataError("confusion: empty input");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] != 0;
        const bool p = predicted[i] != 0;
        if (t && p) ++cm.tp;
        else if (!t && !p) ++cm.tn;
        else if (p) ++cm.fp;
        else ++cm.fn;
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("accuracy of an empty confusion matrix");
    return 100.0 * static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double precision(const ConfusionMatrix& cm, bool* degenerate) {
    const std::uint64_t denom = cm.tp + cm.fp;
    if (degenerate) *degenerate = denom == 0;
    return denom == 0 ? 0.0 : 100.0 * static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double recall(const ConfusionMatrix& cm, bool* degenerate) {
    const std::uint64_t denom = cm.tp + cm.fn;
    if (degenerate) *degenerate = denom == 0;
    return denom == 0 ? 0.0 : 100.0 * static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double f1(double precision_percent, double recall_percent) {
    const double sum = precision_percent + recall_percent;
    return sum > 0.0 ? 2.0 * precision_percent * recall_percent / sum : 0.0;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    bool no_predictions = false, no_truths = false;
    r.accuracy = accuracy(cm);
    r.precision = precision(cm, &no_predictions);
    r.recall = recall(cm, &no_truths);
    r.f1 = f1(r.precision, r.recall);
    r.accuracy_fraction = r.accuracy / 100.0;
    r.precision_fraction = r.precision / 100.0;
    r.recall_fraction = r.recall / 100.0;
    r.f1_fraction = r.f1 / 100.0;
    if (no_predictions) r.flags.emplace_back(kFlagNoPositivePredictions);
    if (no_truths) r.flags.emplace_back(kFlagNoPositiveTruths);
    if (cm.tn + cm.fp == 0) r.flags.emplace_back(kFlagNoNegativeTruths);
    return r;
}

NormalizedConfusion normalized_confusion(const ConfusionMatrix& cm) {
    NormalizedConfusion out;
    if (const auto pos = cm.tp + cm.fn; pos > 0) {
        out.tpr = static_cast<double>(cm.tp) / static_cast<double>(pos);
        out.fnr = static_cast<double>(cm.fn) / static_cast<double>(pos);
    }
    if (const auto neg = cm.tn + cm.fp; neg > 0) {
        out.tnr = static_cast<double>(cm.tn) / static_cast<double>(neg);
        out.fpr = static_cast<double>(cm.fp) / static_cast<double>(neg);
    }
    return out;
}

}  // namespace iotad::eval
