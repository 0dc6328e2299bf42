#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "iotad/dataset.hpp"
#include "iotad/eval.hpp"
#include "iotad/iforest.hpp"
#include "iotad/ocsvm.hpp"
#include "iotad/profile.hpp"

namespace iotad {

enum class ModelSelection { IForest, OcSvm, Both };
enum class EvalScope { Test, Full };

struct CsvInput {
    std::string path;
    IngestSchema schema;
};

struct SyntheticInput {
    SyntheticSpec spec;
    std::optional<std::uint64_t> seed;  // defaults to a stream derived from RunConfig::seed
};

struct RunConfig {
    std::variant<CsvInput, SyntheticInput> input = SyntheticInput{};
    double train_ratio = 0.7;
    std::uint64_t seed = 42;
    EvalScope eval_scope = EvalScope::Test;
    ModelSelection models = ModelSelection::Both;
    iforest::IForestParams iforest;
    ocsvm::OcSvmParams ocsvm;
    int repeats = 5;
    int warmup = 1;
    std::string output_dir = "out";

    std::uint64_t synthetic_seed() const;
    // Sets the run seed and every model seed.
    void override_seed(std::uint64_t seed);
};

// Accepts a partial document; every missing field takes its default.
// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
// Fully materialised document, parse_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

ModelSelection parse_model_selection(const std::string& text);
EvalScope parse_eval_scope(const std::string& text);
std::string to_string(ModelSelection selection);
std::string to_string(EvalScope scope);

struct DataSummary {
    std::size_t total_rows = 0;
    std::size_t train_rows = 0;
    std::size_t train_normal_rows = 0;
    std::size_t eval_rows = 0;
    std::size_t eval_anomalies = 0;
    std::vector<std::string> feature_names;
    ScalerParams scaler;
};

struct ModelResult {
    std::string name;            // "iforest" or "ocsvm"
    nlohmann::json params;       // resolved parameters and fit facts
    eval::ConfusionMatrix confusion;
    eval::MetricsReport metrics;
    eval::NormalizedConfusion rates;
    profile::ResourceReport resources;
    std::vector<std::uint8_t> model_bytes;  // serialized artifact; not part of the report document
};

struct MetricComparison {
    std::string metric;
    double lhs = 0.0;
    double rhs = 0.0;
    bool higher_is_better = true;
    std::string winner;  // a model name or "tie"
    double margin = 0.0; // |lhs - rhs|
};

struct Comparison {
    std::string lhs_model;
    std::string rhs_model;
    std::vector<MetricComparison> entries;

    const MetricComparison& entry(const std::string& metric) const;
};

inline constexpr const char* kReportSchemaVersion = "iotad.report/1";

struct BenchmarkReport {
    std::string schema_version = kReportSchemaVersion;
    nlohmann::json config;
    DataSummary data;
    std::vector<ModelResult> models;
    std::optional<Comparison> comparison;
    profile::Environment environment;

    const ModelResult* find(const std::string& name) const;
};

// Scaled, training-ready data. The scaler is fitted on the normal-only
// training rows and applied unchanged to the evaluation rows.
struct PreparedData {
    TelemetryFrame train_normal;
    TelemetryFrame eval;
    ScalerParams scaler;
    std::size_t total_rows = 0;
    std::size_t train_rows = 0;
};

TelemetryFrame load_input(const RunConfig& config);
PreparedData prepare_data(const TelemetryFrame& frame, const RunConfig& config);

BenchmarkReport run_pipeline(const RunConfig& config);

// Per-metric winners: accuracy, precision, recall and f1 are higher-better;
// inference_ms, model_size_bytes and peak_ram_mb lower-better.
Comparison compare_models(const ModelResult& lhs, const ModelResult& rhs);
// Requires exactly two models.
Comparison compare_models(const BenchmarkReport& report);

}  // namespace iotad
