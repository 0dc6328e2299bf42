#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "iotad/pipeline.hpp"

namespace iotad {

enum class ReportFormat { Json, Csv };

inline constexpr const char* kCsvHeader =
    "model,accuracy,precision,recall,f1,inference_ms,model_size_bytes,peak_ram_mb";

// Document layout: run-invariant fields at the top level; timings and RAM
// under "measurements"; host facts under "environment".
nlohmann::json to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const nlohmann::json& doc);
BenchmarkReport load_report(const std::filesystem::path& path);

// The report minus its "measurements" and "environment" blocks. Identical
// configs and seeds give byte-identical dumps of this.
nlohmann::json deterministic_body(const nlohmann::json& report_doc);

// One row per model in kCsvHeader column order.
std::string to_csv(const BenchmarkReport& report);

void emit_report(const BenchmarkReport& report, ReportFormat format, const std::filesystem::path& path);

// Writes metrics_bars.csv (metric,model,value), inference_ms.csv,
// model_size.csv and peak_ram.csv (model,value) under `outdir`.
void emit_plot_data(const BenchmarkReport& report, const std::filesystem::path& outdir);

// Shortest decimal text that round-trips to the same double.
std::string format_number(double value);

}  // namespace iotad
