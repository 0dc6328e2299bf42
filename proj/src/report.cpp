#include "iotad/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "iotad/errors.hpp"

namespace iotad {

using nlohmann::json;

namespace {

bool is_volatile_metric(const std::string& metric) { return metric == "inference_ms" || metric == "peak_ram_mb"; }

json optional_rate(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_rate(const json& v) {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

json comparison_entry_json(const MetricComparison& e) {
    return {{"metric", e.metric},   {"lhs", e.lhs},       {"rhs", e.rhs},
            {"higher_is_better", e.higher_is_better}, {"winner", e.winner}, {"margin", e.margin}};
}

MetricComparison comparison_entry_from(const json& j) {
    MetricComparison e;
    e.metric = j.at("metric").get<std::string>();
    e.lhs = j.at("lhs").get<double>();
    e.rhs = j.at("rhs").get<double>();
    e.higher_is_better = j.at("higher_is_better").get<bool>();
    e.winner = j.at("winner").get<std::string>();
    e.margin = j.at("margin").get<double>();
    return e;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << text;
    if (!out) throw RuntimeError("write failed: " + path.string());
}

}  // namespace

std::string format_number(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return {buf, res.ptr};
}

json to_json(const BenchmarkReport& report) {
    json doc;
    doc["schema_version"] = report.schema_version;
    doc["config"] = report.config;
    doc["data"] = {{"total_rows", report.data.total_rows},
                   {"train_rows", report.data.train_rows},
                   {"train_normal_rows", report.data.train_normal_rows},
                   {"eval_rows", report.data.eval_rows},
                   {"eval_anomalies", report.data.eval_anomalies},
                   {"feature_names", report.data.feature_names},
                   {"scaler", {{"minimum", report.data.scaler.minimum}, {"maximum", report.data.scaler.maximum}}}};

    json models = json::array();
    json measured = json::object();
    for (const auto& m : report.models) {
        const auto& r = m.metrics;
        models.push_back(
            {{"name", m.name},
             {"params", m.params},
             {"confusion", {{"tp", m.confusion.tp}, {"tn", m.confusion.tn}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}}},
             {"metrics",
              {{"accuracy", r.accuracy},
               {"precision", r.precision},
               {"recall", r.recall},
               {"f1", r.f1},
               {"fractions",
                {{"accuracy", r.accuracy_fraction},
                 {"precision", r.precision_fraction},
                 {"recall", r.recall_fraction},
                 {"f1", r.f1_fraction}}},
               {"flags", r.flags}}},
             {"normalized_confusion",
              {{"tpr", optional_rate(m.rates.tpr)},
               {"fnr", optional_rate(m.rates.fnr)},
               {"tnr", optional_rate(m.rates.tnr)},
               {"fpr", optional_rate(m.rates.fpr)}}},
             {"model_size_bytes", m.resources.model_size_bytes}});
        const auto& t = m.resources.timing;
        const auto& ram = m.resources.peak_ram;
        measured[m.name] = {{"inference_ms", t.total_batch_ms},
                            {"per_sample_us", t.per_sample_us},
                            {"repeats", t.repeats},
                            {"warmup_runs", t.warmup_runs},
                            {"sample_count", t.sample_count},
                            {"raw_ms", t.raw_ms},
                            {"peak_ram",
                             {{"supported", ram.supported},
                              {"peak_mb", ram.peak_mb},
                              {"start_mb", ram.start_mb},
                              {"end_mb", ram.end_mb},
                              {"scope", ram.scope}}}};
    }
    doc["models"] = models;

    json volatile_entries = json::array();
    if (report.comparison) {
        json entries = json::array();
        for (const auto& e : report.comparison->entries) {
            (is_volatile_metric(e.metric) ? volatile_entries : entries).push_back(comparison_entry_json(e));
        }
        doc["comparison"] = {{"lhs", report.comparison->lhs_model},
                             {"rhs", report.comparison->rhs_model},
                             {"entries", entries}};
    }
    doc["measurements"] = {
        {"models", measured},
        {"comparison", volatile_entries},
        {"note",
         "inference_ms is the median wall time of single-threaded batch scoring; peak RAM is the process "
         "resident-set high-water mark during fit and inference and includes harness overhead"}};
    doc["environment"] = {{"os", report.environment.os},
                          {"cpu", report.environment.cpu},
                          {"compiler", report.environment.compiler},
                          {"timestamp", report.environment.timestamp}};
    return doc;
}

BenchmarkReport report_from_json(const json& doc) {
    try {
        BenchmarkReport report;
        report.schema_version = doc.at("schema_version").get<std::string>();
        if (report.schema_version != kReportSchemaVersion) {
            throw DataError("unsupported report schema \"" + report.schema_version + "\"");
        }
        report.config = doc.at("config");
        const json& data = doc.at("data");
        report.data.total_rows = data.at("total_rows").get<std::size_t>();
        report.data.train_rows = data.at("train_rows").get<std::size_t>();
        report.data.train_normal_rows = data.at("train_normal_rows").get<std::size_t>();
        report.data.eval_rows = data.at("eval_rows").get<std::size_t>();
        report.data.eval_anomalies = data.at("eval_anomalies").get<std::size_t>();
        report.data.feature_names = data.at("feature_names").get<std::vector<std::string>>();
        report.data.scaler.minimum = data.at("scaler").at("minimum").get<std::vector<double>>();
        report.data.scaler.maximum = data.at("scaler").at("maximum").get<std::vector<double>>();

        const json& measured = doc.at("measurements").at("models");
        for (const json& jm : doc.at("models")) {
            ModelResult m;
            m.name = jm.at("name").get<std::string>();
            m.params = jm.at("params");
            const json& cm = jm.at("confusion");
            m.confusion = {cm.at("tp").get<std::uint64_t>(), cm.at("tn").get<std::uint64_t>(),
                           cm.at("fp").get<std::uint64_t>(), cm.at("fn").get<std::uint64_t>()};
            const json& mt = jm.at("metrics");
            m.metrics.accuracy = mt.at("accuracy").get<double>();
            m.metrics.precision = mt.at("precision").get<double>();
            m.metrics.recall = mt.at("recall").get<double>();
            m.metrics.f1 = mt.at("f1").get<double>();
            const json& fr = mt.at("fractions");
            m.metrics.accuracy_fraction = fr.at("accuracy").get<double>();
            m.metrics.precision_fraction = fr.at("precision").get<double>();
            m.metrics.recall_fraction = fr.at("recall").get<double>();
            m.metrics.f1_fraction = fr.at("f1").get<double>();
            m.metrics.flags = mt.at("flags").get<std::vector<std::string>>();
            const json& nc = jm.at("normalized_confusion");
            m.rates.tpr = read_rate(nc.at("tpr"));
            m.rates.fnr = read_rate(nc.at("fnr"));
            m.rates.tnr = read_rate(nc.at("tnr"));
            m.rates.fpr = read_rate(nc.at("fpr"));
            m.resources.model_size_bytes = jm.at("model_size_bytes").get<std::uint64_t>();

            if (measured.contains(m.name)) {
                const json& ms = measured.at(m.name);
                auto& t = m.resources.timing;
                t.total_batch_ms = ms.at("inference_ms").get<double>();
                t.per_sample_us = ms.at("per_sample_us").get<double>();
                t.repeats = ms.at("repeats").get<int>();
                t.warmup_runs = ms.at("warmup_runs").get<int>();
                t.sample_count = ms.at("sample_count").get<std::size_t>();
                t.raw_ms = ms.at("raw_ms").get<std::vector<double>>();
                const json& ram = ms.at("peak_ram");
                auto& r = m.resources.peak_ram;
                r.supported = ram.at("supported").get<bool>();
                r.peak_mb = ram.at("peak_mb").get<double>();
                r.start_mb = ram.at("start_mb").get<double>();
                r.end_mb = ram.at("end_mb").get<double>();
                r.scope = ram.at("scope").get<std::string>();
            }
            report.models.push_back(std::move(m));
        }

        if (doc.contains("comparison")) {
            Comparison c;
            const json& jc = doc.at("comparison");
            c.lhs_model = jc.at("lhs").get<std::string>();
            c.rhs_model = jc.at("rhs").get<std::string>();
            for (const json& e : jc.at("entries")) c.entries.push_back(comparison_entry_from(e));
            for (const json& e : doc.at("measurements").at("comparison")) c.entries.push_back(comparison_entry_from(e));
            report.comparison = std::move(c);
        }

        const json& env = doc.at("environment");
        report.environment.os = env.at("os").get<std::string>();
        report.environment.cpu = env.at("cpu").get<std::string>();
        report.environment.compiler = env.at("compiler").get<std::string>();
        report.environment.timestamp = env.at("timestamp").get<std::string>();
        return report;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed report document: ") + e.what());
    }
}

BenchmarkReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path.string());
    try {
        return report_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw DataError("report parse error in " + path.string() + ": " + e.what());
    }
}

json deterministic_body(const json& report_doc) {
    json body = report_doc;
    body.erase("measurements");
    body.erase("environment");
    return body;
}

std::string to_csv(const BenchmarkReport& report) {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const auto& m : report.models) {
        out << m.name << ',' << format_number(m.metrics.accuracy) << ',' << format_number(m.metrics.precision) << ','
            << format_number(m.metrics.recall) << ',' << format_number(m.metrics.f1) << ','
            << format_number(m.resources.timing.total_batch_ms) << ',' << m.resources.model_size_bytes << ',';
        if (m.resources.peak_ram.supported) out << format_number(m.resources.peak_ram.peak_mb);
        out << '\n';
    }
    return out.str();
}

void emit_report(const BenchmarkReport& report, ReportFormat format, const std::filesystem::path& path) {
    write_file(path, format == ReportFormat::Json ? to_json(report).dump(2) + "\n" : to_csv(report));
}

void emit_plot_data(const BenchmarkReport& report, const std::filesystem::path& outdir) {
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw RuntimeError("cannot create " + outdir.string() + ": " + ec.message());

    std::ostringstream bars;
    bars << "metric,model,value\n";
    const std::pair<const char*, double eval::MetricsReport::*> metrics[] = {
        {"accuracy", &eval::MetricsReport::accuracy},
        {"precision", &eval::MetricsReport::precision},
        {"recall", &eval::MetricsReport::recall},
        {"f1", &eval::MetricsReport::f1}};
    for (const auto& [name, field] : metrics) {
        for (const auto& m : report.models) bars << name << ',' << m.name << ',' << format_number(m.metrics.*field) << '\n';
    }
    write_file(outdir / "metrics_bars.csv", bars.str());

    std::ostringstream inference, size, ram;
    inference << "model,inference_ms\n";
    size << "model,model_size_bytes\n";
    ram << "model,peak_ram_mb\n";
    for (const auto& m : report.models) {
        inference << m.name << ',' << format_number(m.resources.timing.total_batch_ms) << '\n';
        size << m.name << ',' << m.resources.model_size_bytes << '\n';
        ram << m.name << ',';
        if (m.resources.peak_ram.supported) ram << format_number(m.resources.peak_ram.peak_mb);
        ram << '\n';
    }
    write_file(outdir / "inference_ms.csv", inference.str());
    write_file(outdir / "model_size.csv", size.str());
    write_file(outdir / "peak_ram.csv", ram.str());
}

}  // namespace iotad
