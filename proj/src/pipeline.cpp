#include "iotad/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include "iotad/errors.hpp"
#include "iotad/rng.hpp"

namespace iotad {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSyntheticSeedStream = 1;

// Re-raises module errors with the failing stage name; the error kind is kept.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(name) + ": " + e.what());
    } catch (const std::bad_alloc&) {
        throw RuntimeError(std::string(name) + ": out of memory");
    }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw ConfigError("unknown config key \"" + where + "." + key + "\"");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field \"" + where + "." + key + "\" has the wrong type");
    }
}

IngestSchema parse_schema(const json& doc) {
    IngestSchema schema;
    read_field(doc, "drop_columns", schema.drop_columns, "input.csv");
    read_field(doc, "label_column", schema.label_column, "input.csv");
    read_field(doc, "type_column", schema.type_column, "input.csv");
    if (doc.contains("label_positive_values")) {
        std::vector<std::string> values;
        read_field(doc, "label_positive_values", values, "input.csv");
        schema.label_positive_values = {values.begin(), values.end()};
    }
    return schema;
}

json model_params_json(const iforest::IsolationForestModel& m) {
    return {{"tree_count", m.params.tree_count},
            {"subsample_size", m.params.subsample_size},
            {"subsample_size_effective", m.subsample_size},
            {"height_limit", m.height_limit()},
            {"contamination", m.params.contamination},
            {"seed", m.params.seed},
            {"threshold", m.threshold}};
}

json model_params_json(const ocsvm::OcSvmModel& m, const ocsvm::FitDiagnostics& diag) {
    json gamma = m.params.gamma ? json(*m.params.gamma) : json("scale");
    return {{"nu", m.params.nu},
            {"gamma", gamma},
            {"gamma_resolved", m.gamma},
            {"tolerance", m.params.tolerance},
            {"max_passes", m.params.max_passes},
            {"max_passes_effective", m.params.max_passes != 0 ? m.params.max_passes : 10ULL * m.train_count},
            {"seed", m.params.seed},
            {"support_vectors", m.alphas.size()},
            {"rho", m.rho},
            {"iterations", diag.iterations},
            {"converged", diag.converged}};
}

void finish_result(ModelResult& result, const TelemetryFrame& eval_frame, const Labels& predicted) {
    result.confusion = eval::confusion(eval_frame.labels, predicted);
    result.metrics = eval::metrics(result.confusion);
    result.rates = eval::normalized_confusion(result.confusion);
    result.resources.model_size_bytes = profile::measure_model_size(result.model_bytes);
}

ModelResult run_iforest(const PreparedData& data, const RunConfig& config) {
    ModelResult result;
    result.name = "iforest";
    iforest::IsolationForestModel model;
    Labels predicted;
    result.resources.peak_ram = profile::measure_peak_ram([&] {
        model = stage("iforest fit", [&] { return iforest::fit_iforest(data.train_normal.features, config.iforest); });
        predicted = stage("iforest classify", [&] { return iforest::classify(model, data.eval.features); });
    });
    Labels sink;
    result.resources.timing = stage("iforest profile", [&] {
        return profile::time_inference([&](const Matrix& batch) { sink = iforest::classify(model, batch); },
                                       data.eval.features, config.repeats, config.warmup);
    });
    result.model_bytes = iforest::serialize(model);
    result.params = model_params_json(model);
    finish_result(result, data.eval, predicted);
    return result;
}

ModelResult run_ocsvm(const PreparedData& data, const RunConfig& config) {
    ModelResult result;
    result.name = "ocsvm";
    ocsvm::OcSvmModel model;
    ocsvm::FitDiagnostics diag;
    Labels predicted;
    result.resources.peak_ram = profile::measure_peak_ram([&] {
        model = stage("ocsvm fit", [&] { return ocsvm::fit_ocsvm(data.train_normal.features, config.ocsvm, &diag); });
        predicted = stage("ocsvm predict", [&] { return ocsvm::predict(model, data.eval.features); });
    });
    Labels sink;
    result.resources.timing = stage("ocsvm profile", [&] {
        return profile::time_inference([&](const Matrix& batch) { sink = ocsvm::predict(model, batch); },
                                       data.eval.features, config.repeats, config.warmup);
    });
    result.model_bytes = ocsvm::serialize(model);
    diag.alphas.clear();
    result.params = model_params_json(model, diag);
    finish_result(result, data.eval, predicted);
    return result;
}

MetricComparison compare_value(const std::string& metric, const std::string& lhs_name, double lhs,
                               const std::string& rhs_name, double rhs, bool higher_is_better) {
    MetricComparison c;
    c.metric = metric;
    c.lhs = lhs;
    c.rhs = rhs;
    c.higher_is_better = higher_is_better;
    c.margin = std::abs(lhs - rhs);
    if (lhs == rhs) c.winner = "tie";
    else if ((lhs > rhs) == higher_is_better) c.winner = lhs_name;
    else c.winner = rhs_name;
    return c;
}

}  // namespace

std::uint64_t RunConfig::synthetic_seed() const {
    if (const auto* synth = std::get_if<SyntheticInput>(&input); synth && synth->seed) return *synth->seed;
    return derive_seed(seed, kSyntheticSeedStream);
}

void RunConfig::override_seed(std::uint64_t new_seed) {
    seed = new_seed;
    iforest.seed = new_seed;
    ocsvm.seed = new_seed;
    if (auto* synth = std::get_if<SyntheticInput>(&input)) synth->seed.reset();
}

ModelSelection parse_model_selection(const std::string& text) {
    if (text == "iforest") return ModelSelection::IForest;
    if (text == "ocsvm") return ModelSelection::OcSvm;
    if (text == "both") return ModelSelection::Both;
    throw ConfigError("model must be one of iforest, ocsvm, both; got \"" + text + "\"");
}

EvalScope parse_eval_scope(const std::string& text) {
    if (text == "test") return EvalScope::Test;
    if (text == "full") return EvalScope::Full;
    throw ConfigError("eval_scope must be test or full; got \"" + text + "\"");
}

std::string to_string(ModelSelection selection) {
    switch (selection) {
        case ModelSelection::IForest: return "iforest";
        case ModelSelection::OcSvm: return "ocsvm";
        case ModelSelection::Both: return "both";
    }
    return "both";
}

std::string to_string(EvalScope scope) { return scope == EvalScope::Test ? "test" : "full"; }

RunConfig parse_config(const json& doc) {
    RunConfig config;
    reject_unknown_keys(doc, {"input", "split", "seed", "eval_scope", "model", "iforest", "ocsvm", "profiling",
                              "output_dir"},
                        "config");
    read_field(doc, "seed", config.seed, "config");
    config.iforest.seed = config.seed;
    config.ocsvm.seed = config.seed;

    if (doc.contains("input")) {
        const json& input = doc.at("input");
        reject_unknown_keys(input, {"csv", "synthetic"}, "input");
        if (input.contains("csv") == input.contains("synthetic")) {
            throw ConfigError("input must name exactly one source: csv or synthetic");
        }
        if (input.contains("csv")) {
            const json& csv = input.at("csv");
            reject_unknown_keys(csv, {"path", "drop_columns", "label_column", "type_column", "label_positive_values"},
                                "input.csv");
            CsvInput in;
            if (!csv.contains("path")) throw ConfigError("input.csv.path is required");
            read_field(csv, "path", in.path, "input.csv");
            in.schema = parse_schema(csv);
            config.input = std::move(in);
        } else {
            const json& syn = input.at("synthetic");
            reject_unknown_keys(syn, {"normal_count", "anomaly_count", "dimension", "normal_cluster_spread",
                                      "anomaly_box_halfwidth", "seed"},
                                "input.synthetic");
            SyntheticInput in;
            read_field(syn, "normal_count", in.spec.normal_count, "input.synthetic");
            read_field(syn, "anomaly_count", in.spec.anomaly_count, "input.synthetic");
            read_field(syn, "dimension", in.spec.dimension, "input.synthetic");
            read_field(syn, "normal_cluster_spread", in.spec.normal_cluster_spread, "input.synthetic");
            read_field(syn, "anomaly_box_halfwidth", in.spec.anomaly_box_halfwidth, "input.synthetic");
            if (syn.contains("seed")) {
                std::uint64_t synth_seed = 0;
                read_field(syn, "seed", synth_seed, "input.synthetic");
                in.seed = synth_seed;
            }
            in.spec.validate();
            config.input = in;
        }
    }

    if (doc.contains("split")) {
        const json& split = doc.at("split");
        reject_unknown_keys(split, {"train_ratio", "shuffle"}, "split");
        read_field(split, "train_ratio", config.train_ratio, "split");
        if (split.contains("shuffle") && split.at("shuffle") != "unstratified") {
            throw ConfigError("split.shuffle supports only \"unstratified\"");
        }
    }
    if (!(config.train_ratio > 0.0 && config.train_ratio < 1.0)) throw ConfigError("split.train_ratio must lie in (0, 1)");

    if (doc.contains("eval_scope")) {
        std::string scope;
        read_field(doc, "eval_scope", scope, "config");
        config.eval_scope = parse_eval_scope(scope);
    }
    if (doc.contains("model")) {
        std::string model;
        read_field(doc, "model", model, "config");
        config.models = parse_model_selection(model);
    }

    if (doc.contains("iforest")) {
        const json& p = doc.at("iforest");
        reject_unknown_keys(p, {"tree_count", "subsample_size", "contamination", "seed"}, "iforest");
        read_field(p, "tree_count", config.iforest.tree_count, "iforest");
        read_field(p, "subsample_size", config.iforest.subsample_size, "iforest");
        read_field(p, "contamination", config.iforest.contamination, "iforest");
        read_field(p, "seed", config.iforest.seed, "iforest");
    }
    config.iforest.validate();

    if (doc.contains("ocsvm")) {
        const json& p = doc.at("ocsvm");
        reject_unknown_keys(p, {"nu", "gamma", "tolerance", "max_passes", "seed"}, "ocsvm");
        read_field(p, "nu", config.ocsvm.nu, "ocsvm");
        if (p.contains("gamma")) {
            const json& g = p.at("gamma");
            if (g.is_string() && g.get<std::string>() == "scale") config.ocsvm.gamma.reset();
            else if (g.is_number()) config.ocsvm.gamma = g.get<double>();
            else throw ConfigError("ocsvm.gamma must be a positive number or \"scale\"");
        }
        read_field(p, "tolerance", config.ocsvm.tolerance, "ocsvm");
        read_field(p, "max_passes", config.ocsvm.max_passes, "ocsvm");
        read_field(p, "seed", config.ocsvm.seed, "ocsvm");
    }
    config.ocsvm.validate();

    if (doc.contains("profiling")) {
        const json& p = doc.at("profiling");
        reject_unknown_keys(p, {"repeats", "warmup"}, "profiling");
        read_field(p, "repeats", config.repeats, "profiling");
        read_field(p, "warmup", config.warmup, "profiling");
    }
    if (config.repeats < 3) throw ConfigError("profiling.repeats must be at least 3");
    if (config.warmup < 1) throw ConfigError("profiling.warmup must be at least 1");

    read_field(doc, "output_dir", config.output_dir, "config");
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

json to_json(const RunConfig& config) {
    json input;
    if (const auto* csv = std::get_if<CsvInput>(&config.input)) {
        input["csv"] = {{"path", csv->path},
                        {"drop_columns", csv->schema.drop_columns},
                        {"label_column", csv->schema.label_column},
                        {"type_column", csv->schema.type_column},
                        {"label_positive_values", csv->schema.label_positive_values}};
    } else {
        const auto& syn = std::get<SyntheticInput>(config.input);
        input["synthetic"] = {{"normal_count", syn.spec.normal_count},
                              {"anomaly_count", syn.spec.anomaly_count},
                              {"dimension", syn.spec.dimension},
                              {"normal_cluster_spread", syn.spec.normal_cluster_spread},
                              {"anomaly_box_halfwidth", syn.spec.anomaly_box_halfwidth},
                              {"seed", config.synthetic_seed()}};
    }
    return {{"input", input},
            {"split", {{"train_ratio", config.train_ratio}, {"shuffle", "unstratified"}}},
            {"seed", config.seed},
            {"eval_scope", to_string(config.eval_scope)},
            {"model", to_string(config.models)},
            {"iforest",
             {{"tree_count", config.iforest.tree_count},
              {"subsample_size", config.iforest.subsample_size},
              {"contamination", config.iforest.contamination},
              {"seed", config.iforest.seed}}},
            {"ocsvm",
             {{"nu", config.ocsvm.nu},
              {"gamma", config.ocsvm.gamma ? json(*config.ocsvm.gamma) : json("scale")},
              {"tolerance", config.ocsvm.tolerance},
              {"max_passes", config.ocsvm.max_passes},
              {"seed", config.ocsvm.seed}}},
            {"profiling", {{"repeats", config.repeats}, {"warmup", config.warmup}}},
            {"output_dir", config.output_dir}};
}

const MetricComparison& Comparison::entry(const std::string& metric) const {
    for (const auto& e : entries) {
        if (e.metric == metric) return e;
    }
    throw RuntimeError("comparison has no metric \"" + metric + "\"");
}

const ModelResult* BenchmarkReport::find(const std::string& name) const {
    for (const auto& m : models) {
        if (m.name == name) return &m;
    }
    return nullptr;
}

TelemetryFrame load_input(const RunConfig& config) {
    if (const auto* csv = std::get_if<CsvInput>(&config.input)) return load_csv(csv->path, csv->schema);
    return generate_synthetic(std::get<SyntheticInput>(config.input).spec, config.synthetic_seed());
}

PreparedData prepare_data(const TelemetryFrame& frame, const RunConfig& config) {
    PreparedData out;
    out.total_rows = frame.row_count();
    auto [train, test] = stage("split", [&] { return split_train_test(frame, config.train_ratio, config.seed); });
    out.train_rows = train.row_count();
    const TelemetryFrame normal = stage("filter", [&] { return filter_normal(train); });
    out.scaler = stage("scale", [&] { return fit_minmax(normal); });
    out.train_normal = apply_minmax(normal, out.scaler);
    out.eval = apply_minmax(config.eval_scope == EvalScope::Test ? test : frame, out.scaler);
    if (out.eval.row_count() == 0) throw DataError("split: evaluation set is empty");
    return out;
}

BenchmarkReport run_pipeline(const RunConfig& config) {
    BenchmarkReport report;
    report.config = to_json(config);
    report.environment = profile::capture_environment();

    const TelemetryFrame frame = stage("load", [&] {
        TelemetryFrame f = load_input(config);
        f.validate();
        return f;
    });
    const PreparedData data = prepare_data(frame, config);

    report.data.total_rows = data.total_rows;
    report.data.train_rows = data.train_rows;
    report.data.train_normal_rows = data.train_normal.row_count();
    report.data.eval_rows = data.eval.row_count();
    for (Label l : data.eval.labels) report.data.eval_anomalies += l;
    report.data.feature_names = frame.feature_names;
    report.data.scaler = data.scaler;

    if (config.models != ModelSelection::OcSvm) report.models.push_back(run_iforest(data, config));
    if (config.models != ModelSelection::IForest) report.models.push_back(run_ocsvm(data, config));
    if (report.models.size() == 2) report.comparison = compare_models(report);
    return report;
}

Comparison compare_models(const ModelResult& lhs, const ModelResult& rhs) {
    Comparison c;
    c.lhs_model = lhs.name;
    c.rhs_model = rhs.name;
    const auto add = [&](const std::string& metric, double l, double r, bool higher_is_better) {
        c.entries.push_back(compare_value(metric, lhs.name, l, rhs.name, r, higher_is_better));
    };
    add("accuracy", lhs.metrics.accuracy, rhs.metrics.accuracy, true);
    add("precision", lhs.metrics.precision, rhs.metrics.precision, true);
    add("recall", lhs.metrics.recall, rhs.metrics.recall, true);
    add("f1", lhs.metrics.f1, rhs.metrics.f1, true);
    add("model_size_bytes", static_cast<double>(lhs.resources.model_size_bytes),
        static_cast<double>(rhs.resources.model_size_bytes), false);
    add("inference_ms", lhs.resources.timing.total_batch_ms, rhs.resources.timing.total_batch_ms, false);
    if (lhs.resources.peak_ram.supported && rhs.resources.peak_ram.supported) {
        add("peak_ram_mb", lhs.resources.peak_ram.peak_mb, rhs.resources.peak_ram.peak_mb, false);
    }
    return c;
}

Comparison compare_models(const BenchmarkReport& report) {
    if (report.models.size() != 2) {
        throw ConfigError("comparison needs exactly two models, report has " + std::to_string(report.models.size()));
    }
    return compare_models(report.models[0], report.models[1]);
}

}  // namespace iotad
