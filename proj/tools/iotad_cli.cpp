// iotad: train, evaluate and profile unsupervised IoT telemetry anomaly detectors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "iotad/dataset.hpp"
#include "iotad/errors.hpp"
#include "iotad/pipeline.hpp"
#include "iotad/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

int exit_code(iotad::ErrorKind kind) {
    switch (kind) {
        case iotad::ErrorKind::Config: return kExitConfig;
        case iotad::ErrorKind::Data: return kExitData;
        case iotad::ErrorKind::Runtime: return kExitRuntime;
    }
    return kExitRuntime;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw iotad::RuntimeError("cannot write " + path.string());
}

void print_tables(const iotad::BenchmarkReport& report, std::ostream& out) {
    out << "model      accuracy  precision  recall    f1        inference_ms  model_size_bytes  peak_ram_mb\n";
    for (const auto& m : report.models) {
        char line[256];
        std::snprintf(line, sizeof line, "%-10s %-9.2f %-10.2f %-9.2f %-9.2f %-13.3f %-17llu %.2f\n", m.name.c_str(),
                      m.metrics.accuracy, m.metrics.precision, m.metrics.recall, m.metrics.f1,
                      m.resources.timing.total_batch_ms,
                      static_cast<unsigned long long>(m.resources.model_size_bytes), m.resources.peak_ram.peak_mb);
        out << line;
        for (const auto& flag : m.metrics.flags) out << "  flag: " << flag << '\n';
    }
    if (report.comparison) {
        for (const auto& e : report.comparison->entries) {
            out << "  " << e.metric << ": " << e.winner << " (margin " << iotad::format_number(e.margin) << ")\n";
        }
    }
}

json comparison_json(const iotad::Comparison& c) {
    json entries = json::array();
    for (const auto& e : c.entries) {
        entries.push_back({{"metric", e.metric}, {"lhs", e.lhs}, {"rhs", e.rhs}, {"winner", e.winner},
                           {"margin", e.margin}, {"higher_is_better", e.higher_is_better}});
    }
    return {{"lhs", c.lhs_model}, {"rhs", c.rhs_model}, {"entries", entries}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised anomaly detection benchmark for IoT telemetry"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic telemetry CSV");
    iotad::SyntheticSpec spec;
    std::uint64_t synth_seed = 42;
    std::string synth_out = "synthetic.csv";
    synth->add_option("--normal", spec.normal_count, "Normal rows")->capture_default_str();
    synth->add_option("--anomaly", spec.anomaly_count, "Anomaly rows")->capture_default_str();
    synth->add_option("--dim", spec.dimension, "Feature count")->capture_default_str();
    synth->add_option("--spread", spec.normal_cluster_spread, "Normal cluster standard deviation")->capture_default_str();
    synth->add_option("--halfwidth", spec.anomaly_box_halfwidth, "Anomaly box half-width")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output CSV path")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline and write reports");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir, model, eval_scope;
    run->add_option("--config", config_path, "Config file (JSON); defaults apply when omitted");
    run->add_option("--seed", seed, "Override every seed in the config");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--model", model, "iforest, ocsvm or both")->check(CLI::IsMember({"iforest", "ocsvm", "both"}));
    run->add_option("--eval-scope", eval_scope, "test or full")->check(CLI::IsMember({"test", "full"}));

    // report
    auto* rep = app.add_subcommand("report", "Re-emit tables and plot data from a saved report");
    std::string report_path;
    std::string report_format = "csv";
    std::optional<std::string> report_out;
    rep->add_option("report", report_path, "Saved report.json")->required();
    rep->add_option("--format", report_format, "json, csv or plots")
        ->check(CLI::IsMember({"json", "csv", "plots"}))
        ->capture_default_str();
    rep->add_option("--out", report_out, "Output file (json/csv) or directory (plots); stdout when omitted");

    // compare
    auto* cmp = app.add_subcommand("compare", "Compare models across two saved reports");
    std::string lhs_path, rhs_path;
    std::optional<std::string> compare_out;
    cmp->add_option("lhs", lhs_path, "First report.json")->required();
    cmp->add_option("rhs", rhs_path, "Second report.json")->required();
    cmp->add_option("--out", compare_out, "Write the comparison JSON here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*synth) {
            const auto frame = iotad::generate_synthetic(spec, synth_seed);
            iotad::write_csv(frame, fs::path(synth_out));
            std::cout << "wrote " << frame.row_count() << " rows to " << synth_out << '\n';
            return kExitOk;
        }

        if (*run) {
            iotad::RunConfig config = config_path.empty() ? iotad::RunConfig{} : iotad::load_config(config_path);
            if (seed) config.override_seed(*seed);
            if (out_dir) config.output_dir = *out_dir;
            if (model) config.models = iotad::parse_model_selection(*model);
            if (eval_scope) config.eval_scope = iotad::parse_eval_scope(*eval_scope);

            const auto report = iotad::run_pipeline(config);
            const fs::path dir(config.output_dir);
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) throw iotad::RuntimeError("cannot create " + dir.string() + ": " + ec.message());
            iotad::emit_report(report, iotad::ReportFormat::Json, dir / "report.json");
            iotad::emit_report(report, iotad::ReportFormat::Csv, dir / "report.csv");
            iotad::emit_plot_data(report, dir / "plots");
            for (const auto& m : report.models) {
                write_bytes(dir / (m.name == "iforest" ? "iforest.ifv1" : "ocsvm.osv1"), m.model_bytes);
            }
            print_tables(report, std::cout);
            std::cout << "report written to " << (dir / "report.json").string() << '\n';
            return kExitOk;
        }

        if (*rep) {
            const auto report = iotad::load_report(report_path);
            if (report_format == "plots") {
                iotad::emit_plot_data(report, report_out.value_or("plots"));
            } else if (report_out) {
                iotad::emit_report(report, report_format == "json" ? iotad::ReportFormat::Json : iotad::ReportFormat::Csv,
                                   *report_out);
            } else {
                std::cout << (report_format == "json" ? iotad::to_json(report).dump(2) + "\n" : iotad::to_csv(report));
            }
            return kExitOk;
        }

        if (*cmp) {
            const auto lhs = iotad::load_report(lhs_path);
            const auto rhs = iotad::load_report(rhs_path);
            json result = json::array();
            if (lhs.models.size() == 1 && rhs.models.size() == 1) {
                result.push_back(comparison_json(iotad::compare_models(lhs.models[0], rhs.models[0])));
            } else {
                for (const auto& m : lhs.models) {
                    if (const auto* other = rhs.find(m.name)) {
                        auto a = m, b = *other;
                        a.name = "lhs:" + m.name;
                        b.name = "rhs:" + other->name;
                        result.push_back(comparison_json(iotad::compare_models(a, b)));
                    }
                }
                if (result.empty()) throw iotad::ConfigError("reports share no model to compare");
            }
            const std::string text = result.dump(2) + "\n";
            if (compare_out) {
                std::ofstream(*compare_out) << text;
            } else {
                std::cout << text;
            }
            return kExitOk;
        }
    } catch (const iotad::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
