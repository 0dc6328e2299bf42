#include "iotad/profile.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include "iotad/errors.hpp"

#if defined(__unix__) || defined(__APPLE__)
#include <sys/resource.h>
#include <sys/utsname.h>
#endif

namespace iotad::profile {

namespace {

constexpr double kBytesPerMb = 1024.0 * 1024.0;

// Measured regions never overlap.
std::mutex& measurement_mutex() {
    static std::mutex m;
    return m;
}

// Reads a "Key:   1234 kB" line from /proc/self/status.
std::optional<double> proc_status_mb(const std::string& key) {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + ":", 0) != 0) continue;
        std::istringstream fields(line.substr(key.size() + 1));
        double kb = 0.0;
        if (fields >> kb) return kb * 1024.0 / kBytesPerMb;
    }
    return std::nullopt;
}

bool reset_high_water_mark() {
    std::ofstream out("/proc/self/clear_refs");
    if (!out) return false;
    out << "5";
    out.flush();
    return static_cast<bool>(out);
}

std::optional<double> lifetime_max_rss_mb() {
#if defined(__unix__) || defined(__APPLE__)
    rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) != 0) return std::nullopt;
#if defined(__APPLE__)
    return static_cast<double>(usage.ru_maxrss) / kBytesPerMb;
#else
    return static_cast<double>(usage.ru_maxrss) * 1024.0 / kBytesPerMb;
#endif
#else
    return std::nullopt;
#endif
}

std::string read_cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            if (auto pos = line.find(':'); pos != std::string::npos) {
                auto value = line.substr(pos + 1);
                value.erase(0, value.find_first_not_of(' '));
                return value;
            }
        }
    }
    return "unknown";
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw RuntimeError("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

TimingReport time_inference(const BatchScorer& scorer, const Matrix& batch, int repeats, int warmup) {
    if (repeats < 3) throw ConfigError("profiling repeats must be at least 3");
    if (warmup < 1) throw ConfigError("profiling warmup must be at least 1");
    if (!scorer) throw ConfigError("no scorer given");
    if (batch.rows() == 0) throw DataError("cannot time inference on an empty batch");

    std::lock_guard lock(measurement_mutex());
    for (int i = 0; i < warmup; ++i) scorer(batch);

    TimingReport report;
    report.repeats = repeats;
    report.warmup_runs = warmup;
    report.sample_count = batch.rows();
    report.raw_ms.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto start = std::chrono::steady_clock::now();
        scorer(batch);
        const auto stop = std::chrono::steady_clock::now();
        report.raw_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    report.total_batch_ms = median(report.raw_ms);
    report.per_sample_us = 1000.0 * report.total_batch_ms / static_cast<double>(report.sample_count);
    return report;
}

std::uint64_t measure_model_size(std::span<const std::uint8_t> bytes) { return bytes.size(); }

double current_rss_mb() { return proc_status_mb("VmRSS").value_or(-1.0); }

PeakRamReport measure_peak_ram(const std::function<void()>& task) {
    std::lock_guard lock(measurement_mutex());
    PeakRamReport report;
    const bool scoped = reset_high_water_mark();
    const auto start = proc_status_mb("VmRSS");

    task();

    const auto end = proc_status_mb("VmRSS");
    const auto hwm = scoped ? proc_status_mb("VmHWM") : lifetime_max_rss_mb();
    if (!start || !end || !hwm) {
        report.scope = "unsupported";
        return report;
    }
    report.supported = true;
    report.start_mb = *start;
    report.end_mb = *end;
    report.peak_mb = std::max({*start, *end, *hwm});
    report.scope = scoped ? "task" : "process-lifetime";
    return report;
}

Environment capture_environment() {
    Environment env;
#if defined(__unix__) || defined(__APPLE__)
    utsname info{};
    if (uname(&info) == 0) {
        env.os = std::string(info.sysname) + " " + info.release + " " + info.machine;
    }
#endif
    if (env.os.empty()) env.os = "unknown";
    env.cpu = read_cpu_model();
#if defined(__clang__)
    env.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    env.compiler = "gcc " __VERSION__;
#else
    env.compiler = "unknown";
#endif
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
#if defined(_WIN32)
    gmtime_s(&utc, &now);
#else
    gmtime_r(&now, &utc);
#endif
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    env.timestamp = buf;
    return env;
}

}  // namespace iotad::profile
