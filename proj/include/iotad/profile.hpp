#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iotad/matrix.hpp"

namespace iotad::profile {

struct TimingReport {
    double total_batch_ms = 0.0;  // median over repeats
    double per_sample_us = 0.0;   // 1000 * total_batch_ms / sample_count
    int repeats = 0;
    int warmup_runs = 0;
    std::size_t sample_count = 0;
    std::vector<double> raw_ms;   // one entry per timed repeat, in run order
};

// Peak resident set size around a task. When the kernel lets us reset the
// high-water mark the peak is scoped to the task, otherwise it is the
// process lifetime maximum. Either way it includes harness overhead.
struct PeakRamReport {
    bool supported = false;
    double peak_mb = 0.0;
    double start_mb = 0.0;
    double end_mb = 0.0;
    std::string scope;  // "task", "process-lifetime" or "unsupported"
};

struct ResourceReport {
    std::uint64_t model_size_bytes = 0;
    PeakRamReport peak_ram;
    TimingReport timing;
};

struct Environment {
    std::string os;
    std::string cpu;
    std::string compiler;
    std::string timestamp;  // UTC, ISO-8601
};

// Scores a whole batch. Must be single-threaded and free of I/O.
using BatchScorer = std::function<void(const Matrix&)>;

double median(std::vector<double> values);

// Runs `warmup` untimed passes, then `repeats` timed passes over the batch.
// Requires repeats >= 3, warmup >= 1 and a non-empty batch.
TimingReport time_inference(const BatchScorer& scorer, const Matrix& batch, int repeats, int warmup);

std::uint64_t measure_model_size(std::span<const std::uint8_t> bytes);

PeakRamReport measure_peak_ram(const std::function<void()>& task);

// Current resident set size in MB, or a negative value when unavailable.
double current_rss_mb();

Environment capture_environment();

}  // namespace iotad::profile
